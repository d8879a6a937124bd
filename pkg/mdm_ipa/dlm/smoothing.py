"""
Retrospective (smoothed) and filtered posterior summaries of a node's
time-varying regression coefficients.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from mdm_ipa.dlm.core import FilterRun

__all__ = ["SmoothedTrajectory", "smooth", "filtered_intervals"]


@dataclass(frozen=True)
class SmoothedTrajectory:
    """Posterior summaries of the coefficients at every time.

    Attributes
    ----------
    means : np.ndarray
        ``T x p`` posterior means.
    cstar : np.ndarray
        ``T x p x p`` posterior covariances scaled by the observation variance.
    scales : np.ndarray
        ``T x p`` marginal Student-t scales (standard-deviation like).
    dof : float
        Degrees of freedom of the marginals.
    level : float
        Probability content of the intervals.
    hpd_lo, hpd_hi : np.ndarray
        ``T x p`` interval bounds.
    times : np.ndarray
        0-based time indices.
    """

    means: np.ndarray
    cstar: np.ndarray
    scales: np.ndarray
    dof: float
    level: float
    hpd_lo: np.ndarray
    hpd_hi: np.ndarray
    times: np.ndarray


def _intervals(means, scales, dof, level):
    if not (0.0 < level < 1.0):
        raise ValueError(f"Interval level must be in (0, 1), got {level}.")
    # symmetric unimodal marginals, so the central interval is the HPD interval
    half_width = stats.t.ppf(0.5 + level / 2.0, df=dof) * scales
    return means - half_width, means + half_width


def smooth(run: FilterRun, delta: float, level: float = 0.95) -> SmoothedTrajectory:
    """Smooth the coefficients of a filtered run backwards in time.

    With an identity evolution and a discount factor the smoothing gain is
    ``B_t = delta`` (divided by any change-point inflation applied at
    ``t + 1``), which gives

    ``a~_t = m_t + B_t (a~_{t+1} - m_t)`` and
    ``R~*_t = (1 - B_t) C*_t + B_t^2 R~*_{t+1}``,

    starting from ``a~_T = m_T`` and ``R~*_T = C*_T``. The marginals are
    Student-t with ``n_T`` degrees of freedom and variance ``S_T R~*_t``.

    Parameters
    ----------
    run : FilterRun
        A run filtered with ``delta``.
    delta : float
    level : float
        Interval probability, in (0, 1).

    Returns
    -------
    trajectory : SmoothedTrajectory
    """
    if not (0.0 < level < 1.0):
        raise ValueError(f"Interval level must be in (0, 1), got {level}.")
    if not np.isclose(run.delta, delta):
        raise ValueError(
            f"Run was filtered with delta={run.delta}, cannot smooth with {delta}."
        )
    m = run.means
    C = np.array([state.cstar for state in run.states])
    T = run.T
    means = np.empty_like(m)
    cstar = np.empty_like(C)
    means[-1] = m[-1]
    cstar[-1] = C[-1]
    for i in range(T - 2, -1, -1):
        gain = delta / run.inflation.get(run.start + i + 1, 1.0)
        means[i] = m[i] + gain * (means[i + 1] - m[i])
        cstar[i] = (1.0 - gain) * C[i] + gain**2 * cstar[i + 1]
    final = run.final_state
    scales = np.sqrt(final.S * np.diagonal(cstar, axis1=1, axis2=2))
    lo, hi = _intervals(means, scales, final.n, level)
    return SmoothedTrajectory(
        means=means,
        cstar=cstar,
        scales=scales,
        dof=final.n,
        level=level,
        hpd_lo=lo,
        hpd_hi=hi,
        times=run.times,
    )


def filtered_intervals(run: FilterRun, level: float = 0.95) -> SmoothedTrajectory:
    """On-line (filtering) posterior means and central intervals.

    At each time the marginal is Student-t with ``n_t`` degrees of freedom
    and variance ``S_t C*_t``.
    """
    means = run.means
    cstar = np.array([state.cstar for state in run.states])
    S = np.array([state.S for state in run.states])
    dof = np.array([state.n for state in run.states])
    scales = np.sqrt(S[:, np.newaxis] * np.diagonal(cstar, axis1=1, axis2=2))
    lo, hi = _intervals(means, scales, dof[:, np.newaxis], level)
    return SmoothedTrajectory(
        means=means,
        cstar=cstar,
        scales=scales,
        dof=float(dof[-1]),
        level=level,
        hpd_lo=lo,
        hpd_hi=hi,
        times=run.times,
    )
