"""
Prequential monitors of fitted models.

* the global monitor compares two whole networks step by step through the
  log predictive densities of the nodes where they differ,
* the parent-child monitor measures the relevance of one parent of a node,
* the node monitor checks the standardised one-step forecast errors of a node
  for serial correlation, drift, changing variance and heavy tails.
"""

from dataclasses import dataclass

import numpy as np
from astropy.table import Table
from scipy import stats

import mdm_ipa
from mdm_ipa import log
from mdm_ipa.diagnostics.embellish import ModelSpec, fit_node
from mdm_ipa.scoring.local_scores import ScoreConfig
from mdm_ipa.util.exceptions import DataError

__all__ = [
    "BayesFactorSeries",
    "MonitorReport",
    "global_monitor",
    "parent_child_monitor",
    "node_monitor",
    "acf",
]

# the cumulative sum of standardised errors flags drift beyond this many sqrt(T)
DRIFT_BAND = 2.5
SKEW_LIMIT = 0.5
KURTOSIS_LIMIT = 1.0
HETEROSCEDASTICITY_PVALUE = 0.01


@dataclass(frozen=True)
class BayesFactorSeries:
    """Per-step log Bayes factors of one model against another.

    Attributes
    ----------
    per_step : np.ndarray
        Log density differences, one per scored time.
    times : np.ndarray
        0-based times of the steps.
    nodes : tuple
        0-based nodes whose terms enter the comparison.
    """

    per_step: np.ndarray
    times: np.ndarray
    nodes: tuple = ()

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.per_step)

    @property
    def final(self) -> float:
        if len(self.per_step) == 0:
            return 0.0
        return float(self.cumulative[-1])

    def to_table(self) -> Table:
        """Plot-ready ``time`` (1-based), ``log_bf`` and ``cumulative`` columns."""
        return Table(
            [self.times + 1, self.per_step, self.cumulative],
            names=["time", "log_bf", "cumulative"],
        )


def _as_mapping(runs) -> dict:
    if isinstance(runs, dict):
        return dict(runs)
    return {this.node: this for this in runs}


def global_monitor(runs_a, runs_b) -> BayesFactorSeries:
    """
    Compare two networks through the log predictive densities of their nodes.

    Only nodes whose log densities differ contribute; with matched priors on
    the shared components these are exactly the nodes where the models differ.

    Parameters
    ----------
    runs_a, runs_b : dict or iterable
        Per-node fits (`~mdm_ipa.dlm.core.FilterRun` or
        `~mdm_ipa.diagnostics.embellish.NodeFit`) keyed by 0-based node, or an
        iterable of ``NodeFit``.

    Returns
    -------
    series : BayesFactorSeries
        ``final`` is ``LPL(A) - LPL(B)``.

    Raises
    ------
    DataError
        If the two models cover different nodes or times.
    """
    runs_a = _as_mapping(runs_a)
    runs_b = _as_mapping(runs_b)
    if set(runs_a) != set(runs_b):
        raise DataError("Both models must cover the same nodes.")
    times = None
    per_step = None
    nodes = []
    for node in sorted(runs_a):
        these_times = np.asarray(runs_a[node].times)
        if not np.array_equal(these_times, runs_b[node].times):
            raise DataError(
                f"Node {node}: models are scored over different times, "
                "refit them from the same start."
            )
        if times is None:
            times = these_times
            per_step = np.zeros(len(times))
        elif not np.array_equal(times, these_times):
            raise DataError("All nodes must be scored over the same times.")
        difference = runs_a[node].log_densities - runs_b[node].log_densities
        if np.any(difference != 0):
            per_step = per_step + difference
            nodes.append(node)
    if times is None:
        raise DataError("Cannot compare empty models.")
    return BayesFactorSeries(per_step=per_step, times=times, nodes=tuple(nodes))


def parent_child_monitor(
    r: int, i: int, data, spec: ModelSpec, cfg: ScoreConfig = None
) -> BayesFactorSeries:
    """
    Log Bayes factors of node ``r``'s parent set against the same set without
    parent ``i``.

    Each side is fitted with its own best discount factor unless the recipe
    fixes one.

    Raises
    ------
    ValueError
        If ``i`` is not a parent of ``r``.
    """
    node_spec = spec.node(r)
    if i not in node_spec.parents:
        raise ValueError(f"Node {i} is not a parent of node {r}.")
    reduced = spec.with_node(r, parents=tuple(p for p in node_spec.parents if p != i))
    full_fit = fit_node(spec, data, r, cfg=cfg)
    reduced_fit = fit_node(reduced, data, r, cfg=cfg)
    series = BayesFactorSeries(
        per_step=full_fit.log_densities - reduced_fit.log_densities,
        times=full_fit.times,
        nodes=(r,),
    )
    log.debug(f"Parent {i + 1} of node {r + 1}: final log BF {series.final:.3f}")
    return series


def acf(values, max_lag: int) -> np.ndarray:
    """Sample autocorrelations at lags ``0..max_lag``.

    >>> acf([1.0, -1.0, 1.0, -1.0], 1)
    array([ 1.  , -0.75])
    """
    values = np.asarray(values, dtype=float)
    centred = values - values.mean()
    denominator = np.sum(centred**2)
    if denominator == 0:
        result = np.zeros(max_lag + 1)
        result[0] = 1.0
        return result
    return np.array(
        [1.0]
        + [np.sum(centred[:-k] * centred[k:]) / denominator for k in range(1, max_lag + 1)]
    )


@dataclass(frozen=True)
class MonitorReport:
    """Checks of a node's standardised one-step forecast errors.

    Attributes
    ----------
    std_errors : np.ndarray
        ``e_t / sqrt(Q_t)`` at every scored time.
    times : np.ndarray
        0-based times.
    acf : np.ndarray
        Autocorrelations at lags ``0..L`` after the burn-in.
    band : float
        The ``2 / sqrt(T)`` autocorrelation band.
    cusum : np.ndarray
        Cumulative sum of ``std_errors``.
    skewness, kurtosis : float
        Sample skewness and excess kurtosis after the burn-in.
    exceedances : int
        Number of lags ``1..L`` outside the band.
    lags : tuple of int
        The lags outside the band, smallest first.
    flags : list of str
        Any of ``"autocorrelation"``, ``"drift"``, ``"heteroscedasticity"``,
        ``"non-normality"``.
    """

    std_errors: np.ndarray
    times: np.ndarray
    acf: np.ndarray
    band: float
    cusum: np.ndarray
    skewness: float
    kurtosis: float
    exceedances: int
    lags: tuple
    flags: list

    def to_dict(self) -> dict:
        return {
            "acf": self.acf,
            "band": self.band,
            "skewness": self.skewness,
            "kurtosis": self.kurtosis,
            "exceedances": self.exceedances,
            "lags": list(self.lags),
            "flags": list(self.flags),
        }

    def to_table(self) -> Table:
        """Plot-ready ``time`` (1-based), ``std_error`` and ``cusum`` columns."""
        return Table(
            [self.times + 1, self.std_errors, self.cusum],
            names=["time", "std_error", "cusum"],
        )


def node_monitor(run, burn_in: int = None) -> MonitorReport:
    """
    Check the standardised one-step forecast errors of a fitted node.

    The first ``burn_in`` errors, dominated by the vague prior, are left out
    of the checks. Flags are raised for

    * autocorrelation: ``|acf[1]|`` outside the ``2 / sqrt(T)`` band, or more
      lags outside it than the 99% binomial quantile at 5% per lag,
    * drift: the cumulative sum leaves ``2.5 sqrt(T)``,
    * heteroscedasticity: squared errors rank-correlate with ``|f_t|``
      (Spearman p below 0.01),
    * non-normality: ``|skewness| >= 0.5`` or ``|excess kurtosis| >= 1``.

    Parameters
    ----------
    run : FilterRun or NodeFit
    burn_in : int
        Defaults to the ``[diagnostics] burn_in`` configuration value.

    Returns
    -------
    report : MonitorReport
    """
    if burn_in is None:
        burn_in = mdm_ipa.config.getint("diagnostics", "burn_in", fallback=10)
    run = getattr(run, "run", run)
    std_errors = run.std_errors
    forecasts = run.forecasts
    T = len(std_errors)
    if T < 20:
        log.warning(f"Only {T} forecast errors, residual checks are unreliable.")
    if T - burn_in < 2:
        burn_in = 0
    segment = std_errors[burn_in:]
    length = len(segment)
    max_lag = max(1, min(20, length // 4))
    correlations = acf(segment, max_lag)
    band = 2.0 / np.sqrt(length)
    lags = tuple(int(k) for k in np.flatnonzero(np.abs(correlations[1:]) > band) + 1)
    exceedances = len(lags)
    seg_cusum = np.cumsum(segment)
    skewness = float(stats.skew(segment))
    kurtosis = float(stats.kurtosis(segment, fisher=True))

    flags = []
    if abs(correlations[1]) > band or exceedances > stats.binom.ppf(0.99, max_lag, 0.05):
        flags.append("autocorrelation")
        log.debug(f"Autocorrelation outside the band at lags {list(lags)}")
    if np.max(np.abs(seg_cusum)) > DRIFT_BAND * np.sqrt(length):
        flags.append("drift")
    if length > 2 and np.ptp(forecasts[burn_in:]) > 0:
        spearman = stats.spearmanr(segment**2, np.abs(forecasts[burn_in:]))
        if spearman.pvalue < HETEROSCEDASTICITY_PVALUE:
            flags.append("heteroscedasticity")
    if abs(skewness) >= SKEW_LIMIT or abs(kurtosis) >= KURTOSIS_LIMIT:
        flags.append("non-normality")
    return MonitorReport(
        std_errors=std_errors,
        times=run.times,
        acf=correlations,
        band=float(band),
        cusum=np.cumsum(std_errors),
        skewness=skewness,
        kurtosis=kurtosis,
        exceedances=exceedances,
        lags=lags,
        flags=flags,
    )
