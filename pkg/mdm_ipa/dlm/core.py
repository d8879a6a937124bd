"""
Conjugate dynamic linear regression for a single node of a multiregression
dynamic model.

Each node ``r`` is regressed on its contemporaneous parents with a random walk
on the coefficients. The state evolution variance is specified through a
discount factor ``delta`` so that ``W*_t = (1 - delta) / delta * C*_{t-1}``,
and the observation variance is learned with a normal-gamma conjugate prior.
All covariances are stored scaled by the unknown observation variance.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from mdm_ipa.util.exceptions import DataError, NumericalError

__all__ = [
    "NodePrior",
    "FilterState",
    "PredictiveSummary",
    "RegressionDesign",
    "FilterRun",
    "filter_step",
    "log_predictive_density",
    "filter_series",
    "batch_lpl",
]

# forecast variances at or below this value are treated as a covariance breakdown
QSTAR_FLOOR = 1e-12


def _frozen_array(values, ndim: int) -> np.ndarray:
    result = np.array(values, dtype=float, ndmin=ndim)
    result.setflags(write=False)
    return result


def _check_delta(delta: float):
    if not (0.0 < delta <= 1.0):
        raise ValueError(f"Discount factor must be in (0, 1], got {delta}.")


@dataclass(frozen=True)
class NodePrior:
    """Normal-gamma prior for one node's regression coefficients.

    Parameters
    ----------
    m0 : np.ndarray
        Prior mean of the coefficients, length ``p``.
    cstar0 : np.ndarray
        Prior covariance scaled by the observation variance, ``p x p``,
        symmetric positive definite.
    n0 : float
        Prior degrees of freedom.
    d0 : float
        Prior sum of squares.

    Examples
    --------
    >>> from mdm_ipa.dlm.core import NodePrior
    >>> prior = NodePrior.weakly_informative(p=2)
    >>> prior.dim
    2
    """

    m0: np.ndarray
    cstar0: np.ndarray
    n0: float
    d0: float

    def __post_init__(self):
        object.__setattr__(self, "m0", _frozen_array(self.m0, 1))
        object.__setattr__(self, "cstar0", _frozen_array(self.cstar0, 2))
        p = len(self.m0)
        if self.cstar0.shape != (p, p):
            raise DataError(
                f"Prior covariance has shape {self.cstar0.shape}, expected {(p, p)}."
            )
        if not np.allclose(self.cstar0, self.cstar0.T):
            raise ValueError("Prior covariance must be symmetric.")
        try:
            np.linalg.cholesky(self.cstar0)
        except np.linalg.LinAlgError:
            raise ValueError("Prior covariance must be positive definite.")
        if self.n0 <= 0 or self.d0 <= 0:
            raise ValueError(
                f"Prior n0 and d0 must be positive, got n0={self.n0}, d0={self.d0}."
            )

    @classmethod
    def weakly_informative(
        cls, p: int, n0: float = 0.001, d0: float = 0.001, c0_scale: float = 3.0, m0=None
    ):
        """The matched prior used for every candidate parent set: zero mean,
        independent coefficients with a shared variance ``c0_scale``."""
        if m0 is None:
            m0 = np.zeros(p)
        return cls(m0=m0, cstar0=c0_scale * np.eye(p), n0=n0, d0=d0)

    @property
    def dim(self) -> int:
        return len(self.m0)

    def initial_state(self) -> "FilterState":
        return FilterState(t=0, m=self.m0, cstar=self.cstar0, n=self.n0, d=self.d0)


@dataclass(frozen=True)
class FilterState:
    """Posterior belief about the coefficients after ``t`` observations."""

    t: int
    m: np.ndarray
    cstar: np.ndarray
    n: float
    d: float

    def __post_init__(self):
        object.__setattr__(self, "m", _frozen_array(self.m, 1))
        object.__setattr__(self, "cstar", _frozen_array(self.cstar, 2))

    @property
    def S(self) -> float:
        """Point estimate of the observation variance."""
        return self.d / self.n

    @property
    def dim(self) -> int:
        return len(self.m)


@dataclass(frozen=True)
class PredictiveSummary:
    """One-step-ahead Student-t forecast of an observation.

    ``f`` is the location, ``Q`` the scale (variance-like), ``dof`` the degrees
    of freedom, ``e`` the forecast error and ``log_density`` the log predictive
    density of the observed value.
    """

    f: float
    Q: float
    dof: float
    e: float
    log_density: float

    @property
    def std_error(self) -> float:
        return self.e / np.sqrt(self.Q)


@dataclass(frozen=True)
class RegressionDesign:
    """Covariate vectors ``F_t`` of a node, one row per time.

    The first column is the intercept and is always 1; the remaining columns
    are the contemporaneous parent observations, optionally followed by the
    node's own lagged value.

    Parameters
    ----------
    covariates : np.ndarray
        ``T x p`` matrix of covariates.
    parents : tuple
        0-based parent node indices in column order.
    lag : int
        1 if the last column is the node's own lagged value, else 0.
    start : int
        0-based index of the first time the design covers.
    """

    covariates: np.ndarray
    parents: tuple = ()
    lag: int = 0
    start: int = 0

    def __post_init__(self):
        covariates = _frozen_array(self.covariates, 2)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "parents", tuple(int(i) for i in self.parents))
        if covariates.shape[0] > 0 and not np.all(covariates[:, 0] == 1.0):
            raise DataError("The first covariate of every time must be the intercept 1.")
        if covariates.shape[1] != 1 + len(self.parents) + self.lag:
            raise DataError(
                f"Design has {covariates.shape[1]} columns, expected "
                f"{1 + len(self.parents) + self.lag}."
            )

    @classmethod
    def from_data(cls, data: np.ndarray, node: int, parents=(), lag: int = 0):
        """Build the design of ``node`` from a ``T x n`` data matrix.

        Parameters
        ----------
        data : np.ndarray
            The observed series, one column per node.
        node : int
            0-based index of the node.
        parents : iterable of int
            0-based parent indices; they are sorted.
        lag : int
            0 or 1. With a lag the design starts at the second time, the first
            observation being the conditioning value.

        Returns
        -------
        design : RegressionDesign
        """
        data = np.asarray(data, dtype=float)
        parents = tuple(sorted(int(i) for i in parents))
        if node in parents:
            raise ValueError(f"Node {node} cannot be its own parent.")
        if lag not in (0, 1):
            raise ValueError(f"Only a lag of 0 or 1 is supported, got {lag}.")
        columns = [np.ones(data.shape[0] - lag)]
        columns += [data[lag:, i] for i in parents]
        if lag:
            columns.append(data[:-1, node])
        return cls(
            covariates=np.column_stack(columns), parents=parents, lag=lag, start=lag
        )

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]

    @property
    def T(self) -> int:
        return self.covariates.shape[0]


@dataclass(frozen=True)
class FilterRun:
    """The filtered states and one-step forecasts of a node over a series."""

    states: tuple
    predictives: tuple
    lpl: float
    delta: float
    start: int = 0
    inflation: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.states)

    @property
    def times(self) -> np.ndarray:
        """0-based time indices of the scored observations."""
        return np.arange(self.start, self.start + self.T)

    @property
    def log_densities(self) -> np.ndarray:
        return np.array([pred.log_density for pred in self.predictives])

    @property
    def forecasts(self) -> np.ndarray:
        return np.array([pred.f for pred in self.predictives])

    @property
    def scales(self) -> np.ndarray:
        return np.array([pred.Q for pred in self.predictives])

    @property
    def errors(self) -> np.ndarray:
        return np.array([pred.e for pred in self.predictives])

    @property
    def std_errors(self) -> np.ndarray:
        return self.errors / np.sqrt(self.scales)

    @property
    def means(self) -> np.ndarray:
        """``T x p`` filtered posterior means."""
        return np.array([state.m for state in self.states])

    @property
    def final_state(self) -> FilterState:
        return self.states[-1]


def log_predictive_density(pred: PredictiveSummary, y: float) -> float:
    """Log density of ``y`` under the Student-t forecast ``pred``.

    Evaluates ``lnG((v+1)/2) - lnG(v/2) - ln(v pi Q)/2 - (v+1)/2 ln(1 + (y-f)^2/(v Q))``.

    Examples
    --------
    >>> from mdm_ipa.dlm.core import PredictiveSummary, log_predictive_density
    >>> pred = PredictiveSummary(f=0.0, Q=2.0, dof=1.0, e=0.0, log_density=0.0)
    >>> round(log_predictive_density(pred, 0.0), 4)
    -1.4913
    """
    if pred.Q <= 0 or pred.dof <= 0:
        raise NumericalError(
            "Predictive scale and degrees of freedom must be positive.",
            report={"Q": pred.Q, "dof": pred.dof},
        )
    return float(stats.t.logpdf(y, df=pred.dof, loc=pred.f, scale=np.sqrt(pred.Q)))


def filter_step(
    state: FilterState, y: float, F, delta: float, inflation: float = 1.0
) -> tuple:
    """Advance the filter by one observation.

    Parameters
    ----------
    state : FilterState
        Posterior at ``t - 1``.
    y : float
        The observation at ``t``.
    F : array-like
        Covariate vector at ``t``.
    delta : float
        Discount factor in (0, 1].
    inflation : float
        Multiplier applied to the prior scaled covariance ``R*_t`` for this
        step only, used to admit a change point.

    Returns
    -------
    state, predictive : FilterState, PredictiveSummary
    """
    _check_delta(delta)
    F = np.asarray(F, dtype=float)
    if not np.isfinite(y) or not np.all(np.isfinite(F)):
        raise DataError(f"Non-finite observation or covariate at t={state.t + 1}.")
    if F.shape != (state.dim,):
        raise DataError(
            f"Covariate vector has length {F.size}, state has dimension {state.dim}."
        )
    a = state.m
    R = state.cstar / delta * inflation
    f = float(F @ a)
    RF = R @ F
    qstar = float(F @ RF) + 1.0
    if qstar <= QSTAR_FLOOR:
        raise NumericalError(
            "Forecast variance is not positive, covariance breakdown.",
            report={"t": state.t + 1, "Qstar": qstar},
        )
    e = y - f
    A = RF / qstar
    m = a + A * e
    C = R - np.outer(A, A) * qstar
    C = (C + C.T) / 2.0
    Q = qstar * state.S
    pred = PredictiveSummary(f=f, Q=Q, dof=state.n, e=e, log_density=0.0)
    pred = PredictiveSummary(
        f=f, Q=Q, dof=state.n, e=e, log_density=log_predictive_density(pred, y)
    )
    new_state = FilterState(
        t=state.t + 1, m=m, cstar=C, n=state.n + 1.0, d=state.d + e**2 / qstar
    )
    return new_state, pred


def filter_series(
    y, design: RegressionDesign, delta: float, prior: NodePrior, inflation=None
) -> FilterRun:
    """Filter a whole series of one node.

    Parameters
    ----------
    y : array-like
        The node's series over the times covered by ``design`` (length ``T``).
        If ``y`` is longer than the design it is aligned by ``design.start``.
    design : RegressionDesign
    delta : float
    prior : NodePrior
    inflation : dict, optional
        Maps 0-based time indices to a covariance inflation factor.

    Returns
    -------
    run : FilterRun
    """
    _check_delta(delta)
    y = np.asarray(y, dtype=float)
    if len(y) == design.T + design.start:
        y = y[design.start :]
    if len(y) == 0:
        raise DataError("Cannot filter an empty series.")
    if len(y) != design.T:
        raise DataError(f"Series has length {len(y)}, design has {design.T} rows.")
    if design.dim != prior.dim:
        raise DataError(
            f"Design dimension {design.dim} does not match prior dimension {prior.dim}."
        )
    inflation = dict(inflation or {})
    state = prior.initial_state()
    states = []
    predictives = []
    for i, (this_y, this_F) in enumerate(zip(y, design.covariates)):
        state, pred = filter_step(
            state, this_y, this_F, delta, inflation.get(design.start + i, 1.0)
        )
        states.append(state)
        predictives.append(pred)
    lpl = float(np.sum([pred.log_density for pred in predictives]))
    return FilterRun(
        states=tuple(states),
        predictives=tuple(predictives),
        lpl=lpl,
        delta=delta,
        start=design.start,
        inflation=inflation,
    )


def batch_lpl(y, covariates, deltas, prior: NodePrior, inflation=None) -> np.ndarray:
    """Log predictive likelihood of many designs over a grid of discount factors.

    All designs share the node series ``y`` and dimension ``p`` and are
    filtered simultaneously for every discount factor.

    Parameters
    ----------
    y : array-like
        Observations, length ``T``.
    covariates : array-like
        ``K x T x p`` stack of designs (a single ``T x p`` design is accepted).
    deltas : array-like
        Discount factors, length ``D``.
    prior : NodePrior
    inflation : array-like, optional
        Length ``T`` multipliers of the prior scaled covariance per step.

    Returns
    -------
    lpl : np.ndarray
        ``K x D`` log predictive likelihoods.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(covariates, dtype=float)
    if X.ndim == 2:
        X = X[np.newaxis]
    K, T, p = X.shape
    if T == 0:
        raise DataError("Cannot filter an empty series.")
    if len(y) != T:
        raise DataError(f"Series has length {len(y)}, designs have {T} rows.")
    if p != prior.dim:
        raise DataError(
            f"Design dimension {p} does not match prior dimension {prior.dim}."
        )
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
        raise DataError("Non-finite observation or covariate.")
    deltas = np.asarray(deltas, dtype=float)
    for this_delta in deltas:
        _check_delta(this_delta)
    step_scale = np.ones(T) if inflation is None else np.asarray(inflation, float)
    D = len(deltas)

    m = np.broadcast_to(prior.m0, (K, D, p)).copy()
    C = np.broadcast_to(prior.cstar0, (K, D, p, p)).copy()
    d = np.full((K, D), prior.d0)
    n = prior.n0
    inv_delta = (1.0 / deltas)[np.newaxis, :, np.newaxis, np.newaxis]

    errors = np.empty((T, K, D))
    scales = np.empty((T, K, D))
    dofs = prior.n0 + np.arange(T, dtype=float)
    for t in range(T):
        F = X[:, t, :]
        R = C * (inv_delta * step_scale[t])
        RF = np.einsum("kdij,kj->kdi", R, F)
        qstar = np.einsum("kdi,ki->kd", RF, F) + 1.0
        if np.any(qstar <= QSTAR_FLOOR):
            raise NumericalError(
                "Forecast variance is not positive, covariance breakdown.",
                report={"t": t + 1, "Qstar": float(qstar.min())},
            )
        e = y[t] - np.einsum("kdi,ki->kd", m, F)
        errors[t] = e
        scales[t] = qstar * d / n
        A = RF / qstar[..., np.newaxis]
        m = m + A * e[..., np.newaxis]
        C = R - A[..., :, np.newaxis] * A[..., np.newaxis, :] * qstar[..., np.newaxis, np.newaxis]
        C = (C + np.swapaxes(C, -1, -2)) / 2.0
        d = d + e**2 / qstar
        n = n + 1.0

    log_dens = stats.t.logpdf(
        errors, df=dofs[:, np.newaxis, np.newaxis], scale=np.sqrt(scales)
    )
    return np.sum(log_dens, axis=0)
