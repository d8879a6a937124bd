"""
Per-node model recipes and their embellishments: own-lag regressors, a log
transform of the node series, change points handled by a one-step increase of
the state variance, and a power variance law for the forecasts.

Every embellished node still has a closed-form log predictive likelihood.
"""

from dataclasses import dataclass, field, replace

import numpy as np

import mdm_ipa
from mdm_ipa import log
from mdm_ipa.dlm.core import (
    FilterRun,
    PredictiveSummary,
    RegressionDesign,
    batch_lpl,
    filter_series,
    log_predictive_density,
)
from mdm_ipa.scoring.local_scores import ScoreConfig, best_grid_index
from mdm_ipa.util.exceptions import DataError

__all__ = [
    "TRANSFORMS",
    "NodeSpec",
    "ModelSpec",
    "NodeFit",
    "fit_node",
    "lag_augment",
    "transformed_predictive",
    "detect_change_points",
    "apply_change_points",
    "heteroscedastic_predictive",
]

TRANSFORMS = ("identity", "log")

# smallest multiplier of a forecast scale under a variance law
VARIANCE_FLOOR = 1e-8


@dataclass(frozen=True)
class NodeSpec:
    """How one node is modelled.

    Parameters
    ----------
    parents : tuple of int
        0-based contemporaneous parents.
    lag : int
        1 to regress on the node's own previous value, else 0.
    transform : str
        ``"identity"`` or ``"log"``, applied to the node's own series.
    change_points : tuple of int
        0-based times at which the state variance is inflated.
    inflation : float
        Multiplier of the prior scaled covariance at the change points.
    variance_power : float, optional
        Power ``gamma`` of the variance law ``|f|^gamma``; None keeps the
        variance constant.
    delta : float, optional
        A fixed discount factor; None picks the best one on the grid.
    """

    parents: tuple = ()
    lag: int = 0
    transform: str = "identity"
    change_points: tuple = ()
    inflation: float = 100.0
    variance_power: float = None
    delta: float = None

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(sorted(int(i) for i in self.parents)))
        object.__setattr__(
            self, "change_points", tuple(sorted(int(t) for t in self.change_points))
        )
        if self.lag not in (0, 1):
            raise ValueError(f"Only a lag of 0 or 1 is supported, got {self.lag}.")
        if self.transform not in TRANSFORMS:
            raise ValueError(
                f"Unknown transform {self.transform!r}, expected one of {TRANSFORMS}."
            )
        if any(t < 0 for t in self.change_points):
            raise ValueError("Change point times must be non-negative.")
        if self.inflation <= 0:
            raise ValueError(f"Inflation must be positive, got {self.inflation}.")


@dataclass(frozen=True)
class ModelSpec:
    """Recipes of all nodes of a network.

    Examples
    --------
    >>> from mdm_ipa.diagnostics.embellish import ModelSpec, lag_augment
    >>> spec = ModelSpec.from_parents([(), (0,), (1,)])
    >>> lag_augment(spec, 2).nodes[2].lag
    1
    """

    nodes: tuple = field(default_factory=tuple)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @classmethod
    def from_parents(cls, parent_lists) -> "ModelSpec":
        return cls(nodes=tuple(NodeSpec(parents=tuple(these)) for these in parent_lists))

    @classmethod
    def from_dag(cls, dag) -> "ModelSpec":
        return cls.from_parents([dag.parents_of(node) for node in range(dag.n)])

    def node(self, r: int) -> NodeSpec:
        if not (0 <= r < self.n):
            raise ValueError(f"Node {r} is outside 0..{self.n - 1}.")
        return self.nodes[r]

    def with_node(self, r: int, **changes) -> "ModelSpec":
        """A copy with the recipe of node ``r`` changed."""
        nodes = list(self.nodes)
        nodes[r] = replace(self.node(r), **changes)
        return ModelSpec(nodes=tuple(nodes))

    def to_dict(self) -> dict:
        return {
            str(r + 1): {
                "parents": [i + 1 for i in this.parents],
                "lag": this.lag,
                "transform": this.transform,
                "change_points": [t + 1 for t in this.change_points],
                "inflation": this.inflation,
                "variance_power": this.variance_power,
                "delta": this.delta,
            }
            for r, this in enumerate(self.nodes)
        }


@dataclass(frozen=True)
class NodeFit:
    """A fitted node: the filter run plus log densities on the scale of the
    observed series."""

    node: int
    spec: NodeSpec
    run: FilterRun
    delta: float
    log_densities: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return self.run.times

    @property
    def lpl(self) -> float:
        return float(np.sum(self.log_densities))


def _node_series(data: np.ndarray, r: int, transform: str) -> np.ndarray:
    y = data[:, r]
    if transform == "log":
        if np.any(y <= 0):
            raise DataError(f"Node {r} has non-positive values, cannot take logs.")
        return np.log(y)
    return y


def fit_node(
    spec, data, r: int, cfg: ScoreConfig = None, start: int = None, delta: float = None
) -> NodeFit:
    """
    Filter one node under its recipe.

    Parameters
    ----------
    spec : ModelSpec or NodeSpec
    data : np.ndarray
        ``T x n`` data matrix.
    r : int
        0-based node.
    cfg : ScoreConfig
        Discount grid and prior.
    start : int, optional
        First 0-based time scored; defaults to the node's lag. Models compared
        with each other must be scored from the same start.
    delta : float, optional
        Overrides the recipe's discount factor.

    Returns
    -------
    fit : NodeFit
    """
    if cfg is None:
        cfg = ScoreConfig.from_config()
    node_spec = spec.node(r) if isinstance(spec, ModelSpec) else spec
    data = np.asarray(data, dtype=float)
    if r in node_spec.parents:
        raise ValueError(f"Node {r} cannot be its own parent.")
    z = _node_series(data, r, node_spec.transform)
    work = data.copy()
    work[:, r] = z
    design = RegressionDesign.from_data(work, r, node_spec.parents, lag=node_spec.lag)
    if start is None:
        start = design.start
    if start < design.start or start >= data.shape[0]:
        raise ValueError(f"Start {start} is invalid for a design starting at {design.start}.")
    if start > design.start:
        design = RegressionDesign(
            covariates=design.covariates[start - design.start :],
            parents=design.parents,
            lag=design.lag,
            start=start,
        )
    inflation = {t: node_spec.inflation for t in node_spec.change_points}
    prior = cfg.prior(design.dim)
    if delta is None:
        delta = node_spec.delta
    if delta is None:
        deltas = cfg.deltas
        steps = np.array([inflation.get(t, 1.0) for t in range(start, data.shape[0])])
        lpl = batch_lpl(z[start:], design.covariates, deltas, prior, inflation=steps)[0]
        delta = float(deltas[best_grid_index(lpl)])
    run = filter_series(z[start:], design, delta, prior, inflation=inflation)
    if node_spec.variance_power is not None:
        run = heteroscedastic_predictive(run, node_spec.variance_power)
    log_densities = run.log_densities
    if node_spec.transform == "log":
        # Jacobian of the log transform: p_Y(y) = p_Z(ln y) / y
        log_densities = log_densities - z[start:]
    return NodeFit(node=r, spec=node_spec, run=run, delta=delta, log_densities=log_densities)


def lag_augment(spec: ModelSpec, r: int, lag: int = 1) -> ModelSpec:
    """Add the node's own value at ``t - 1`` to its regressors; scoring then
    starts at the second time point."""
    if lag != 1:
        raise ValueError(f"Only a lag of 1 is supported, got {lag}.")
    return spec.with_node(r, lag=1)


def transformed_predictive(pred: PredictiveSummary, y: float, transform: str = "log") -> float:
    """
    Log predictive density of ``y`` when the model forecasts ``Z = g(Y)``.

    With ``g = log`` the density is ``p_Z(ln y) / y``.

    Parameters
    ----------
    pred : PredictiveSummary
        The forecast of ``Z``.
    y : float
    transform : str
        ``"identity"`` or ``"log"``.

    Returns
    -------
    log_density : float
    """
    if transform == "identity":
        return log_predictive_density(pred, y)
    if transform != "log":
        raise ValueError(f"Unknown transform {transform!r}, expected one of {TRANSFORMS}.")
    if y <= 0:
        raise ValueError(f"{y} is outside the domain of the log transform.")
    return log_predictive_density(pred, np.log(y)) - np.log(y)


def heteroscedastic_predictive(run: FilterRun, variance_power: float = 2.0) -> FilterRun:
    """
    Rescale the forecasts of a run by the variance law ``|f_t|^gamma`` and
    recompute the log predictive likelihood.

    The multiplier is floored at 1e-8 so no forecast scale vanishes.

    Parameters
    ----------
    run : FilterRun
    variance_power : float
        The power ``gamma``; 0 leaves the run unchanged.

    Returns
    -------
    run : FilterRun
    """
    predictives = []
    for pred in run.predictives:
        factor = max(abs(pred.f) ** variance_power, VARIANCE_FLOOR)
        scaled = PredictiveSummary(
            f=pred.f, Q=pred.Q * factor, dof=pred.dof, e=pred.e, log_density=0.0
        )
        predictives.append(
            replace(scaled, log_density=log_predictive_density(scaled, pred.f + pred.e))
        )
    return FilterRun(
        states=run.states,
        predictives=tuple(predictives),
        lpl=float(np.sum([pred.log_density for pred in predictives])),
        delta=run.delta,
        start=run.start,
        inflation=run.inflation,
    )


def detect_change_points(
    spec: ModelSpec,
    null_spec: ModelSpec,
    data,
    r: int,
    threshold: float = None,
    mode: str = "cumulative",
    refractory: int = None,
    cfg: ScoreConfig = None,
) -> list:
    """
    Flag times where node ``r``'s model loses to a null model.

    The per-step log Bayes factor is ``h_t = log p(y_t | model) - log p(y_t | null)``.
    In ``"cumulative"`` mode the running value ``l_t = h_t + min(0, l_{t-1})``
    is compared with ``log(threshold)`` and reset to 0 after a flag; in
    ``"instantaneous"`` mode ``h_t`` itself is compared. After a flag no
    further flag is raised for ``refractory`` steps.

    Parameters
    ----------
    spec, null_spec : ModelSpec
        The current model and the null, usually node ``r`` without parents.
    data : np.ndarray
    r : int
    threshold : float
        Bayes factor threshold; 0 never flags. Defaults to the
        ``[diagnostics] threshold`` configuration value.
    mode : str
    refractory : int
    cfg : ScoreConfig

    Returns
    -------
    times : list of int
        0-based flagged times.
    """
    if threshold is None:
        threshold = mdm_ipa.config.getfloat("diagnostics", "threshold", fallback=0.3)
    if refractory is None:
        refractory = mdm_ipa.config.getint("diagnostics", "refractory", fallback=10)
    if threshold < 0:
        raise ValueError(f"Threshold must be non-negative, got {threshold}.")
    if mode not in ("cumulative", "instantaneous"):
        raise ValueError(f"Unknown mode {mode!r}.")
    if threshold == 0:
        return []
    start = max(spec.node(r).lag, null_spec.node(r).lag)
    model_fit = fit_node(spec, data, r, cfg=cfg, start=start)
    null_fit = fit_node(null_spec, data, r, cfg=cfg, start=start)
    step_bf = model_fit.log_densities - null_fit.log_densities
    log_threshold = np.log(threshold)
    flags = []
    running = 0.0
    quiet_until = -1
    for i, h in enumerate(step_bf):
        t = start + i
        running = h + min(0.0, running) if mode == "cumulative" else h
        if running < log_threshold and t > quiet_until:
            flags.append(t)
            quiet_until = t + refractory
            running = 0.0
    log.debug(f"Node {r + 1}: change points at {[t + 1 for t in flags]}")
    return flags


def apply_change_points(spec: ModelSpec, r: int, times, inflation: float = None) -> ModelSpec:
    """Inflate node ``r``'s prior scaled covariance ``R*_t`` by ``inflation``
    at each of ``times`` (0-based), for that step only."""
    if inflation is None:
        inflation = mdm_ipa.config.getfloat("diagnostics", "inflation", fallback=100.0)
    return spec.with_node(r, change_points=tuple(times), inflation=inflation)
