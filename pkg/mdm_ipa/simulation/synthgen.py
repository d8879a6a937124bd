"""
Simulation of multiregression dynamic models.

Every node is a dynamic regression on its contemporaneous parents whose
coefficients follow a random walk ``theta_t = theta_{t-1} + w_t`` with
``w_t ~ N(0, W)``, ``W = W* V``, starting exactly at ``theta_0``. Nodes are
simulated in topological order.

Random numbers come from one generator per (seed, replication, node, role),
so replications can be simulated in any order or in parallel and still be
reproducible.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal

from mdm_ipa import log
from mdm_ipa.io.file_tools import write_json, write_series
from mdm_ipa.search.dag import Dag
from mdm_ipa.util.exceptions import DataError
from mdm_ipa.util.util import parallel_map

__all__ = [
    "GeneratorSpec",
    "simulate_replication",
    "simulate_mdm",
    "eleven_node_spec",
    "gen_eleven_node",
    "three_node_chain_spec",
    "gen_three_node_chain",
    "write_dataset",
    "PRESETS",
]

# random number streams of a node
STATE_NOISE = 0
OBSERVATION_NOISE = 1

ELEVEN_NODE_VARIANCES = (
    0.010, 0.191, 0.036, 0.005, 0.018, 0.011, 0.010, 0.006, 0.016, 0.014, 0.013,
)  # fmt: skip
# (parent, child, initial coefficient), 0-based
ELEVEN_NODE_EDGES = (
    (1, 3, 0.25),
    (7, 3, 0.18),
    (2, 4, 0.50),
    (7, 6, 0.39),
    (6, 5, 0.80),
    (9, 8, 0.65),
)
ELEVEN_NODE_WSTAR = 0.05
ELEVEN_NODE_T = 230
ELEVEN_NODE_REPS = 50

THREE_NODE_VARIANCES = (12.5, 6.3, 5.0)
THREE_NODE_EDGES = ((0, 1, 0.3), (1, 2, 0.2))
THREE_NODE_REPS = 100


@dataclass(frozen=True)
class GeneratorSpec:
    """A simulation design.

    Parameters
    ----------
    dag : Dag
        The network.
    theta0 : tuple of np.ndarray
        Coefficients at ``t = 0`` per node: intercept, then one per parent in
        increasing parent order.
    V : tuple of float
        Observation variances.
    wstar : tuple of np.ndarray
        Diagonal of ``W*`` per node, same length as ``theta0``.
    T : int
        Series length.
    reps : int
        Number of replications.
    seed : int
    lag_coefs : tuple of float, optional
        Fixed coefficient of each node's own previous value (0 for none).
    jumps : dict, optional
        ``{node: ((t, shift), ...)}`` adds ``shift`` to the coefficients from
        0-based time ``t`` on.
    log_nodes : tuple of int
        Nodes observed as ``exp`` of the simulated regression.
    """

    dag: Dag
    theta0: tuple
    V: tuple
    wstar: tuple
    T: int
    reps: int = 1
    seed: int = 0
    lag_coefs: tuple = None
    jumps: dict = field(default_factory=dict)
    log_nodes: tuple = ()

    def __post_init__(self):
        n = self.dag.n
        theta0 = tuple(np.array(this, dtype=float, ndmin=1) for this in self.theta0)
        object.__setattr__(self, "theta0", theta0)
        wstar = tuple(
            np.broadcast_to(np.asarray(this, dtype=float), theta0[r].shape).copy()
            for r, this in enumerate(self.wstar)
        )
        object.__setattr__(self, "wstar", wstar)
        if self.lag_coefs is None:
            object.__setattr__(self, "lag_coefs", (0.0,) * n)
        if not (len(theta0) == len(self.V) == len(wstar) == len(self.lag_coefs) == n):
            raise DataError(f"Expected per-node settings for {n} nodes.")
        for r in range(n):
            if len(theta0[r]) != 1 + len(self.dag.parents_of(r)):
                raise DataError(
                    f"Node {r} has {len(self.dag.parents_of(r))} parents but "
                    f"{len(theta0[r])} initial coefficients."
                )
            if self.V[r] <= 0:
                raise DataError(f"Observation variance of node {r} must be positive.")
            if np.any(wstar[r] < 0):
                raise DataError(f"W* of node {r} must be non-negative.")
        if self.T < 1 or self.reps < 1:
            raise DataError("T and reps must be positive.")

    @property
    def n(self) -> int:
        return self.dag.n

    def W(self, r: int) -> np.ndarray:
        """Diagonal of the state noise variance of node ``r``."""
        return self.wstar[r] * self.V[r]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "edges": [[parent + 1, child + 1] for parent, child in self.dag.edges],
            "theta0": {str(r + 1): this for r, this in enumerate(self.theta0)},
            "V": list(self.V),
            "wstar": {str(r + 1): this for r, this in enumerate(self.wstar)},
            "T": self.T,
            "reps": self.reps,
            "seed": self.seed,
            "lag_coefs": list(self.lag_coefs),
            "log_nodes": [r + 1 for r in self.log_nodes],
        }


def _rng(seed: int, rep: int, node: int, role: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, rep, node, role]))


def simulate_replication(spec: GeneratorSpec, rep: int) -> tuple:
    """
    Simulate one replication.

    Returns
    -------
    data, theta : np.ndarray, list of np.ndarray
        The ``T x n`` observations and, per node, the ``T x p_r`` coefficient
        trajectory at the observed times.
    """
    T, n = spec.T, spec.n
    data = np.zeros((T, n))
    theta = [None] * n
    for r in spec.dag.topological_order():
        p = len(spec.theta0[r])
        state_noise = _rng(spec.seed, rep, r, STATE_NOISE).normal(size=(T, p))
        walk = np.cumsum(state_noise * np.sqrt(spec.W(r)), axis=0)
        trajectory = spec.theta0[r] + walk
        for t0, shift in spec.jumps.get(r, ()):
            trajectory[t0:] += np.asarray(shift, dtype=float)
        theta[r] = trajectory
        covariates = np.column_stack([np.ones(T)] + [data[:, i] for i in spec.dag.parents_of(r)])
        noise = _rng(spec.seed, rep, r, OBSERVATION_NOISE).normal(
            scale=np.sqrt(spec.V[r]), size=T
        )
        level = np.sum(covariates * trajectory, axis=1) + noise
        if spec.lag_coefs[r] != 0:
            level = signal.lfilter([1.0], [1.0, -spec.lag_coefs[r]], level)
        data[:, r] = np.exp(level) if r in spec.log_nodes else level
    return data, theta


def simulate_mdm(spec: GeneratorSpec, with_theta: bool = False, n_jobs: int = None) -> list:
    """
    Simulate every replication of a design.

    Parameters
    ----------
    spec : GeneratorSpec
    with_theta : bool
        Also return the coefficient trajectories.
    n_jobs : int, optional
        Parallel workers, one replication per task.

    Returns
    -------
    replications : list
        ``T x n`` arrays, or ``(data, theta)`` pairs with ``with_theta``.
    """
    results = parallel_map(_Replicate(spec), range(spec.reps), n_jobs=n_jobs)
    log.info(f"Simulated {spec.reps} replications of {spec.T} x {spec.n}")
    if with_theta:
        return results
    return [data for data, _ in results]


class _Replicate:
    def __init__(self, spec):
        self.spec = spec

    def __call__(self, rep):
        return simulate_replication(self.spec, rep)


def _network_spec(n, edges, V, wstar_level, T, reps, seed) -> GeneratorSpec:
    dag = Dag.from_edges(n, [(parent, child) for parent, child, _ in edges])
    coefficients = {(parent, child): value for parent, child, value in edges}
    theta0 = [
        [0.0] + [coefficients[(parent, r)] for parent in dag.parents_of(r)]
        for r in range(n)
    ]
    return GeneratorSpec(
        dag=dag,
        theta0=tuple(theta0),
        V=tuple(V),
        wstar=tuple([wstar_level] * n),
        T=T,
        reps=reps,
        seed=seed,
    )


def eleven_node_spec(
    seed: int = 0, T: int = ELEVEN_NODE_T, reps: int = ELEVEN_NODE_REPS
) -> GeneratorSpec:
    """The 11-node design: six edges, ``W* = 0.05 I`` and zero intercepts.

    >>> spec = eleven_node_spec()
    >>> len(spec.dag.edges), spec.T, spec.reps
    (6, 230, 50)
    """
    return _network_spec(
        11, ELEVEN_NODE_EDGES, ELEVEN_NODE_VARIANCES, ELEVEN_NODE_WSTAR, T, reps, seed
    )


def gen_eleven_node(seed: int = 0, with_theta: bool = False, **kwargs) -> list:
    """Simulate the 11-node design, 50 replications of 230 time points."""
    return simulate_mdm(eleven_node_spec(seed=seed, **kwargs), with_theta=with_theta)


def three_node_chain_spec(
    T: int = 100, wstar_level: float = 0.001, seed: int = 0, reps: int = THREE_NODE_REPS
) -> GeneratorSpec:
    """The chain ``1 -> 2 -> 3`` with coefficients 0.3 and 0.2."""
    return _network_spec(
        3, THREE_NODE_EDGES, THREE_NODE_VARIANCES, wstar_level, T, reps, seed
    )


def gen_three_node_chain(
    T: int = 100, wstar_level: float = 0.001, seed: int = 0, with_theta: bool = False, **kwargs
) -> list:
    """Simulate the 3-node chain, 100 replications by default."""
    spec = three_node_chain_spec(T=T, wstar_level=wstar_level, seed=seed, **kwargs)
    return simulate_mdm(spec, with_theta=with_theta)


PRESETS = {"network11": eleven_node_spec, "chain3": three_node_chain_spec}


def write_dataset(spec: GeneratorSpec, replications, directory: Path) -> list:
    """
    Write one CSV per replication and a ``manifest.json`` describing the design.

    Returns
    -------
    files : list of Path
        The CSV files, ``rep001.csv``, ``rep002.csv``, ...
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(len(replications))))
    files = []
    for rep, data in enumerate(replications):
        files.append(write_series(directory / f"rep{rep + 1:0{width}d}.csv", data))
    write_json(
        {"spec": spec.to_dict(), "files": [this.name for this in files]},
        directory / "manifest.json",
    )
    log.info(f"Wrote {len(files)} replications to {directory}")
    return files
