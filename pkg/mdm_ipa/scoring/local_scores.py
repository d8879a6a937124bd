"""
Local scores of every node / parent-set pair.

The local score of node ``r`` with parent set ``S`` is the node's log
predictive likelihood maximised over the discount factor grid. Because the
joint log predictive likelihood of a network is the sum of its local scores,
the table of local scores is all the structure search needs.
"""

import time
from dataclasses import dataclass

import numpy as np
from astropy.table import Table

import mdm_ipa
from mdm_ipa import log
from mdm_ipa.dlm.core import NodePrior, RegressionDesign, batch_lpl
from mdm_ipa.util.exceptions import DataError, ResourceLimitError
from mdm_ipa.util.util import (
    delta_grid,
    mask_to_parents,
    parallel_map,
    popcount,
    subsets_of_size,
)

__all__ = [
    "ScoreConfig",
    "ScoreTable",
    "best_grid_index",
    "node_best_score",
    "compute_score_table",
    "prune_score_table",
]

# designs filtered together, bounds the memory of one batch
BATCH_SIZE = 256


@dataclass(frozen=True)
class ScoreConfig:
    """Options of the local score computation.

    Parameters
    ----------
    delta_start, delta_end, delta_step : float
        The discount factor grid.
    n0, d0 : float
        Prior degrees of freedom and sum of squares.
    c0_scale : float
        Shared prior variance of the regression coefficients.
    m0 : float
        Prior mean of every regression coefficient.
    max_parents : int, optional
        Largest parent set scored. None scores every parent set.
    prune : bool
        Drop parent sets beaten by one of their subsets.
    max_nodes : int
        Networks above this size must set ``max_parents``.
    """

    delta_start: float = mdm_ipa.DELTA_START
    delta_end: float = mdm_ipa.DELTA_END
    delta_step: float = mdm_ipa.DELTA_STEP
    n0: float = mdm_ipa.PRIOR_N0
    d0: float = mdm_ipa.PRIOR_D0
    c0_scale: float = mdm_ipa.PRIOR_C0_SCALE
    m0: float = 0.0
    max_parents: int = None
    prune: bool = False
    max_nodes: int = mdm_ipa.MAX_NODES

    def __post_init__(self):
        # validates the grid
        delta_grid(self.delta_start, self.delta_end, self.delta_step)
        if self.max_parents is not None and self.max_parents < 0:
            raise ValueError(f"max_parents must be >= 0, got {self.max_parents}.")

    @classmethod
    def from_config(cls, config=None, **overrides):
        """Build the options from the ``[scoring]`` configuration section.
        Keyword arguments that are not None win over the configuration."""
        if config is None:
            config = mdm_ipa.config
        kwargs = {}
        if config.has_section("scoring"):
            section = config["scoring"]
            for name in ["delta_start", "delta_end", "delta_step", "n0", "d0", "c0_scale"]:
                if name in section:
                    kwargs[name] = section.getfloat(name)
            if "max_nodes" in section:
                kwargs["max_nodes"] = section.getint("max_nodes")
        kwargs.update({key: val for key, val in overrides.items() if val is not None})
        return cls(**kwargs)

    @property
    def deltas(self) -> np.ndarray:
        return delta_grid(self.delta_start, self.delta_end, self.delta_step)

    def prior(self, p: int) -> NodePrior:
        """The matched prior for a design of dimension ``p``."""
        return NodePrior.weakly_informative(
            p, n0=self.n0, d0=self.d0, c0_scale=self.c0_scale, m0=np.full(p, self.m0)
        )

    def parent_cap(self, n: int) -> int:
        if self.max_parents is None:
            return n - 1
        return min(self.max_parents, n - 1)


class ScoreTable(Table):
    """Local scores of node / parent-set pairs.

    Each row holds a 0-based ``node``, its parent set as an integer bitmask
    ``parents``, the number of parents ``n_parents``, the local ``score`` and
    the discount factor ``delta`` at which it was attained. The number of
    nodes is kept in ``meta["n"]``.

    Examples
    --------
    >>> from mdm_ipa.scoring.local_scores import ScoreTable
    >>> table = ScoreTable.from_entries(2, [(0, 0, -3.0), (0, 2, -2.5), (1, 0, -1.0)])
    >>> len(table), table.n
    (3, 2)
    """

    def __init__(self, *args, **kwargs):
        n = kwargs.pop("n", None)
        super().__init__(*args, **kwargs)
        if n is not None:
            self.meta["n"] = int(n)
        if "n" in self.meta:
            self._verify()

    @classmethod
    def from_entries(cls, n: int, entries):
        """Create a table from ``(node, parent_mask, score[, delta])`` tuples."""
        entries = list(entries)
        nodes = np.array([this[0] for this in entries], dtype=int)
        masks = np.array([this[1] for this in entries], dtype=np.int64)
        scores = np.array([this[2] for this in entries], dtype=float)
        deltas = np.array(
            [this[3] if len(this) > 3 else 1.0 for this in entries], dtype=float
        )
        out = Table()
        out["node"] = nodes
        out["parents"] = masks
        out["n_parents"] = popcount(masks)
        out["score"] = scores
        out["delta"] = deltas
        out.sort(["node", "n_parents", "parents"])
        return cls(out, n=n)

    @property
    def n(self) -> int:
        return int(self.meta["n"])

    def _verify(self):
        """Verify consistency of the data."""
        n = self.n
        nodes = np.asarray(self["node"])
        masks = np.asarray(self["parents"], dtype=np.int64)
        if np.any((nodes < 0) | (nodes >= n)):
            raise DataError(f"Found a node index outside 0..{n - 1}.")
        if np.any(masks >> n):
            raise DataError(f"Found a parent index outside 0..{n - 1}.")
        if np.any((masks >> nodes) & 1):
            raise DataError("Found a node listed as its own parent.")
        if not np.all(np.isfinite(self["score"])):
            raise DataError("Found a non-finite score.")
        keys = nodes * (1 << n) + masks
        if len(np.unique(keys)) < len(keys):
            raise DataError("Found duplicate node / parent-set entries.")
        for this_node in range(n):
            if not np.any((nodes == this_node) & (masks == 0)):
                raise DataError(f"Node {this_node} has no empty parent set entry.")

    def for_node(self, node: int) -> Table:
        """Return the entries of one node."""
        return self[self["node"] == node]

    def to_dict(self) -> dict:
        """Return ``{node: {mask: (score, delta)}}``."""
        result = {this_node: {} for this_node in range(self.n)}
        for this_row in self:
            result[int(this_row["node"])][int(this_row["parents"])] = (
                float(this_row["score"]),
                float(this_row["delta"]),
            )
        return result

    def total_score(self, parent_masks) -> float:
        """Sum of the local scores of a parent-set assignment, in node order."""
        lookup = self.to_dict()
        total = 0.0
        for this_node, this_mask in enumerate(parent_masks):
            total += lookup[this_node][int(this_mask)][0]
        return total


def best_grid_index(lpl: np.ndarray) -> np.ndarray:
    """Index of the largest value along the last axis, ties broken toward
    the end of the (ascending) discount factor grid.

    >>> int(best_grid_index(np.array([1.0, 3.0, 3.0, 2.0])))
    2
    """
    lpl = np.asarray(lpl)
    size = lpl.shape[-1]
    return size - 1 - np.argmax(lpl[..., ::-1], axis=-1)


def _check_data(data) -> np.ndarray:
    data = np.asarray(data, dtype=float)
    if data.ndim != 2:
        raise DataError(f"Expected a T x n data matrix, got shape {data.shape}.")
    if data.shape[0] == 0:
        raise DataError("Cannot score an empty series.")
    if not np.all(np.isfinite(data)):
        raise DataError("Data contain missing or non-finite values.")
    return data


def node_best_score(node: int, parents, data, cfg: ScoreConfig = None) -> tuple:
    """The local score of one node / parent-set pair.

    Parameters
    ----------
    node : int
        0-based node index.
    parents : int or iterable of int
        The parent set as a bitmask or as node indices.
    data : np.ndarray
        ``T x n`` data matrix.
    cfg : ScoreConfig

    Returns
    -------
    score, delta : float, float
        The best log predictive likelihood over the grid and its discount
        factor (ties go to the larger discount factor).
    """
    if cfg is None:
        cfg = ScoreConfig()
    data = _check_data(data)
    if isinstance(parents, (int, np.integer)):
        parents = mask_to_parents(parents)
    design = RegressionDesign.from_data(data, node, parents)
    deltas = cfg.deltas
    lpl = batch_lpl(data[:, node], design.covariates, deltas, cfg.prior(design.dim))[0]
    best = best_grid_index(lpl)
    return float(lpl[best]), float(deltas[best])


def _score_node(node: int, data: np.ndarray, cfg: ScoreConfig) -> list:
    """Score every allowed parent set of one node."""
    start_time = time.perf_counter()
    n = data.shape[1]
    others = [i for i in range(n) if i != node]
    deltas = cfg.deltas
    y = data[:, node]
    entries = []
    for size in range(cfg.parent_cap(n) + 1):
        masks = subsets_of_size(others, size)
        prior = cfg.prior(size + 1)
        for first in range(0, len(masks), BATCH_SIZE):
            these_masks = masks[first : first + BATCH_SIZE]
            designs = np.stack(
                [
                    RegressionDesign.from_data(data, node, mask_to_parents(this)).covariates
                    for this in these_masks
                ]
            )
            lpl = batch_lpl(y, designs, deltas, prior)
            best = best_grid_index(lpl)
            for this_mask, this_lpl, this_best in zip(these_masks, lpl, best):
                entries.append(
                    (node, this_mask, float(this_lpl[this_best]), float(deltas[this_best]))
                )
    elapsed = time.perf_counter() - start_time
    log.info(f"Scored node {node + 1}: {len(entries)} parent sets in {elapsed:.2f} s")
    return entries


def compute_score_table(data, cfg: ScoreConfig = None, n_jobs: int = None) -> ScoreTable:
    """Compute the local score of every allowed node / parent-set pair.

    Parameters
    ----------
    data : np.ndarray
        ``T x n`` data matrix without missing values.
    cfg : ScoreConfig
    n_jobs : int, optional
        Number of parallel workers, one node per task. Defaults to
        `mdm_ipa.num_workers`.

    Returns
    -------
    table : ScoreTable
    """
    if cfg is None:
        cfg = ScoreConfig()
    data = _check_data(data)
    T, n = data.shape
    if n > cfg.max_nodes and cfg.max_parents is None:
        raise ResourceLimitError(
            f"{n} nodes exceed the exhaustive scoring limit of {cfg.max_nodes}; "
            "set max_parents to cap the parent set size."
        )
    largest_dim = cfg.parent_cap(n) + 1
    if T < largest_dim + 2:
        raise DataError(
            f"{T} time points are too few for designs with {largest_dim} coefficients."
        )
    node_entries = parallel_map(
        _ScoreNodeTask(data, cfg), range(n), n_jobs=n_jobs
    )
    table = ScoreTable.from_entries(n, [this for these in node_entries for this in these])
    table.meta["deltas"] = [float(cfg.deltas[0]), float(cfg.deltas[-1]), cfg.delta_step]
    if cfg.prune:
        table = prune_score_table(table)
    return table


class _ScoreNodeTask:
    """Picklable callable scoring one node, for the parallel map."""

    def __init__(self, data, cfg):
        self.data = data
        self.cfg = cfg

    def __call__(self, node):
        return _score_node(node, self.data, self.cfg)


def _best_subset_scores(n: int, masks: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """For every mask ``U`` of ``n`` bits, the best score of a listed set
    contained in ``U`` (``-inf`` if none)."""
    best = np.full(1 << n, -np.inf)
    best[masks] = scores
    universe = np.arange(1 << n)
    for j in range(n):
        with_j = universe[(universe >> j) & 1 == 1]
        best[with_j] = np.maximum(best[with_j], best[with_j ^ (1 << j)])
    return best


def prune_score_table(table: ScoreTable) -> ScoreTable:
    """Remove parent sets that score no better than one of their subsets.

    An entry ``(r, S)`` is dropped when some listed ``S' < S`` has
    ``score(r, S') >= score(r, S)``. Any DAG using ``S`` stays acyclic with
    ``S'`` in its place, so the optimal network score is unchanged.

    Returns
    -------
    table : ScoreTable
        A new, pruned table.
    """
    n = table.n
    keep = np.zeros(len(table), dtype=bool)
    nodes = np.asarray(table["node"])
    masks = np.asarray(table["parents"], dtype=np.int64)
    scores = np.asarray(table["score"], dtype=float)
    for this_node in range(n):
        rows = np.flatnonzero(nodes == this_node)
        best = _best_subset_scores(n, masks[rows], scores[rows])
        for this_row in rows:
            this_mask = int(masks[this_row])
            proper_best = -np.inf
            for this_parent in mask_to_parents(this_mask):
                proper_best = max(proper_best, best[this_mask ^ (1 << this_parent)])
            keep[this_row] = scores[this_row] > proper_best
    pruned = ScoreTable(table[keep], n=n)
    pruned.meta.update({key: val for key, val in table.meta.items() if key != "n"})
    log.debug(f"Pruned score table from {len(table)} to {len(pruned)} entries.")
    return pruned

