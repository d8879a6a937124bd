"""
Simulation studies of structure recovery.

* LPL profiles of whole networks over a common discount factor,
* the Markov equivalence study on the 3-node chain, where a chain, its
  reversal and a collider compete,
* the end-to-end replication pipeline: simulate, score, search, then
  compare the estimate with the generating network and check the smoothed
  coefficient intervals against the true trajectories.
"""

import numpy as np
from astropy.table import Table

from mdm_ipa import log
from mdm_ipa.dlm.core import RegressionDesign, batch_lpl, filter_series
from mdm_ipa.dlm.smoothing import smooth
from mdm_ipa.metrics.group import delta_summary
from mdm_ipa.metrics.metrics import (
    c_sensitivity,
    confusion,
    d_accuracy,
    false_positive_situations,
    hpd_coverage,
    summarize,
)
from mdm_ipa.scoring.local_scores import (
    ScoreConfig,
    best_grid_index,
    compute_score_table,
)
from mdm_ipa.search.dag import Dag
from mdm_ipa.search.dp import dp_exact_search
from mdm_ipa.search.ip import SearchOptions, ip_search
from mdm_ipa.simulation.synthgen import (
    GeneratorSpec,
    simulate_mdm,
    simulate_replication,
    three_node_chain_spec,
)
from mdm_ipa.util.exceptions import SearchLimitReached
from mdm_ipa.util.util import parallel_map

__all__ = [
    "EQUIVALENCE_DAGS",
    "dag_lpl_profile",
    "dag_score",
    "markov_equivalence_study",
    "selection_study",
    "run_replication",
    "run_study",
    "summarize_replications",
    "METRIC_COLUMNS",
]

# chain 1 -> 2 -> 3, its Markov equivalent reversal and the collider 1 -> 2 <- 3
EQUIVALENCE_DAGS = (
    Dag.from_edges(3, [(0, 1), (1, 2)]),
    Dag.from_edges(3, [(1, 0), (2, 1)]),
    Dag.from_edges(3, [(0, 1), (2, 1)]),
)

METRIC_COLUMNS = [
    "Sens",
    "Spec",
    "PPV",
    "NPV",
    "SR",
    "d_accuracy",
    "mean_delta",
    "coverage_tp",
    "coverage_fp1",
    "coverage_fp2",
]


def _node_lpl(dag: Dag, data: np.ndarray, node: int, cfg: ScoreConfig) -> np.ndarray:
    design = RegressionDesign.from_data(data, node, dag.parents_of(node))
    return batch_lpl(data[:, node], design.covariates, cfg.deltas, cfg.prior(design.dim))[0]


def dag_lpl_profile(dag: Dag, data, cfg: ScoreConfig = None) -> Table:
    """
    Log predictive likelihood of a whole network when every node uses the
    same discount factor, over the configured grid.

    Returns
    -------
    profile : Table
        Columns ``delta`` and ``lpl``.
    """
    if cfg is None:
        cfg = ScoreConfig()
    data = np.asarray(data, dtype=float)
    total = np.sum([_node_lpl(dag, data, node, cfg) for node in range(dag.n)], axis=0)
    return Table([cfg.deltas, total], names=["delta", "lpl"])


def dag_score(dag: Dag, data, cfg: ScoreConfig = None) -> tuple:
    """
    Score of a network with every node at its own best discount factor.

    Returns
    -------
    total, scores, deltas : float, np.ndarray, np.ndarray
        The summed score and the per-node scores and discount factors.
    """
    if cfg is None:
        cfg = ScoreConfig()
    data = np.asarray(data, dtype=float)
    scores = np.empty(dag.n)
    deltas = np.empty(dag.n)
    for node in range(dag.n):
        lpl = _node_lpl(dag, data, node, cfg)
        best = best_grid_index(lpl)
        scores[node] = lpl[best]
        deltas[node] = cfg.deltas[best]
    return float(np.sum(scores)), scores, deltas


def _static_lpl(dag: Dag, data: np.ndarray, cfg: ScoreConfig) -> float:
    static = ScoreConfig(
        delta_start=1.0, delta_end=1.0, delta_step=cfg.delta_step,
        n0=cfg.n0, d0=cfg.d0, c0_scale=cfg.c0_scale, m0=cfg.m0,
    )  # fmt: skip
    return float(dag_lpl_profile(dag, data, static)["lpl"][0])


def markov_equivalence_study(replications, cfg: ScoreConfig = None) -> dict:
    """
    Compare the chain, its reversal and the collider on 3-node data.

    For every replication the three networks are scored with their best
    discount factors, and again with the static model (``delta = 1``).

    Parameters
    ----------
    replications : list of np.ndarray
        ``T x 3`` data sets, e.g. from `~mdm_ipa.simulation.synthgen.gen_three_node_chain`.
    cfg : ScoreConfig

    Returns
    -------
    study : dict
        ``selected`` the fraction of replications where the chain scores
        highest, ``gap_ratio`` the mean over replications of
        ``|LPL1 - LPL2| / |LPL1 - LPL3|`` at ``delta = 1``, and ``table`` the
        per-replication scores.
    """
    if cfg is None:
        cfg = ScoreConfig()
    rows = []
    for rep, data in enumerate(replications):
        data = np.asarray(data, dtype=float)
        scores = [dag_score(dag, data, cfg)[0] for dag in EQUIVALENCE_DAGS]
        static = [_static_lpl(dag, data, cfg) for dag in EQUIVALENCE_DAGS]
        collider_gap = abs(static[0] - static[2])
        ratio = abs(static[0] - static[1]) / collider_gap if collider_gap > 0 else np.nan
        rows.append(
            [rep + 1, *scores, *static, scores[0] > max(scores[1:]), ratio]
        )
    table = Table(
        rows=rows,
        names=[
            "rep", "lpl1", "lpl2", "lpl3",
            "static_lpl1", "static_lpl2", "static_lpl3", "selected", "gap_ratio",
        ],
    )  # fmt: skip
    ratios = np.asarray(table["gap_ratio"], dtype=float)
    finite = ratios[np.isfinite(ratios)]
    return {
        "selected": float(np.mean(table["selected"])),
        "gap_ratio": float(np.mean(finite)) if len(finite) else np.nan,
        "table": table,
    }


def selection_study(
    lengths=(100, 200, 300),
    wstar_levels=(0.001, 0.01),
    reps: int = 100,
    seed: int = 0,
    cfg: ScoreConfig = None,
) -> Table:
    """
    How often the chain is selected as the series grow, for each state noise
    level of the 3-node generator.

    Returns
    -------
    study : Table
        One row per ``(T, wstar)`` with ``selected`` and ``gap_ratio``.
    """
    rows = []
    for wstar in wstar_levels:
        for T in lengths:
            spec = three_node_chain_spec(T=T, wstar_level=wstar, seed=seed, reps=reps)
            result = markov_equivalence_study(simulate_mdm(spec), cfg)
            log.info(
                f"T={T} W*={wstar}: chain selected in {100 * result['selected']:.0f}% "
                f"of {reps} replications"
            )
            rows.append([T, wstar, reps, result["selected"], result["gap_ratio"]])
    return Table(rows=rows, names=["T", "wstar", "reps", "selected", "gap_ratio"])


def _search(table, engine: str, opts: SearchOptions):
    if engine == "dp":
        return dp_exact_search(table)
    if engine != "ip":
        raise ValueError(f"Unknown search engine {engine!r}, use 'dp' or 'ip'.")
    try:
        return ip_search(table, opts)
    except SearchLimitReached as err:
        log.warning(f"{err} Using the best network found so far.")
        return err.result


def _edge_coverage(spec, data, theta, estimate, table, cfg, level) -> dict:
    """Mean interval coverage of the estimated edges, split by how they
    relate to the true network."""
    situations = false_positive_situations(spec.dag, estimate)
    kinds = {edge: "fp1" for edge in situations[1]}
    kinds.update({edge: "fp2" for edge in situations[2]})
    lookup = table.to_dict()
    coverage = {"tp": [], "fp1": [], "fp2": []}
    smoothed = {}
    for parent, child in estimate.edges:
        if child not in smoothed:
            design = RegressionDesign.from_data(data, child, estimate.parents_of(child))
            delta = lookup[child][estimate.parents[child]][1]
            run = filter_series(data[:, child], design, delta, cfg.prior(design.dim))
            smoothed[child] = (design, smooth(run, delta, level))
        design, trajectory = smoothed[child]
        column = 1 + design.parents.index(parent)
        key = kinds.get((parent, child), "tp")
        if key == "tp":
            truth = theta[child][:, 1 + spec.dag.parents_of(child).index(parent)]
        else:
            truth = np.zeros(len(data))
        coverage[key].extend(hpd_coverage(trajectory, truth)[[column]])
    return {
        f"coverage_{key}": float(np.mean(values)) if values else np.nan
        for key, values in coverage.items()
    }


def run_replication(
    spec: GeneratorSpec,
    rep: int,
    cfg: ScoreConfig = None,
    opts: SearchOptions = None,
    engine: str = "ip",
    level: float = 0.95,
) -> dict:
    """
    Simulate one replication, learn its network and evaluate the estimate.

    Returns
    -------
    row : dict
        ``rep`` (1-based), confusion counts, the five skeleton ratios,
        ``d_accuracy``, ``mean_delta`` over nodes with estimated parents,
        coverage of true-positive and of situation 1 / 2 false-positive
        edges, the network ``score`` and whether it was proved ``optimal``.
    """
    if cfg is None:
        cfg = ScoreConfig.from_config()
    if opts is None:
        opts = SearchOptions.from_config()
    data, theta = simulate_replication(spec, rep)
    table = compute_score_table(data, cfg, n_jobs=1)
    result = _search(table, engine, opts)
    estimate = result.dag
    counts = confusion(spec.dag, estimate)
    lookup = table.to_dict()
    best_deltas = [lookup[node][mask][1] for node, mask in enumerate(estimate.parents)]
    row = {
        "rep": rep + 1,
        "TP": counts.TP,
        "FP": counts.FP,
        "TN": counts.TN,
        "FN": counts.FN,
        **c_sensitivity(counts),
        "d_accuracy": d_accuracy(spec.dag, estimate),
        "mean_delta": delta_summary([best_deltas], [estimate])["all"],
        **_edge_coverage(spec, data, theta, estimate, table, cfg, level),
        "score": result.score,
        "optimal": result.optimal,
        "edges": estimate.to_edge_list().replace("\n", "; "),
    }
    log.debug(f"Replication {rep + 1}: {row}")
    return row


class _ReplicationTask:
    def __init__(self, spec, cfg, opts, engine, level):
        self.spec = spec
        self.cfg = cfg
        self.opts = opts
        self.engine = engine
        self.level = level

    def __call__(self, rep):
        return run_replication(self.spec, rep, self.cfg, self.opts, self.engine, self.level)


def run_study(
    spec: GeneratorSpec,
    cfg: ScoreConfig = None,
    opts: SearchOptions = None,
    engine: str = "ip",
    level: float = 0.95,
    n_jobs: int = None,
) -> Table:
    """Run the replication pipeline on every replication of a design, one
    replication per parallel task.

    Returns
    -------
    rows : Table
        One row per replication.
    """
    if cfg is None:
        cfg = ScoreConfig.from_config()
    if opts is None:
        opts = SearchOptions.from_config()
    task = _ReplicationTask(spec, cfg, opts, engine, level)
    rows = parallel_map(task, range(spec.reps), n_jobs=n_jobs)
    log.info(f"Finished {spec.reps} replications")
    return Table(rows=rows)


def summarize_replications(rows, columns=None) -> dict:
    """
    Average the metrics over replications.

    Not-a-value entries (e.g. PPV of a replication with no estimated edge)
    are skipped; the count of skipped entries is reported per metric.
    """
    if not isinstance(rows, Table):
        rows = Table(rows=list(rows))
    if columns is None:
        columns = [name for name in METRIC_COLUMNS if name in rows.colnames]
    return summarize(rows, columns)
