"""
Exact structure search by dynamic programming over node subsets.

The best DAG on a node set ``U`` has a sink ``v`` whose parents are the best
listed parent set inside ``U - {v}``, the rest being the best DAG on
``U - {v}``. Filling this recursion for all ``2^n`` subsets gives the optimum
independently of the integer program, which makes it the reference the
cutting-plane search is checked against.

A second pass fills the same recursion from the full set downwards: the best
score of the nodes outside ``W`` when every node of ``W`` precedes them. The
two passes together give the best network score with one parent set fixed,
which is how the lexicographically smallest optimal DAG is picked.
"""

import time

import numpy as np

from mdm_ipa import log
from mdm_ipa.scoring.local_scores import ScoreTable
from mdm_ipa.search.dag import Dag, SearchResult, scores_tie
from mdm_ipa.util.exceptions import ResourceLimitError
from mdm_ipa.util.util import popcount

__all__ = ["dp_exact_search", "best_parent_sets", "DP_MAX_NODES"]

DP_MAX_NODES = 20


def best_parent_sets(table: ScoreTable, node: int) -> tuple:
    """For every candidate set ``U`` of ``n`` bits, the best listed parent set
    of ``node`` contained in ``U``.

    Returns
    -------
    best_score, best_mask : np.ndarray, np.ndarray
        Arrays of length ``2^n``. Among equal scores the smaller mask wins.
    """
    n = table.n
    size = 1 << n
    best_score = np.full(size, -np.inf)
    best_mask = np.full(size, size, dtype=np.int64)
    entries = table.for_node(node)
    masks = np.asarray(entries["parents"], dtype=np.int64)
    best_score[masks] = np.asarray(entries["score"], dtype=float)
    best_mask[masks] = masks
    universe = np.arange(size)
    for j in range(n):
        with_j = universe[(universe >> j) & 1 == 1]
        without_j = with_j ^ (1 << j)
        candidate = best_score[without_j]
        candidate_mask = best_mask[without_j]
        current = best_score[with_j]
        better = (candidate > current) | (
            (candidate == current) & (candidate_mask < best_mask[with_j])
        )
        best_score[with_j] = np.where(better, candidate, current)
        best_mask[with_j] = np.where(better, candidate_mask, best_mask[with_j])
    return best_score, best_mask


def _forward_scores(best_scores: list, counts: np.ndarray) -> np.ndarray:
    """Best DAG score on every node subset."""
    n = len(best_scores)
    universe = np.arange(1 << n)
    result = np.full(1 << n, -np.inf)
    result[0] = 0.0
    for layer in range(1, n + 1):
        subsets = universe[counts == layer]
        for node in range(n):
            these = subsets[(subsets >> node) & 1 == 1]
            rest = these ^ (1 << node)
            result[these] = np.maximum(result[these], result[rest] + best_scores[node][rest])
    return result


def _backward_scores(best_scores: list, counts: np.ndarray) -> np.ndarray:
    """Best score of the nodes outside every subset ``W`` given that all of
    ``W`` precedes them."""
    n = len(best_scores)
    universe = np.arange(1 << n)
    result = np.full(1 << n, -np.inf)
    result[-1] = 0.0
    for layer in range(n - 1, -1, -1):
        subsets = universe[counts == layer]
        for node in range(n):
            these = subsets[(subsets >> node) & 1 == 0]
            candidate = best_scores[node][these] + result[these | (1 << node)]
            result[these] = np.maximum(result[these], candidate)
    return result


def _fixed_parent_reach(
    forward: np.ndarray, backward: np.ndarray, node: int, lows: list
) -> np.ndarray:
    """For every mask ``S``, the best score of all nodes but ``node`` when
    ``node`` takes the parent set ``S``. ``lows[j]`` lists the masks without
    bit ``j``."""
    bit = 1 << node
    result = np.full(len(forward), -np.inf)
    without = lows[node]
    result[without] = forward[without] + backward[without | bit]
    # maximum over the supersets of every mask
    for j, low in enumerate(lows):
        if j == node:
            continue
        result[low] = np.maximum(result[low], result[low | (1 << j)])
    return result


def dp_exact_search(table: ScoreTable) -> SearchResult:
    """
    Find a maximum-score DAG by dynamic programming over node subsets.

    Parameters
    ----------
    table : ScoreTable
        Local scores; every node needs its empty parent set.

    Returns
    -------
    result : SearchResult
        The optimal DAG and its score. Among equally good DAGs the one with
        the lexicographically smallest parent mask vector is returned.

    Raises
    ------
    ResourceLimitError
        If the table has more than ``DP_MAX_NODES`` nodes.
    """
    start_time = time.perf_counter()
    n = table.n
    if n > DP_MAX_NODES:
        raise ResourceLimitError(
            f"Dynamic programming needs 2^n subsets, {n} nodes exceed {DP_MAX_NODES}."
        )
    size = 1 << n
    universe = np.arange(size)
    counts = popcount(universe)
    lows = [universe[(universe >> j) & 1 == 0] for j in range(n)]
    best_scores = [best_parent_sets(table, node)[0] for node in range(n)]
    forward = _forward_scores(best_scores, counts)
    backward = _backward_scores(best_scores, counts)

    parents = []
    tie_passes = 0
    for node in range(n):
        entries = table.for_node(node)
        masks = np.asarray(entries["parents"], dtype=np.int64)
        scores = np.asarray(entries["score"], dtype=float)
        optimum = scores + _fixed_parent_reach(forward, backward, node, lows)[masks]
        top = float(optimum.max())
        tied = [int(mask) for mask, value in zip(masks, optimum) if scores_tie(value, top)]
        mask = min(tied)
        parents.append(mask)
        if len(tied) > 1:
            # keep only the optimal DAGs that use this parent set
            fixed_score = float(scores[masks == mask][0])
            best_scores[node] = np.where((universe & mask) == mask, fixed_score, -np.inf)
            forward = _forward_scores(best_scores, counts)
            backward = _backward_scores(best_scores, counts)
            tie_passes += 1

    dag = Dag(n=n, parents=tuple(parents))
    score = table.total_score(dag.parents)
    elapsed = time.perf_counter() - start_time
    log.info(f"Dynamic programming found score {score:.6f} in {elapsed:.3f} s")
    return SearchResult(
        dag=dag,
        score=score,
        optimal=True,
        engine="dp",
        telemetry={"wall_time": elapsed, "subsets": size, "tie_passes": tie_passes},
    )
