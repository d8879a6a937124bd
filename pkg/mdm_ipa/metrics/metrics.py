"""
Structure recovery metrics of an estimated DAG against the true one.

Skeleton metrics compare undirected pairs; a true positive is a pair joined
in both graphs whatever the direction. Ratios with a zero denominator are
returned as NaN so that averages over replications skip them.
"""

from dataclasses import dataclass

import numpy as np
from astropy.table import Table

from mdm_ipa.search.dag import Dag
from mdm_ipa.util.exceptions import DataError

__all__ = [
    "ConfusionCounts",
    "confusion",
    "c_sensitivity",
    "d_accuracy",
    "hpd_coverage",
    "false_positive_situations",
    "summarize",
]


@dataclass(frozen=True)
class ConfusionCounts:
    """Counts over the ``n (n - 1) / 2`` undirected node pairs."""

    TP: int
    FP: int
    TN: int
    FN: int

    @property
    def total(self) -> int:
        return self.TP + self.FP + self.TN + self.FN


def _check_same_size(true_dag: Dag, est_dag: Dag):
    if true_dag.n != est_dag.n:
        raise DataError(f"DAGs have {true_dag.n} and {est_dag.n} nodes.")


def confusion(true_dag: Dag, est_dag: Dag) -> ConfusionCounts:
    """
    Compare the skeletons of two DAGs.

    Examples
    --------
    >>> from mdm_ipa.search.dag import Dag
    >>> chain = Dag.from_edges(3, [(0, 1), (1, 2)])
    >>> confusion(chain, Dag.empty(3))
    ConfusionCounts(TP=0, FP=0, TN=1, FN=2)
    """
    _check_same_size(true_dag, est_dag)
    true_skeleton = true_dag.skeleton()
    est_skeleton = est_dag.skeleton()
    n = true_dag.n
    tp = len(true_skeleton & est_skeleton)
    fp = len(est_skeleton - true_skeleton)
    fn = len(true_skeleton - est_skeleton)
    tn = n * (n - 1) // 2 - tp - fp - fn
    return ConfusionCounts(TP=tp, FP=fp, TN=tn, FN=fn)


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator > 0 else np.nan


def c_sensitivity(counts: ConfusionCounts) -> dict:
    """
    Sensitivity, specificity, positive and negative predictive values and
    success rate of a skeleton comparison.

    Returns
    -------
    ratios : dict
        Keys ``Sens``, ``Spec``, ``PPV``, ``NPV`` and ``SR``; NaN where the
        denominator is zero.
    """
    return {
        "Sens": _ratio(counts.TP, counts.TP + counts.FN),
        "Spec": _ratio(counts.TN, counts.TN + counts.FP),
        "PPV": _ratio(counts.TP, counts.TP + counts.FP),
        "NPV": _ratio(counts.TN, counts.TN + counts.FN),
        "SR": _ratio(counts.TP + counts.TN, counts.total),
    }


def d_accuracy(true_dag: Dag, est_dag: Dag) -> float:
    """
    Fraction of the estimated edges joining a truly connected pair that point
    the same way as the true edge; NaN if no estimated edge joins such a pair.
    """
    _check_same_size(true_dag, est_dag)
    true_edges = set(true_dag.edges)
    true_skeleton = true_dag.skeleton()
    matched = [edge for edge in est_dag.edges if frozenset(edge) in true_skeleton]
    if not matched:
        return np.nan
    return sum(edge in true_edges for edge in matched) / len(matched)


def hpd_coverage(smoothed, truth) -> np.ndarray:
    """
    Fraction of time points at which the true coefficient lies inside the
    interval.

    Parameters
    ----------
    smoothed : SmoothedTrajectory
        Intervals ``hpd_lo`` / ``hpd_hi`` of shape ``T x p``.
    truth : array-like
        True values, ``T x p``, ``T`` or a scalar (e.g. 0 for an absent edge).

    Returns
    -------
    coverage : np.ndarray
        One fraction per coefficient.
    """
    lo = np.asarray(smoothed.hpd_lo)
    hi = np.asarray(smoothed.hpd_hi)
    truth = np.asarray(truth, dtype=float)
    if truth.ndim == 1:
        truth = truth[:, np.newaxis]
    if truth.ndim == 2 and truth.shape[0] != lo.shape[0]:
        raise DataError(f"Truth has {truth.shape[0]} times, intervals have {lo.shape[0]}.")
    inside = (lo <= truth) & (truth <= hi)
    return inside.mean(axis=0)


def false_positive_situations(true_dag: Dag, est_dag: Dag) -> dict:
    """
    Split the wrongly estimated directed edges.

    Returns
    -------
    situations : dict
        ``{1: [...], 2: [...]}``: situation 1 holds edges whose reverse is a
        true edge, situation 2 edges between pairs not joined in the truth.
    """
    _check_same_size(true_dag, est_dag)
    true_edges = set(true_dag.edges)
    result = {1: [], 2: []}
    for parent, child in est_dag.edges:
        if (parent, child) in true_edges:
            continue
        if (child, parent) in true_edges:
            result[1].append((parent, child))
        else:
            result[2].append((parent, child))
    return result


def summarize(rows: Table, columns=None) -> dict:
    """
    Mean and standard error of metric columns, skipping NaN entries.

    Returns
    -------
    summary : dict
        ``{column: {"mean", "std_error", "count", "skipped"}}``; the standard
        error is NaN with fewer than two values.
    """
    if columns is None:
        columns = [name for name in rows.colnames if rows[name].dtype.kind == "f"]
    summary = {}
    for name in columns:
        values = np.asarray(rows[name], dtype=float)
        valid = values[np.isfinite(values)]
        count = len(valid)
        summary[name] = {
            "mean": float(np.mean(valid)) if count else np.nan,
            "std_error": float(np.std(valid, ddof=1) / np.sqrt(count)) if count > 1 else np.nan,
            "count": count,
            "skipped": int(len(values) - count),
        }
    return summary
