"""
Group-level analysis of networks estimated for several subjects.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from mdm_ipa import log
from mdm_ipa.util.exceptions import DataError

__all__ = [
    "GroupPrevalence",
    "group_prevalence",
    "fdr_significant",
    "correlation_significance",
    "delta_summary",
]


@dataclass(frozen=True)
class GroupPrevalence:
    """Edge prevalence over subjects.

    Attributes
    ----------
    phat : np.ndarray
        ``n x n`` fraction of subjects with edge ``i -> j``; zero diagonal.
    pi : float
        Edge rate under homogeneity, the mean of ``phat`` over the
        ``n (n - 1)`` directed pairs.
    subjects : int
        Number of subjects.
    """

    phat: np.ndarray
    pi: float
    subjects: int

    @property
    def counts(self) -> np.ndarray:
        return np.rint(self.phat * self.subjects).astype(int)


def group_prevalence(dags) -> GroupPrevalence:
    """
    Estimate the prevalence of every directed edge.

    Examples
    --------
    >>> from mdm_ipa.search.dag import Dag
    >>> prev = group_prevalence([Dag.from_edges(2, [(0, 1)]), Dag.empty(2)])
    >>> float(prev.phat[0, 1]), prev.pi
    (0.5, 0.25)
    """
    dags = list(dags)
    if not dags:
        raise DataError("No networks given.")
    n = dags[0].n
    if any(this.n != n for this in dags):
        raise DataError("All networks must have the same number of nodes.")
    phat = np.mean([this.adjacency() for this in dags], axis=0)
    off_diagonal = ~np.eye(n, dtype=bool)
    pi = float(phat[off_diagonal].mean()) if n > 1 else 0.0
    return GroupPrevalence(phat=phat, pi=pi, subjects=len(dags))


def fdr_significant(
    prev: GroupPrevalence, alpha: float = 0.05, subjects: int = None
) -> np.ndarray:
    """
    Edges more prevalent than the homogeneous rate, at a false discovery rate.

    Each directed edge gets the one-sided exact binomial p-value of its count
    under ``Binomial(subjects, pi)``; the Benjamini-Hochberg procedure is then
    applied over all ``n (n - 1)`` edges.

    Parameters
    ----------
    prev : GroupPrevalence
    alpha : float
        False discovery rate; 0 or less flags nothing.
    subjects : int, optional
        Defaults to the number of subjects in ``prev``.

    Returns
    -------
    mask : np.ndarray
        Boolean ``n x n`` matrix of significant edges.
    """
    if subjects is None:
        subjects = prev.subjects
    if subjects < 1:
        raise ValueError(f"Need at least one subject, got {subjects}.")
    n = prev.phat.shape[0]
    mask = np.zeros((n, n), dtype=bool)
    if alpha <= 0 or n < 2:
        return mask
    off_diagonal = ~np.eye(n, dtype=bool)
    counts = np.rint(prev.phat[off_diagonal] * subjects)
    pvalues = stats.binom.sf(counts - 1, subjects, prev.pi)
    qvalues = stats.false_discovery_control(pvalues, method="bh")
    mask[off_diagonal] = qvalues <= alpha
    log.debug(f"{int(mask.sum())} of {n * (n - 1)} edges significant at FDR {alpha}")
    return mask


def correlation_significance(data, alpha: float = 0.05, partial: bool = False) -> tuple:
    """
    Full or partial correlations between node series with two-sided Fisher-z
    tests.

    Parameters
    ----------
    data : np.ndarray
        ``T x n`` data matrix.
    alpha : float
    partial : bool
        Condition each pair on all other nodes.

    Returns
    -------
    correlation, pvalues, mask : np.ndarray
        ``n x n`` matrices; the diagonal of ``mask`` is False.
    """
    data = np.asarray(data, dtype=float)
    T, n = data.shape
    correlation = np.corrcoef(data, rowvar=False)
    conditioned = 0
    if partial:
        precision = np.linalg.pinv(np.cov(data, rowvar=False))
        scale = np.sqrt(np.diag(precision))
        correlation = -precision / np.outer(scale, scale)
        np.fill_diagonal(correlation, 1.0)
        conditioned = n - 2
    dof = T - 3 - conditioned
    if dof < 1:
        raise DataError(f"{T} time points are too few for {n} nodes.")
    clipped = np.clip(correlation, -1 + 1e-15, 1 - 1e-15)
    z = np.arctanh(clipped) * np.sqrt(dof)
    pvalues = 2 * stats.norm.sf(np.abs(z))
    np.fill_diagonal(pvalues, 1.0)
    mask = pvalues < alpha
    np.fill_diagonal(mask, False)
    return correlation, pvalues, mask


def delta_summary(best_deltas, dags, groups: dict = None) -> dict:
    """
    Mean best discount factor over the nodes that have parents.

    Parameters
    ----------
    best_deltas : list of array-like
        Per subject (or replication), the best discount factor of every node.
    dags : list of Dag
        The matching networks.
    groups : dict, optional
        ``{name: nodes}`` to also average over subsets of nodes.

    Returns
    -------
    summary : dict
        ``{"all": mean, name: mean, ...}``; NaN when no node qualifies.
    """
    groups = dict(groups or {})
    selected = {"all": []}
    selected.update({name: [] for name in groups})
    for deltas, dag in zip(best_deltas, dags, strict=True):
        for node in range(dag.n):
            if dag.parents[node] == 0:
                continue
            selected["all"].append(deltas[node])
            for name, nodes in groups.items():
                if node in nodes:
                    selected[name].append(deltas[node])
    return {
        name: float(np.mean(values)) if values else np.nan
        for name, values in selected.items()
    }
