"""
The directed acyclic graph returned by structure search.
"""

from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from mdm_ipa.util.exceptions import DataError
from mdm_ipa.util.util import mask_to_parents, parents_to_mask

__all__ = ["Dag", "SearchResult", "SCORE_TIE_TOL", "scores_tie", "lexicographic_best"]

# network scores closer than this, relative to their magnitude, are equally good
SCORE_TIE_TOL = 1e-12


def scores_tie(first: float, second: float, rel_tol: float = SCORE_TIE_TOL) -> bool:
    """Whether two network scores are equal up to summation round-off."""
    if not (np.isfinite(first) and np.isfinite(second)):
        return first == second
    return abs(first - second) <= rel_tol * max(1.0, abs(first), abs(second))


def lexicographic_best(solutions: dict) -> tuple:
    """
    Pick the best of several parent-set assignments.

    Parameters
    ----------
    solutions : dict
        Network score keyed by parent mask tuple.

    Returns
    -------
    parents, score : tuple, float
        Among the assignments whose score ties with the maximum, the one with
        the lexicographically smallest parent mask vector.

    Examples
    --------
    >>> lexicographic_best({(2, 0): 1.0, (0, 1): 1.0, (0, 0): 0.0})
    ((0, 1), 1.0)
    """
    top = max(solutions.values())
    parents = min(this for this, score in solutions.items() if scores_tie(score, top))
    return parents, solutions[parents]


@dataclass(frozen=True)
class Dag:
    """A parent-set assignment with an acyclic induced digraph.

    Parameters
    ----------
    n : int
        Number of nodes.
    parents : tuple of int
        The parent set of every node as a bitmask over 0-based node indices.

    Examples
    --------
    >>> from mdm_ipa.search.dag import Dag
    >>> dag = Dag.from_edges(3, [(0, 1), (1, 2)])
    >>> dag.edges
    [(0, 1), (1, 2)]
    >>> print(dag.to_edge_list())
    1 -> 2
    2 -> 3
    """

    n: int
    parents: tuple

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(int(this) for this in self.parents))
        if len(self.parents) != self.n:
            raise DataError(
                f"Expected one parent set per node ({self.n}), got {len(self.parents)}."
            )
        for node, mask in enumerate(self.parents):
            if mask < 0 or mask >> self.n:
                raise DataError(f"Parent set of node {node} refers to unknown nodes.")
            if (mask >> node) & 1:
                raise DataError(f"Node {node} is listed as its own parent.")
        if not nx.is_directed_acyclic_graph(self.to_networkx()):
            cycle = nx.find_cycle(self.to_networkx())
            raise DataError(f"Parent sets contain a directed cycle: {cycle}.")

    @classmethod
    def empty(cls, n: int) -> "Dag":
        return cls(n=n, parents=(0,) * n)

    @classmethod
    def from_edges(cls, n: int, edges) -> "Dag":
        """Create a DAG from ``(parent, child)`` pairs of 0-based indices."""
        parents = [0] * n
        for parent, child in edges:
            if not (0 <= parent < n and 0 <= child < n):
                raise DataError(f"Edge {parent} -> {child} is outside 0..{n - 1}.")
            parents[child] |= 1 << int(parent)
        return cls(n=n, parents=tuple(parents))

    @classmethod
    def from_parent_lists(cls, parent_lists) -> "Dag":
        return cls(
            n=len(parent_lists),
            parents=tuple(parents_to_mask(these) for these in parent_lists),
        )

    @classmethod
    def from_adjacency(cls, adjacency) -> "Dag":
        """Create a DAG from an ``n x n`` 0/1 matrix with ``A[i, j] = 1`` for ``i -> j``."""
        adjacency = np.asarray(adjacency)
        n = adjacency.shape[0]
        return cls.from_edges(n, zip(*np.nonzero(adjacency)))

    def parents_of(self, node: int) -> tuple:
        return mask_to_parents(self.parents[node])

    @property
    def edges(self) -> list:
        """Sorted ``(parent, child)`` pairs."""
        return sorted(
            (parent, child)
            for child in range(self.n)
            for parent in mask_to_parents(self.parents[child])
        )

    def adjacency(self) -> np.ndarray:
        """``n x n`` integer matrix with ``A[i, j] = 1`` for an edge ``i -> j``."""
        result = np.zeros((self.n, self.n), dtype=int)
        for parent, child in self.edges:
            result[parent, child] = 1
        return result

    def skeleton(self) -> set:
        """Undirected edges as frozensets of node pairs."""
        return {frozenset(this_edge) for this_edge in self.edges}

    def reversed(self) -> "Dag":
        """The DAG with every edge reversed."""
        return Dag.from_edges(self.n, [(child, parent) for parent, child in self.edges])

    def to_networkx(self) -> nx.DiGraph:
        graph = nx.DiGraph()
        graph.add_nodes_from(range(self.n))
        graph.add_edges_from(
            (parent, child)
            for child in range(self.n)
            for parent in mask_to_parents(self.parents[child])
        )
        return graph

    def topological_order(self) -> list:
        """Nodes ordered parents first, ties broken by index."""
        return list(nx.lexicographical_topological_sort(self.to_networkx()))

    def score(self, table) -> float:
        """Sum of the local scores of this DAG's parent sets in ``table``."""
        if table.n != self.n:
            raise DataError(f"Score table has {table.n} nodes, DAG has {self.n}.")
        return table.total_score(self.parents)

    def to_edge_list(self) -> str:
        """One ``i -> j`` line per edge, 1-based."""
        return "\n".join(f"{parent + 1} -> {child + 1}" for parent, child in self.edges)

    def to_dot(self, name: str = "mdm") -> str:
        """The DAG in Graphviz DOT format, nodes labelled 1..n."""
        lines = [f"digraph {name} {{"]
        lines += [f"  {node + 1};" for node in range(self.n)]
        lines += [f"  {parent + 1} -> {child + 1};" for parent, child in self.edges]
        lines.append("}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "parents": {
                str(node + 1): [this + 1 for this in mask_to_parents(mask)]
                for node, mask in enumerate(self.parents)
            },
            "edges": [[parent + 1, child + 1] for parent, child in self.edges],
        }


@dataclass
class SearchResult:
    """The outcome of a structure search.

    Attributes
    ----------
    dag : Dag
        The best DAG found.
    score : float
        Sum of its local scores, added in node order.
    optimal : bool
        False when the search stopped on a limit before proving optimality.
    engine : str
        ``"dp"`` or ``"ip"``.
    telemetry : dict
        Solver counters, e.g. LP solves, cuts added and branch nodes.
    """

    dag: Dag
    score: float
    optimal: bool = True
    engine: str = "dp"
    telemetry: dict = field(default_factory=dict)

    def to_dict(self, table=None) -> dict:
        """A JSON-ready report; with ``table`` the discount factor of every
        chosen parent set is included."""
        result = {
            "engine": self.engine,
            "score": self.score,
            "optimal": self.optimal,
            "dag": self.dag.to_dict(),
            "telemetry": dict(self.telemetry),
        }
        if table is not None:
            lookup = table.to_dict()
            result["best_delta"] = {
                str(node + 1): lookup[node][mask][1]
                for node, mask in enumerate(self.dag.parents)
            }
        return result
