"""
Optimal structure search by integer programming with cluster cutting planes.

One binary variable ``fv(r, S)`` is created per score table entry. The model
maximises ``sum score(r, S) fv(r, S)`` subject to one convexity row per node
(exactly one parent set is chosen) and the cluster rows

    ``sum_{r in C} sum_{S : S & C = 0} fv(r, S) >= 1``

for node clusters ``C`` with at least two members, which together exclude
every directed cycle. Cluster rows are only added when the linear relaxation
violates them. When no violated cluster remains and the relaxation is still
fractional the search branches on the most fractional variable. Integral
acyclic solutions are recorded and cut off by no-good rows until no
subproblem can match the best recorded score.
"""

import heapq
import itertools
import time
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import sparse
from scipy.optimize import linprog

import mdm_ipa
from mdm_ipa import log
from mdm_ipa.scoring.local_scores import ScoreTable, prune_score_table
from mdm_ipa.search.dag import Dag, SearchResult, lexicographic_best
from mdm_ipa.util.exceptions import DataError, NumericalError, SearchLimitReached
from mdm_ipa.util.util import popcount

__all__ = [
    "SearchOptions",
    "IpModel",
    "LpSolution",
    "BranchNode",
    "solve_lp_relaxation",
    "separate_clusters",
    "cluster_lhs",
    "most_fractional",
    "branch",
    "ip_search",
]

# values closer than this to 0 or 1 count as integral
INTEGRALITY_TOL = 1e-6
# candidate clusters examined per separation call by the large-network heuristic
MAX_HEURISTIC_CLUSTERS = 2000


@dataclass(frozen=True)
class SearchOptions:
    """Options of the cutting-plane search.

    Parameters
    ----------
    max_cuts_per_round : int
        Most violated cluster rows added after each LP solve.
    violation_tol : float
        A cluster row is violated when its left-hand side is below ``1 - violation_tol``.
    feasibility_tol : float
        Primal feasibility tolerance of the LP engine.
    max_branch_nodes : int
        Branch-and-bound nodes processed before giving up.
    time_limit : float
        Wall time limit in seconds, 0 for none.
    exhaustive_limit : int
        Largest network separated by enumerating every cluster.
    prune : bool
        Prune the score table before building the model.
    """

    max_cuts_per_round: int = 10
    violation_tol: float = 1e-6
    feasibility_tol: float = 1e-7
    max_branch_nodes: int = 100000
    time_limit: float = 0.0
    exhaustive_limit: int = mdm_ipa.MAX_NODES
    prune: bool = True

    @classmethod
    def from_config(cls, config=None, **overrides):
        """Build the options from the ``[search]`` configuration section.
        Keyword arguments that are not None win over the configuration."""
        if config is None:
            config = mdm_ipa.config
        kwargs = {}
        if config.has_section("search"):
            section = config["search"]
            for name in ["max_cuts_per_round", "max_branch_nodes"]:
                if name in section:
                    kwargs[name] = section.getint(name)
            for name in ["violation_tol", "feasibility_tol", "time_limit"]:
                if name in section:
                    kwargs[name] = section.getfloat(name)
        kwargs.update({key: val for key, val in overrides.items() if val is not None})
        return cls(**kwargs)


class IpModel:
    """The integer program of a score table and its pool of cluster rows.

    Parameters
    ----------
    table : ScoreTable

    Attributes
    ----------
    nodes, masks, scores : np.ndarray
        Node, parent mask and objective coefficient of every variable.
    clusters : list of int
        Cluster bitmasks of the pooled rows, in the order they were added.
    no_goods : list of tuple
        Assignments excluded by no-good rows, in the order they were added.
    """

    def __init__(self, table: ScoreTable):
        self.n = table.n
        self.nodes = np.asarray(table["node"], dtype=np.int64)
        self.masks = np.asarray(table["parents"], dtype=np.int64)
        self.scores = np.asarray(table["score"], dtype=float)
        self.clusters = []
        self._cluster_set = set()
        self._rows = []
        self.no_goods = []
        self._no_good_rows = []
        # every variable sits in exactly one convexity row
        self.convexity = sparse.csr_matrix(
            (np.ones(self.num_vars), (self.nodes, np.arange(self.num_vars))),
            shape=(self.n, self.num_vars),
        )
        self.siblings = [np.flatnonzero(self.nodes == node) for node in range(self.n)]

    @property
    def num_vars(self) -> int:
        return len(self.nodes)

    def cluster_row(self, cluster: int) -> np.ndarray:
        """0/1 coefficients of the cluster row: variables of members whose
        parent set lies outside the cluster."""
        inside = ((cluster >> self.nodes) & 1) == 1
        outside = (self.masks & cluster) == 0
        return (inside & outside).astype(float)

    def add_clusters(self, clusters) -> int:
        """Add cluster rows not yet in the pool; return how many were added."""
        added = 0
        for cluster in clusters:
            cluster = int(cluster)
            if cluster in self._cluster_set:
                continue
            self._cluster_set.add(cluster)
            self.clusters.append(cluster)
            self._rows.append(sparse.csr_matrix(self.cluster_row(cluster)))
            added += 1
        return added

    def variable_indices(self, parents) -> np.ndarray:
        """Variable index of every node's parent set in an assignment."""
        indices = []
        for node, mask in enumerate(parents):
            index = self.siblings[node][self.masks[self.siblings[node]] == mask]
            if len(index) == 0:
                raise DataError(f"Node {node} has no entry for parent mask {mask}.")
            indices.append(int(index[0]))
        return np.array(indices, dtype=np.int64)

    def add_no_good(self, parents):
        """Exclude one assignment: at most ``n - 1`` of its variables may be 1."""
        parents = tuple(int(this) for this in parents)
        if parents in self.no_goods:
            return
        row = np.zeros(self.num_vars)
        row[self.variable_indices(parents)] = 1.0
        self.no_goods.append(parents)
        self._no_good_rows.append(sparse.csr_matrix(row))

    def inequality_rows(self):
        """``A_ub, b_ub`` of the cluster and no-good rows in ``A_ub x <= b_ub``
        form, or ``None, None`` when the pool is empty."""
        rows = [-row for row in self._rows] + self._no_good_rows
        if not rows:
            return None, None
        rhs = np.concatenate(
            [-np.ones(len(self._rows)), np.full(len(self._no_good_rows), self.n - 1.0)]
        )
        return sparse.vstack(rows, format="csr"), rhs

    def assignment(self, values: np.ndarray) -> tuple:
        """Parent masks of an integral solution, one per node."""
        parents = [0] * self.n
        for index in np.flatnonzero(values > 0.5):
            parents[self.nodes[index]] = int(self.masks[index])
        return tuple(parents)

    def objective(self, parents) -> float:
        """Sum of the scores of a parent-set assignment, added in node order."""
        total = 0.0
        for index in self.variable_indices(parents):
            total += float(self.scores[index])
        return total


@dataclass(frozen=True)
class LpSolution:
    """A solution of the linear relaxation."""

    values: np.ndarray
    objective: float
    status: str

    @property
    def feasible(self) -> bool:
        return self.status == "optimal"

    def is_integral(self, tol: float = INTEGRALITY_TOL) -> bool:
        return bool(np.all(np.minimum(self.values, 1.0 - self.values) <= tol))


@dataclass(frozen=True)
class BranchNode:
    """A branch-and-bound subproblem given by its fixed variables."""

    fixed_zero: frozenset = field(default_factory=frozenset)
    fixed_one: frozenset = field(default_factory=frozenset)
    bound: float = np.inf
    depth: int = 0


def solve_lp_relaxation(
    model: IpModel, node: BranchNode = None, feasibility_tol: float = 1e-7
) -> LpSolution:
    """
    Solve the linear relaxation over the current row pool.

    Parameters
    ----------
    model : IpModel
    node : BranchNode, optional
        Variables fixed by branching.
    feasibility_tol : float

    Returns
    -------
    solution : LpSolution
        Status is ``"optimal"`` or ``"infeasible"``.

    Raises
    ------
    NumericalError
        If the LP engine fails for another reason.
    """
    if node is None:
        node = BranchNode()
    bounds = np.zeros((model.num_vars, 2))
    bounds[:, 1] = 1.0
    if node.fixed_zero:
        bounds[list(node.fixed_zero), 1] = 0.0
    if node.fixed_one:
        bounds[list(node.fixed_one), 0] = 1.0
    a_ub, b_ub = model.inequality_rows()
    result = linprog(
        -model.scores,
        A_ub=a_ub,
        b_ub=b_ub,
        A_eq=model.convexity,
        b_eq=np.ones(model.n),
        bounds=bounds,
        method="highs",
        options={"primal_feasibility_tolerance": feasibility_tol},
    )
    if result.status == 2:
        return LpSolution(values=np.zeros(model.num_vars), objective=-np.inf, status="infeasible")
    if result.status != 0:
        raise NumericalError(
            "Linear relaxation failed.",
            report={"status": result.status, "message": result.message},
        )
    values = np.clip(result.x, 0.0, 1.0)
    return LpSolution(values=values, objective=float(-result.fun), status="optimal")


def cluster_lhs(model: IpModel, clusters, values: np.ndarray, block: int = 64) -> np.ndarray:
    """Left-hand side of the cluster rows of ``clusters`` at ``values``."""
    clusters = np.asarray(clusters, dtype=np.int64)
    support = np.flatnonzero(values > 1e-12)
    result = np.zeros(len(clusters))
    for first in range(0, len(support), block):
        these = support[first : first + block]
        inside = ((clusters[:, np.newaxis] >> model.nodes[these]) & 1) == 1
        outside = (clusters[:, np.newaxis] & model.masks[these]) == 0
        result += (inside & outside) @ values[these]
    return result


def _all_clusters(n: int) -> np.ndarray:
    universe = np.arange(1 << n, dtype=np.int64)
    return universe[popcount(universe) >= 2]


def _heuristic_clusters(model: IpModel, values: np.ndarray) -> np.ndarray:
    """Candidate clusters from the cycles and strongly connected components of
    the support digraph."""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(model.n))
    for index in np.flatnonzero(values > 1e-12):
        child = int(model.nodes[index])
        mask = int(model.masks[index])
        for parent in range(model.n):
            if (mask >> parent) & 1:
                graph.add_edge(parent, child)
    candidates = set()
    for component in nx.strongly_connected_components(graph):
        if len(component) >= 2:
            candidates.add(sum(1 << node for node in component))
    for cycle in itertools.islice(nx.simple_cycles(graph), MAX_HEURISTIC_CLUSTERS):
        if len(cycle) >= 2:
            candidates.add(sum(1 << node for node in cycle))
    return np.array(sorted(candidates), dtype=np.int64)


def separate_clusters(
    sol: LpSolution,
    model: IpModel,
    max_cuts: int = 10,
    violation_tol: float = 1e-6,
    exhaustive_limit: int = mdm_ipa.MAX_NODES,
) -> list:
    """
    Find cluster rows violated by a relaxation solution.

    Up to ``exhaustive_limit`` nodes every cluster of two or more nodes is
    checked; larger networks check the clusters suggested by the cycles of
    the solution's support digraph.

    Parameters
    ----------
    sol : LpSolution
    model : IpModel
    max_cuts : int
        Number of clusters returned at most, most violated first.
    violation_tol : float
    exhaustive_limit : int

    Returns
    -------
    clusters : list of int
        Violated cluster bitmasks ordered by left-hand side, then bitmask.
        Empty when none is violated.

    Examples
    --------
    A two-cycle between nodes 0 and 1 violates the cluster {0, 1}:

    >>> from mdm_ipa.scoring.local_scores import ScoreTable
    >>> table = ScoreTable.from_entries(2, [(0, 0, -1.0), (0, 2, 0.0), (1, 0, -1.0), (1, 1, 0.0)])
    >>> model = IpModel(table)
    >>> sol = LpSolution(values=np.array([0.0, 1.0, 0.0, 1.0]), objective=0.0, status="optimal")
    >>> separate_clusters(sol, model)
    [3]
    """
    if model.n < 2:
        return []
    if model.n <= exhaustive_limit:
        clusters = _all_clusters(model.n)
    else:
        clusters = _heuristic_clusters(model, sol.values)
        if len(clusters) == 0:
            return []
    lhs = cluster_lhs(model, clusters, sol.values)
    violated = np.flatnonzero(lhs < 1.0 - violation_tol)
    order = np.lexsort((clusters[violated], lhs[violated]))
    return [int(this) for this in clusters[violated][order][:max_cuts]]


def most_fractional(sol: LpSolution, tol: float = INTEGRALITY_TOL):
    """Index of the variable closest to 0.5, the smallest index on ties, or
    None if the solution is integral."""
    distance = np.minimum(sol.values, 1.0 - sol.values)
    if np.all(distance <= tol):
        return None
    return int(np.argmax(distance))


def branch(model: IpModel, sol: LpSolution, node: BranchNode) -> tuple:
    """
    Split a subproblem on the most fractional variable.

    Returns
    -------
    zero_child, one_child : BranchNode, BranchNode
        The variable fixed to 0, and fixed to 1 together with every other
        parent set of the same node fixed to 0.

    Raises
    ------
    ValueError
        If the solution is integral.
    """
    index = most_fractional(sol)
    if index is None:
        raise ValueError("Cannot branch on an integral solution.")
    siblings = set(int(this) for this in model.siblings[model.nodes[index]]) - {index}
    zero_child = BranchNode(
        fixed_zero=node.fixed_zero | {index},
        fixed_one=node.fixed_one,
        bound=sol.objective,
        depth=node.depth + 1,
    )
    one_child = BranchNode(
        fixed_zero=node.fixed_zero | siblings,
        fixed_one=node.fixed_one | {index},
        bound=sol.objective,
        depth=node.depth + 1,
    )
    return zero_child, one_child


def _is_acyclic(n: int, parents) -> bool:
    try:
        Dag(n=n, parents=parents)
    except DataError:
        return False
    return True


def _cycle_cluster(n: int, parents) -> int:
    graph = Dag.empty(n).to_networkx()
    for child, mask in enumerate(parents):
        for parent in range(n):
            if (mask >> parent) & 1:
                graph.add_edge(parent, child)
    return sum(1 << edge[0] for edge in nx.find_cycle(graph))


def ip_search(table: ScoreTable, opts: SearchOptions = None) -> SearchResult:
    """
    Find a maximum-score DAG with the cutting-plane integer program.

    Every integral acyclic solution met is recorded with its exact score and
    then excluded by a no-good row, so subproblems are only discarded when
    their bound is clearly below the best recorded score. Among equally good
    DAGs the one with the lexicographically smallest parent mask vector is
    returned.

    Parameters
    ----------
    table : ScoreTable
    opts : SearchOptions

    Returns
    -------
    result : SearchResult
        The optimal DAG with telemetry ``lp_solves``, ``cuts_added``,
        ``branch_nodes``, ``cut_rounds``, ``root_bounds``, ``solutions`` and
        ``wall_time``.

    Raises
    ------
    SearchLimitReached
        When the branch node or time limit is hit; ``err.result`` holds the
        incumbent flagged as not optimal.
    """
    if opts is None:
        opts = SearchOptions.from_config()
    start_time = time.perf_counter()
    search_table = prune_score_table(table) if opts.prune else table
    model = IpModel(search_table)
    telemetry = {
        "lp_solves": 0,
        "cuts_added": 0,
        "branch_nodes": 0,
        "cut_rounds": 0,
        "root_bounds": [],
        "solutions": 0,
        "variables": model.num_vars,
    }

    empty = Dag.empty(model.n).parents
    solutions = {empty: model.objective(empty)}
    best_score = solutions[empty]

    def prune_tol(value):
        return 1e-9 * max(1.0, abs(value))

    def make_result(optimal):
        telemetry["wall_time"] = time.perf_counter() - start_time
        telemetry["clusters"] = len(model.clusters)
        parents, _ = lexicographic_best(solutions)
        dag = Dag(n=model.n, parents=parents)
        return SearchResult(
            dag=dag,
            score=table.total_score(dag.parents),
            optimal=optimal,
            engine="ip",
            telemetry=dict(telemetry),
        )

    counter = itertools.count()
    queue = [(-np.inf, next(counter), BranchNode())]
    while queue:
        _, _, node = heapq.heappop(queue)
        if node.bound < best_score - prune_tol(best_score):
            continue
        telemetry["branch_nodes"] += 1
        if telemetry["branch_nodes"] > opts.max_branch_nodes:
            raise SearchLimitReached(
                f"Branch node limit {opts.max_branch_nodes} reached.",
                result=make_result(False),
            )
        while True:
            if opts.time_limit > 0 and time.perf_counter() - start_time > opts.time_limit:
                raise SearchLimitReached(
                    f"Time limit of {opts.time_limit} s reached.",
                    result=make_result(False),
                )
            sol = solve_lp_relaxation(model, node, opts.feasibility_tol)
            telemetry["lp_solves"] += 1
            if node.depth == 0:
                if sol.feasible:
                    telemetry["root_bounds"].append(sol.objective)
                elif not model.no_goods:
                    raise NumericalError("The root relaxation is infeasible.")
            if not sol.feasible or sol.objective < best_score - prune_tol(best_score):
                sol = None
                break
            clusters = separate_clusters(
                sol,
                model,
                max_cuts=opts.max_cuts_per_round,
                violation_tol=opts.violation_tol,
                exhaustive_limit=opts.exhaustive_limit,
            )
            if not clusters and sol.is_integral():
                parents = model.assignment(sol.values)
                if _is_acyclic(model.n, parents):
                    score = model.objective(parents)
                    solutions[parents] = score
                    telemetry["solutions"] += 1
                    if score > best_score:
                        best_score = score
                        log.debug(f"New incumbent with score {score:.6f}")
                    # look for equally good DAGs in the same subproblem
                    model.add_no_good(parents)
                    continue
                clusters = [_cycle_cluster(model.n, parents)]
            added = model.add_clusters(clusters)
            if added == 0:
                # nothing left to cut, or pooled rows violated only within the LP tolerance
                break
            telemetry["cuts_added"] += added
            telemetry["cut_rounds"] += 1
            log.debug(
                f"Cut round {telemetry['cut_rounds']}: bound {sol.objective:.6f}, "
                f"{added} clusters added"
            )
        if sol is None:
            continue
        if sol.is_integral():
            raise NumericalError(
                "An integral relaxation solution contains a cycle no pooled row excludes."
            )
        for child in branch(model, sol, node):
            heapq.heappush(queue, (-child.bound, next(counter), child))

    result = make_result(True)
    log.info(
        f"Integer program proved optimality: score {result.score:.6f}, "
        f"{telemetry['lp_solves']} LP solves, {telemetry['cuts_added']} cuts, "
        f"{telemetry['branch_nodes']} branch nodes in {result.telemetry['wall_time']:.2f} s"
    )
    return result
