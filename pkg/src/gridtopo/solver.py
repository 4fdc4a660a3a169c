"""Solving the linearized design model to proven optimality.

The branch-and-bound explores z-fixings best-bound first, bounding each node
with the LP relaxation (HiGHS dual simplex behind a thin wrapper) and pruning
nodes whose forced-off lines disconnect the remaining graph or whose minimum
completion exceeds the budget. Integral leaves are re-evaluated by exact
factorization so LP tolerances never leak into the incumbent.

Ties are resolved deterministically: after the optimal value is certified, a
second depth-first pass in line-index order (zero branch first, bound-pruned
against the known optimum) recovers the lexicographically smallest optimal
selection, matching the brute-force oracle's tie-break exactly.
"""

from __future__ import annotations

import heapq
import itertools
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog

from . import netgraph
from .dynamics import NonUniformDampingError
from .formulation import DesignProblem, MilpModel

log = logging.getLogger("gridtopo.solver")

LP_FEAS_TOL = 1e-8
INTEGRALITY_TOL = 1e-6
TIE_REL_TOL = 1e-9
BRUTE_FORCE_EDGE_GUARD = 25


class DisconnectedTopologyError(ValueError):
    """Selected line set does not connect the grid."""


class InfeasibleDesignError(ValueError):
    """No connected topology exists within the budget."""


class SolverNumericalError(RuntimeError):
    """LP backend reported a numerical breakdown."""


# ---------------------------------------------------------------------------
# LP wrapper
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LpProblem:
    """Continuous LP: minimize c x subject to equality/inequality rows and box bounds."""

    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    a_eq: sp.spmatrix | np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: sp.spmatrix | np.ndarray | None = None
    b_ub: np.ndarray | None = None


@dataclass(frozen=True)
class LpResult:
    status: str  # optimal | infeasible | unbounded
    value: float | None
    x: np.ndarray | None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def solve_lp(p: LpProblem) -> LpResult:
    """Solve the LP with the HiGHS dual simplex (basic optimal solutions,
    anti-cycling pivoting); tightened feasibility tolerances."""
    res = linprog(
        c=p.c,
        A_ub=p.a_ub,
        b_ub=p.b_ub,
        A_eq=p.a_eq,
        b_eq=p.b_eq,
        bounds=np.column_stack([p.lb, p.ub]),
        method="highs-ds",
        options={
            "primal_feasibility_tolerance": 1e-9,
            "dual_feasibility_tolerance": 1e-9,
        },
    )
    if res.status == 0:
        return LpResult(status="optimal", value=float(res.fun), x=np.asarray(res.x))
    if res.status == 2:
        return LpResult(status="infeasible", value=None, x=None)
    if res.status == 3:
        return LpResult(status="unbounded", value=None, x=None)
    raise SolverNumericalError(f"LP solver breakdown (status {res.status}): {res.message}")


# ---------------------------------------------------------------------------
# Direct topology evaluation
# ---------------------------------------------------------------------------


def evaluate_topology(problem: DesignProblem, z: Sequence[int]) -> float:
    """Design objective of a binary selection by dense factorization."""
    pairs = [l.pair for m, l in enumerate(problem.lines) if z[m]]
    if not netgraph.pairs_connected(pairs, problem.n_buses):
        raise DisconnectedTopologyError("selected lines do not connect the grid")
    lines = [l for m, l in enumerate(problem.lines) if z[m]]
    lap = netgraph.build_laplacian(lines, problem.n_buses, problem.reference)
    try:
        cf = cho_factor(lap.reduced)
    except np.linalg.LinAlgError as exc:
        raise DisconnectedTopologyError("reduced Laplacian is singular") from exc
    return float(np.trace(cho_solve(cf, problem.reduced_w.T)))


def _x_star(problem: DesignProblem, z: Sequence[int]) -> np.ndarray:
    lines = [l for m, l in enumerate(problem.lines) if z[m]]
    lap = netgraph.build_laplacian(lines, problem.n_buses, problem.reference)
    return np.linalg.inv(lap.reduced)


def _full_h2(problem: DesignProblem, topo: float) -> float | None:
    try:
        d = problem.params.uniform_damping
    except NonUniformDampingError:
        return None
    freq = float(np.sum(problem.spec.s / problem.params.inertia))
    return (topo + freq) / (2.0 * d)


# ---------------------------------------------------------------------------
# Solutions and statistics
# ---------------------------------------------------------------------------


@dataclass
class SolverStats:
    nodes_explored: int = 0
    lp_solves: int = 0
    incumbent_updates: int = 0
    final_gap: float = 0.0
    wall_time: float = 0.0
    proved_optimal: bool = True

    def as_dict(self) -> dict:
        return {
            "nodes_explored": self.nodes_explored,
            "lp_solves": self.lp_solves,
            "incumbent_updates": self.incumbent_updates,
            "final_gap": self.final_gap,
            "wall_time": self.wall_time,
            "proved_optimal": self.proved_optimal,
        }


@dataclass(frozen=True)
class DesignSolution:
    z: tuple[int, ...]
    selected_edges: tuple[tuple[int, int], ...]
    objective: float
    h2_squared: float | None
    x_star: np.ndarray = field(repr=False)
    stats: SolverStats = field(repr=False)


def _make_solution(problem: DesignProblem, z: tuple[int, ...], cost: float, stats) -> DesignSolution:
    pairs = tuple(sorted(l.pair for m, l in enumerate(problem.lines) if z[m]))
    return DesignSolution(
        z=z,
        selected_edges=pairs,
        objective=cost,
        h2_squared=_full_h2(problem, cost),
        x_star=_x_star(problem, z),
        stats=stats,
    )


def _tie_tol(cost: float) -> float:
    return TIE_REL_TOL * max(1.0, abs(cost))


# ---------------------------------------------------------------------------
# Brute-force oracle
# ---------------------------------------------------------------------------


def brute_force_design(problem: DesignProblem) -> DesignSolution:
    """Exact optimum by enumerating connected selections within budget.

    Tie-break: lexicographically smallest selection vector. Guarded to 25
    candidate lines.
    """
    t0 = time.perf_counter()
    nlines = len(problem.lines)
    if nlines > BRUTE_FORCE_EDGE_GUARD:
        raise ValueError(
            f"brute force guarded to {BRUTE_FORCE_EDGE_GUARD} candidate lines, got {nlines}"
        )
    fixed = set(problem.existing_indices)
    free = [m for m in range(nlines) if m not in fixed]
    max_extra = problem.budget - len(fixed)
    if max_extra < 0:
        raise InfeasibleDesignError("budget below the number of existing lines")

    best_z: tuple[int, ...] | None = None
    best_cost = float("inf")
    evaluated = 0
    for r in range(0, max_extra + 1):
        for sel in itertools.combinations(free, r):
            z = tuple(1 if (m in fixed or m in sel) else 0 for m in range(nlines))
            try:
                cost = evaluate_topology(problem, z)
            except DisconnectedTopologyError:
                continue
            evaluated += 1
            if best_z is None or cost < best_cost - _tie_tol(best_cost):
                best_z, best_cost = z, cost
            elif cost <= best_cost + _tie_tol(best_cost) and z < best_z:
                best_z = z
    if best_z is None:
        raise InfeasibleDesignError("no connected topology within budget")
    stats = SolverStats(
        nodes_explored=evaluated,
        wall_time=time.perf_counter() - t0,
        proved_optimal=True,
    )
    return _make_solution(problem, best_z, best_cost, stats)


# ---------------------------------------------------------------------------
# Branch-and-bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BnbNode:
    """Partial selection: free-line fixings plus the parent LP bound."""

    fixings: tuple[tuple[int, int], ...]  # (line index, 0/1), sorted
    bound: float
    depth: int


class _Search:
    """Shared machinery for the main search and the tie-break pass."""

    def __init__(self, model: MilpModel, problem: DesignProblem):
        self.model = model
        self.problem = problem
        self.free = sorted(model.z_cols)
        self.fixed_on = set(model.fixed_edges)
        self.pairs = [l.pair for l in problem.lines]
        self.stats = SolverStats()

    def completable(self, fix: dict[int, int]) -> bool:
        """Exact feasibility of completing the partial selection: the not-off
        lines must connect the grid and the cheapest completion must fit the
        budget."""
        n = self.problem.n_buses
        uf_avail = netgraph._UnionFind(n)
        comps_avail = n
        uf_on = netgraph._UnionFind(n)
        comps_on = n
        n_on = 0
        for m, (i, j) in enumerate(self.pairs):
            forced_on = m in self.fixed_on or fix.get(m) == 1
            if fix.get(m) == 0:
                continue
            if uf_avail.union(i, j):
                comps_avail -= 1
            if forced_on:
                n_on += 1
                if uf_on.union(i, j):
                    comps_on -= 1
        if comps_avail != 1:
            return False
        return n_on + (comps_on - 1) <= self.problem.budget

    def node_lp(self, fix: dict[int, int]) -> LpResult:
        self.stats.lp_solves += 1
        lb = self.model.lb.copy()
        ub = self.model.ub.copy()
        for m, val in fix.items():
            col = self.model.z_cols[m]
            lb[col] = ub[col] = float(val)
        return solve_lp(
            LpProblem(
                c=self.model.objective,
                lb=lb,
                ub=ub,
                a_eq=self.model.a_eq,
                b_eq=self.model.b_eq,
                a_ub=self.model.a_ub,
                b_ub=self.model.b_ub,
            )
        )

    def full_z(self, fix: dict[int, int]) -> tuple[int, ...]:
        return tuple(
            1 if (m in self.fixed_on or fix.get(m) == 1) else 0
            for m in range(len(self.pairs))
        )

    def greedy_incumbent(self) -> tuple[int, ...] | None:
        """Connected selection within budget: fixed lines plus lowest-index fill."""
        n = self.problem.n_buses
        uf = netgraph._UnionFind(n)
        comps = n
        chosen = set(self.fixed_on)
        for m in sorted(self.fixed_on):
            i, j = self.pairs[m]
            if uf.union(i, j):
                comps -= 1
        for m in self.free:
            if comps == 1:
                break
            i, j = self.pairs[m]
            if uf.union(i, j):
                comps -= 1
                chosen.add(m)
        if comps != 1 or len(chosen) > self.problem.budget:
            return None
        return tuple(1 if m in chosen else 0 for m in range(len(self.pairs)))


def branch_and_bound(
    model: MilpModel,
    problem: DesignProblem | None = None,
    max_nodes: int | None = None,
) -> DesignSolution:
    """Certified optimum of the linearized model.

    Phase one proves the optimal value best-bound first; phase two re-derives
    the lexicographically smallest optimal selection by a bound-pruned
    depth-first pass so results match the brute-force oracle under ties.
    """
    problem = problem or model.problem
    t0 = time.perf_counter()
    search = _Search(model, problem)
    stats = search.stats

    incumbent_cost = float("inf")
    incumbent_z: tuple[int, ...] | None = None
    z0 = search.greedy_incumbent()
    if z0 is not None:
        try:
            incumbent_cost = evaluate_topology(problem, z0)
            incumbent_z = z0
            stats.incumbent_updates += 1
        except DisconnectedTopologyError:
            pass

    zcol_list = [model.z_cols[m] for m in search.free]
    counter = itertools.count()
    heap: list[tuple[float, int, dict[int, int]]] = [(-np.inf, next(counter), {})]
    best_open = -np.inf

    while heap:
        bound, _, fix = heapq.heappop(heap)
        best_open = bound
        if incumbent_z is not None and bound >= incumbent_cost - _tie_tol(incumbent_cost):
            continue
        if not search.completable(fix):
            continue
        stats.nodes_explored += 1
        if max_nodes is not None and stats.nodes_explored > max_nodes:
            stats.proved_optimal = False
            break
        res = search.node_lp(fix)
        if not res.optimal:
            continue
        if incumbent_z is not None and res.value >= incumbent_cost - _tie_tol(incumbent_cost):
            continue
        zvals = res.x[zcol_list] if zcol_list else np.array([])
        frac = np.abs(zvals - np.round(zvals))
        if not len(frac) or frac.max() <= INTEGRALITY_TOL:
            fix_leaf = dict(fix)
            for m, v in zip(search.free, np.round(zvals).astype(int)):
                fix_leaf.setdefault(m, int(v))
            z_full = search.full_z(fix_leaf)
            try:
                cost = evaluate_topology(problem, z_full)
            except DisconnectedTopologyError:
                continue
            if cost < incumbent_cost - _tie_tol(incumbent_cost):
                incumbent_cost, incumbent_z = cost, z_full
                stats.incumbent_updates += 1
            continue
        # most fractional free line, ties by lowest index
        undecided = [k for k, m in enumerate(search.free) if m not in fix]
        pick = max(undecided, key=lambda k: (min(zvals[k], 1.0 - zvals[k]), -search.free[k]))
        m_star = search.free[pick]
        for val in (0, 1):
            child = dict(fix)
            child[m_star] = val
            heapq.heappush(heap, (res.value, next(counter), child))
        if stats.nodes_explored % 1000 == 0:
            gap = _gap(incumbent_cost, best_open)
            log.info(
                "nodes=%d open=%d incumbent=%.9g bound=%.9g gap=%.3g",
                stats.nodes_explored,
                len(heap),
                incumbent_cost,
                best_open,
                gap,
            )

    if incumbent_z is None:
        raise InfeasibleDesignError("no connected topology within budget")

    if stats.proved_optimal:
        stats.final_gap = 0.0
    else:
        stats.final_gap = _gap(incumbent_cost, best_open)

    lex_z = _lex_smallest_optimal(search, incumbent_cost, incumbent_z)
    if lex_z is not None:
        incumbent_z = lex_z
        incumbent_cost = evaluate_topology(problem, incumbent_z)
    stats.wall_time = time.perf_counter() - t0
    return _make_solution(problem, incumbent_z, incumbent_cost, stats)


def _gap(incumbent: float, best_open: float) -> float:
    if not np.isfinite(incumbent):
        return float("inf")
    if not np.isfinite(best_open):
        return float("inf")
    return max(0.0, (incumbent - best_open) / max(1.0, abs(incumbent)))


def _lex_smallest_optimal(
    search: _Search, target: float, fallback: tuple[int, ...]
) -> tuple[int, ...] | None:
    """Depth-first in line-index order, zero branch first, pruned against the
    certified optimal value: the first surviving leaf is the lexicographically
    smallest optimal selection."""
    tol = _tie_tol(target)
    free = search.free
    trivial_objective = not search.model.objective.any()

    def dfs(fix: dict[int, int], depth: int) -> tuple[int, ...] | None:
        if depth == len(free):
            z_full = search.full_z(fix)
            try:
                cost = evaluate_topology(search.problem, z_full)
            except DisconnectedTopologyError:
                return None
            return z_full if cost <= target + tol else None
        m = free[depth]
        for val in (0, 1):
            child = dict(fix)
            child[m] = val
            if not search.completable(child):
                continue
            if not trivial_objective:
                res = search.node_lp(child)
                if not res.optimal or res.value > target + tol:
                    continue
            found = dfs(child, depth + 1)
            if found is not None:
                return found
        return None

    return dfs({}, 0) or fallback
