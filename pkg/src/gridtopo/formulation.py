"""Exact MILP reformulation of the topology-design problem.

The design problem (select up to K candidate lines so the chosen graph is
connected and minimizes the reduced-weighted trace of the inverse reduced
Laplacian) is linearized by introducing one product variable per free line
and touched row, constrained by its four-inequality envelope. The envelope
is exact at binary line selections, so the MILP optimum coincides with the
combinatorial optimum.

Variable bounds come from the structure of the instance: augmenting a
connected network bounds the inverse entries by the existing network's
inverse diagonal; radial design bounds them through spanning-tree and
shortest-path constants of the inverse-weight graph; critical edges and
two-edge cutsets fix binaries and add valid cover rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import netgraph
from .dynamics import CoherenceSpec, MachineParams
from .netgraph import CutsetReport, InverseWeightGraph
from .network import Line

AUGMENT = "augment"
RADIAL = "radial"


class AssumptionError(ValueError):
    """A structural precondition of the chosen mode/bounds is violated."""


class InfeasibleBoundsError(ValueError):
    """Variable bounds cross (lower above upper)."""


@dataclass(frozen=True)
class DesignProblem:
    """Topology-design instance over candidate line set with a total budget.

    ``lines`` is the full candidate set; lines with status ``existing`` are
    forced on (augment mode). ``budget`` caps the total number of selected
    lines, fixed-on ones included.
    """

    n_buses: int
    reference: int
    lines: tuple[Line, ...]
    budget: int
    mode: str
    spec: CoherenceSpec
    params: MachineParams

    def __post_init__(self):
        n = self.n_buses
        if not 0 <= self.reference < n:
            raise ValueError(f"reference bus {self.reference} out of range")
        if self.mode not in (AUGMENT, RADIAL):
            raise ValueError(f"mode must be {AUGMENT!r} or {RADIAL!r}")
        if self.budget < n - 1:
            raise ValueError(f"budget {self.budget} below spanning size {n - 1}")
        if self.spec.n_buses != n:
            raise ValueError("coherence spec size does not match bus count")
        if self.mode == RADIAL:
            if self.existing_indices:
                raise ValueError("radial mode designs from scratch; no existing lines allowed")
            if self.budget != n - 1:
                raise ValueError("radial mode requires budget equal to the spanning size")

    @property
    def existing_indices(self) -> tuple[int, ...]:
        return tuple(m for m, l in enumerate(self.lines) if l.is_existing)

    @property
    def graph(self) -> InverseWeightGraph:
        return InverseWeightGraph.from_lines(self.lines, self.n_buses)

    @property
    def reduced_index(self) -> list[int]:
        return [i for i in range(self.n_buses) if i != self.reference]

    @property
    def reduced_w(self) -> np.ndarray:
        return self.spec.reduced_w(self.reference)


@dataclass(frozen=True)
class VariableBounds:
    """Entry-wise bounds on the inverse reduced Laplacian, reduced indexing."""

    lower: np.ndarray
    upper: np.ndarray
    kind: str
    # radial-mode constants, kept for reporting/tests
    tree_weight: float | None = None
    path_weights: dict[int, float] | None = None
    x_reference: float | None = None
    x_min: float | None = None

    def check(self) -> None:
        if np.any(self.lower > self.upper + 1e-12):
            raise InfeasibleBoundsError("variable bounds cross (lower > upper)")


def bounds_augment(problem: DesignProblem) -> VariableBounds:
    """Bounds from the existing network's inverse reduced Laplacian.

    Off-diagonal entries are bounded by the mean of the corresponding inverse
    diagonal entries, diagonal entries by the diagonal itself; all lower
    bounds are zero (inverse of an M-matrix is entrywise positive, relaxed to
    a closed bound).
    """
    existing = [problem.lines[m] for m in problem.existing_indices]
    if not netgraph.is_connected(existing, problem.n_buses):
        raise AssumptionError(
            "existing line set is disconnected; augment-mode bounds need a connected "
            "base network (consider radial mode)"
        )
    lap = netgraph.build_laplacian(existing, problem.n_buses, problem.reference)
    inv = np.linalg.inv(lap.reduced)
    diag = np.diag(inv)
    upper = 0.5 * (diag[:, None] + diag[None, :])
    np.fill_diagonal(upper, diag)
    return VariableBounds(lower=np.zeros_like(upper), upper=upper, kind=AUGMENT)


def bounds_radial(problem: DesignProblem) -> VariableBounds:
    """Bounds from spanning-tree and shortest-path constants of the
    inverse-weight candidate graph (reference bus must have degree one)."""
    g = problem.graph
    degree = [0] * problem.n_buses
    for i, j in g.edges:
        degree[i] += 1
        degree[j] += 1
    if degree[problem.reference] != 1:
        candidates = [v for v in range(problem.n_buses) if degree[v] == 1]
        if candidates:
            raise AssumptionError(
                f"reference bus {problem.reference} has degree {degree[problem.reference]}; "
                f"radial bounds need a degree-one reference (candidates: {candidates})"
            )
        raise AssumptionError(
            "no degree-1 node available as reference: the radial-design assumption "
            "(reference incident to exactly one edge) cannot be satisfied"
        )
    f = netgraph.max_spanning_tree_weight(g)
    h = netgraph.shortest_path_weights(g, problem.reference)
    x0 = next(
        g.weights[m] for m, (i, j) in enumerate(g.edges) if problem.reference in (i, j)
    )
    xmin = min(g.weights)
    order = problem.reduced_index
    nred = len(order)
    lower = np.full((nred, nred), x0)
    upper = np.full((nred, nred), f - xmin)
    for k, bus in enumerate(order):
        lower[k, k] = h[bus]
        upper[k, k] = f
    return VariableBounds(
        lower=lower,
        upper=upper,
        kind=RADIAL,
        tree_weight=f,
        path_weights=h,
        x_reference=x0,
        x_min=xmin,
    )


def loose_bounds(problem: DesignProblem, hi: float = 10.0) -> VariableBounds:
    """Wide fallback box when no structural bound applies."""
    nred = problem.n_buses - 1
    return VariableBounds(
        lower=np.zeros((nred, nred)), upper=np.full((nred, nred), hi), kind="loose"
    )


@dataclass(frozen=True)
class TightenResult:
    bounds: VariableBounds
    fixed_edges: tuple[int, ...]  # candidate-line indices forced on
    pair_constraints: tuple[tuple[int, int], ...]  # index pairs with z_a + z_b >= 1


def tighten_bounds(
    problem: DesignProblem, bounds: VariableBounds, report: CutsetReport
) -> TightenResult:
    """Apply cutset information: fix critical edges on, emit two-edge cover
    rows, and (radial mode) raise lower bounds across each critical split."""
    pair_index = {l.pair: m for m, l in enumerate(problem.lines)}
    existing = set(problem.existing_indices)
    fixed = tuple(
        pair_index[e] for e in report.critical_edges if pair_index[e] not in existing
    )
    pairs = []
    for cut in report.pair_cutsets:
        a, b = sorted(cut)
        ma, mb = pair_index[a], pair_index[b]
        if ma in existing or mb in existing:
            continue
        pairs.append((ma, mb) if ma < mb else (mb, ma))

    lower = bounds.lower.copy()
    if bounds.kind == RADIAL and bounds.path_weights is not None:
        pos = {bus: k for k, bus in enumerate(problem.reduced_index)}
        for (i, j), (side_i, side_j) in report.splits.items():
            if problem.reference in side_i:
                far_side, far_node = side_j, j
            else:
                far_side, far_node = side_i, i
            hj = bounds.path_weights[far_node]
            col = pos[far_node]
            for k in far_side:
                row = pos[k]
                lower[row, col] = max(lower[row, col], hj)
                lower[col, row] = lower[row, col]
    new_bounds = VariableBounds(
        lower=lower,
        upper=bounds.upper,
        kind=bounds.kind,
        tree_weight=bounds.tree_weight,
        path_weights=bounds.path_weights,
        x_reference=bounds.x_reference,
        x_min=bounds.x_min,
    )
    return TightenResult(bounds=new_bounds, fixed_edges=fixed, pair_constraints=tuple(sorted(pairs)))


# ---------------------------------------------------------------------------
# MILP assembly
# ---------------------------------------------------------------------------


@dataclass
class MilpModel:
    """Immutable linearized model: shared read-only across solver workers.

    Columns are ordered z block, X block, y block. Equality rows encode the
    inverse identity after product substitution; inequality rows hold the
    envelope quadruples, the budget row, and any cutset cover rows.
    """

    problem: DesignProblem
    bounds: VariableBounds
    var_names: list[str]
    lb: np.ndarray
    ub: np.ndarray
    objective: np.ndarray
    a_eq: sp.csr_matrix
    b_eq: np.ndarray
    a_ub: sp.csr_matrix
    b_ub: np.ndarray
    z_cols: dict[int, int]  # free line index -> column
    x_cols: dict[tuple[int, int], int]  # reduced (i<=j) pair -> column
    y_cols: dict[tuple[int, int, int], int]  # (line, reduced i, reduced j) -> column
    fixed_edges: tuple[int, ...]  # all line indices forced on (existing + cutset)
    pair_constraints: tuple[tuple[int, int], ...]
    row_names: list[str] = field(default_factory=list)

    @property
    def n_free(self) -> int:
        return len(self.z_cols)

    @property
    def binary_cols(self) -> list[int]:
        return sorted(self.z_cols.values())

    def free_budget(self) -> int:
        return self.problem.budget - len(self.fixed_edges)


def build_milp(
    problem: DesignProblem,
    bounds: VariableBounds,
    tighten: TightenResult | None = None,
) -> MilpModel:
    """Assemble the linearized design model for the given variable bounds.

    Fixed lines (existing plus any cutset fixings) are folded into constant
    coefficients; product variables are created only for rows an edge
    actually touches, so each free line contributes at most 2 N of them.
    """
    bounds.check()
    n = problem.n_buses
    ref = problem.reference
    order = problem.reduced_index
    pos = {bus: k for k, bus in enumerate(order)}
    nred = len(order)

    fixed = set(problem.existing_indices)
    pair_rows: tuple[tuple[int, int], ...] = ()
    if tighten is not None:
        fixed.update(tighten.fixed_edges)
        pair_rows = tighten.pair_constraints
    free = [m for m in range(len(problem.lines)) if m not in fixed]

    # --- columns ---------------------------------------------------------
    var_names: list[str] = []
    lb: list[float] = []
    ub: list[float] = []
    z_cols: dict[int, int] = {}
    for m in free:
        z_cols[m] = len(var_names)
        var_names.append(f"z_{m}")
        lb.append(0.0)
        ub.append(1.0)
    x_cols: dict[tuple[int, int], int] = {}
    for a in range(nred):
        for b in range(a, nred):
            x_cols[(a, b)] = len(var_names)
            var_names.append(f"X_{order[a]}_{order[b]}")
            lb.append(float(bounds.lower[a, b]))
            ub.append(float(bounds.upper[a, b]))
    y_cols: dict[tuple[int, int, int], int] = {}
    for m in free:
        for bus in problem.lines[m].pair:
            if bus == ref:
                continue
            i = pos[bus]
            for j in range(nred):
                pair = (i, j) if i <= j else (j, i)
                y_cols[(m, i, j)] = len(var_names)
                var_names.append(f"y_{m}_{bus}_{order[j]}")
                lb.append(min(0.0, float(bounds.lower[pair])))
                ub.append(max(0.0, float(bounds.upper[pair])))

    def xvar(a: int, b: int) -> int:
        return x_cols[(a, b) if a <= b else (b, a)]

    # --- objective: sum of reduced-W-weighted X entries -------------------
    wt = problem.reduced_w
    objective = np.zeros(len(var_names))
    for a in range(nred):
        objective[x_cols[(a, a)]] += wt[a, a]
        for b in range(a + 1, nred):
            objective[x_cols[(a, b)]] += 2.0 * wt[a, b]

    # --- equality rows: fixed Laplacian times X plus product terms --------
    fixed_lines = [problem.lines[m] for m in sorted(fixed)]
    lfix = netgraph.build_laplacian(fixed_lines, n, ref).reduced
    incidence = netgraph.reduced_incidence(problem.lines, n, ref)
    row_names: list[str] = []
    eq_rows: list[int] = []
    eq_cols: list[int] = []
    eq_vals: list[float] = []
    b_eq: list[float] = []
    for i in range(nred):
        touching = [
            m for m in free if incidence[m, i] != 0.0
        ]
        for j in range(nred):
            r = len(b_eq)
            row_names.append(f"eq_{order[i]}_{order[j]}")
            for k in range(nred):
                v = lfix[i, k]
                if v != 0.0:
                    eq_rows.append(r)
                    eq_cols.append(xvar(k, j))
                    eq_vals.append(float(v))
            for m in touching:
                bm = problem.lines[m].susceptance
                ai = incidence[m, i]
                for bus in problem.lines[m].pair:
                    if bus == ref:
                        continue
                    k = pos[bus]
                    ak = incidence[m, k]
                    eq_rows.append(r)
                    eq_cols.append(y_cols[(m, k, j)])
                    eq_vals.append(float(bm * ai * ak))
            b_eq.append(1.0 if i == j else 0.0)

    # --- inequality rows ---------------------------------------------------
    ub_rows: list[int] = []
    ub_cols: list[int] = []
    ub_vals: list[float] = []
    b_ub: list[float] = []
    ub_names: list[str] = []

    def add_ub(name: str, cols: list[int], vals: list[float], rhs: float) -> None:
        r = len(b_ub)
        ub_names.append(name)
        ub_rows.extend([r] * len(cols))
        ub_cols.extend(cols)
        ub_vals.extend(vals)
        b_ub.append(rhs)

    for (m, i, j), ycol in y_cols.items():
        pair = (i, j) if i <= j else (j, i)
        xl = float(bounds.lower[pair])
        xu = float(bounds.upper[pair])
        xcol = xvar(i, j)
        zcol = z_cols[m]
        bus_i, bus_j = order[i], order[j]
        tag = f"{m}_{bus_i}_{bus_j}"
        add_ub(f"mc_a_{tag}", [ycol, zcol], [-1.0, xl], 0.0)
        add_ub(f"mc_b_{tag}", [ycol, xcol, zcol], [-1.0, 1.0, xu], xu)
        add_ub(f"mc_c_{tag}", [ycol, zcol], [1.0, -xu], 0.0)
        add_ub(f"mc_d_{tag}", [ycol, xcol, zcol], [1.0, -1.0, xl], xl)

    add_ub(
        "budget",
        [z_cols[m] for m in free],
        [1.0] * len(free),
        float(problem.budget - len(fixed)),
    )
    for a, b in pair_rows:
        add_ub(f"pair_{a}_{b}", [z_cols[a], z_cols[b]], [-1.0, -1.0], -1.0)

    ncols = len(var_names)
    return MilpModel(
        problem=problem,
        bounds=bounds,
        var_names=var_names,
        lb=np.array(lb),
        ub=np.array(ub),
        objective=objective,
        a_eq=sp.csr_matrix(
            (eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), ncols)
        ),
        b_eq=np.array(b_eq),
        a_ub=sp.csr_matrix(
            (ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), ncols)
        ),
        b_ub=np.array(b_ub),
        z_cols=z_cols,
        x_cols=x_cols,
        y_cols=y_cols,
        fixed_edges=tuple(sorted(fixed)),
        pair_constraints=pair_rows,
        row_names=row_names + ub_names,
    )


def export_lp_format(model: MilpModel) -> str:
    """Serialize the model in CPLEX LP text format for external cross-checks."""

    def term(coef: float, name: str, first: bool) -> str:
        sign = "-" if coef < 0 else ("" if first else "+")
        mag = abs(coef)
        return f"{sign} {mag:.12g} {name} ".replace("  ", " ")

    out = ["\\ gridtopo model export", "Minimize"]
    parts = ["obj:"]
    first = True
    for col in np.flatnonzero(model.objective):
        parts.append(term(float(model.objective[col]), model.var_names[col], first))
        first = False
    if first:
        parts.append("0 " + model.var_names[0])
    out.append(" " + " ".join(p.strip() for p in parts))
    out.append("Subject To")

    neq = model.a_eq.shape[0]
    for kind, mat, rhs, names, op in (
        ("eq", model.a_eq, model.b_eq, model.row_names[:neq], "="),
        ("ub", model.a_ub, model.b_ub, model.row_names[neq:], "<="),
    ):
        csr = mat.tocsr()
        for r in range(mat.shape[0]):
            cols = csr.indices[csr.indptr[r] : csr.indptr[r + 1]]
            vals = csr.data[csr.indptr[r] : csr.indptr[r + 1]]
            parts = [f"{names[r]}:"]
            first = True
            for c, v in zip(cols, vals):
                parts.append(term(float(v), model.var_names[c], first))
                first = False
            parts.append(f"{op} {rhs[r]:.12g}")
            out.append(" " + " ".join(p.strip() for p in parts))

    out.append("Bounds")
    for col, name in enumerate(model.var_names):
        out.append(f" {model.lb[col]:.12g} <= {name} <= {model.ub[col]:.12g}")
    out.append("Binaries")
    zs = " ".join(model.var_names[c] for c in model.binary_cols)
    out.append(" " + zs if zs else "")
    out.append("End")
    return "\n".join(out) + "\n"


def candidate_x_from_selection(
    problem: DesignProblem, z: Sequence[int]
) -> np.ndarray:
    """Inverse reduced Laplacian of a binary selection (the X a feasible
    model point must carry)."""
    lines = [l for m, l in enumerate(problem.lines) if z[m]]
    lap = netgraph.build_laplacian(lines, problem.n_buses, problem.reference)
    return np.linalg.inv(lap.reduced)
