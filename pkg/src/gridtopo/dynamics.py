"""Linearized swing dynamics and the H2-based generalized coherence metric.

The squared H2 value of the grid (angle/frequency deviations weighted by a
coherence-graph Laplacian W and a frequency diagonal S) is computed by three
independent routes:

* closed form from the reduced Laplacian inverse (uniform damping only),
* observability-Gramian Lyapunov solve on the deflated state space,
* explicit impulse-response simulation (classical fixed-step RK4).

The uniform angle-shift mode is marginally stable but unobservable for any
coherence Laplacian (W 1 = 0); the Gramian route removes it by restricting
the dynamics to the invariant complement of that mode before solving the
Lyapunov equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .netgraph import LaplacianMatrix, build_laplacian, GraphError
from .network import PowerNetwork


class NonUniformDampingError(ValueError):
    """Closed-form metric requested without identical damping on all buses."""


class NumericalInstabilityError(RuntimeError):
    """Fixed-step integration diverged; retry with a smaller dt."""


@dataclass(frozen=True)
class MachineParams:
    """Per-bus inertia and damping, per-unit."""

    inertia: np.ndarray
    damping: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.inertia, dtype=float)
        d = np.asarray(self.damping, dtype=float)
        object.__setattr__(self, "inertia", m)
        object.__setattr__(self, "damping", d)
        if m.shape != d.shape or m.ndim != 1:
            raise ValueError("inertia/damping must be 1-D arrays of equal length")
        if np.any(d <= 0):
            raise ValueError("damping coefficients must be strictly positive")

    @classmethod
    def from_network(cls, net: PowerNetwork) -> "MachineParams":
        return cls(np.array(net.inertias), np.array(net.dampings))

    @property
    def uniform_damping(self) -> float:
        d = self.damping
        if d.max() - d.min() > 1e-12 * max(1.0, d.mean()):
            raise NonUniformDampingError(
                "damping is not uniform; the closed-form metric requires identical "
                "damping on all buses"
            )
        return float(d[0])


@dataclass(frozen=True)
class CoherenceSpec:
    """Performance weights: coherence-graph Laplacian W and frequency diagonal s."""

    w: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        s = np.asarray(self.s, dtype=float)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "s", s)
        n = w.shape[0]
        if w.shape != (n, n) or s.shape != (n,):
            raise ValueError("W must be square and s a matching diagonal vector")
        scale = max(1.0, np.abs(w).max())
        if np.abs(w - w.T).max() > 1e-9 * scale:
            raise ValueError("W must be symmetric")
        if np.abs(w.sum(axis=1)).max() > 1e-9 * scale:
            raise ValueError("W must have zero row sums (graph Laplacian)")
        if w.any() and np.linalg.eigvalsh(w).min() < -1e-9 * scale:
            raise ValueError("W must be positive semidefinite")
        if np.any(s < 0):
            raise ValueError("frequency weights s must be nonnegative")
        if not w.any() and not s.any():
            raise ValueError("at least one of W, s must be nonzero")

    @property
    def n_buses(self) -> int:
        return self.w.shape[0]

    @property
    def s_matrix(self) -> np.ndarray:
        return np.diag(self.s)

    def reduced_w(self, reference: int) -> np.ndarray:
        keep = [i for i in range(self.n_buses) if i != reference]
        return self.w[np.ix_(keep, keep)]


PRESETS = ("frequency", "losses", "coherence")


def preset_spec(kind: str, net: PowerNetwork) -> CoherenceSpec:
    """The named (W, S) pairs: frequency excursions, transient line losses,
    or network coherence (dispersion around the grid-average angle).

    The losses weighting uses the susceptance Laplacian of the energized
    lines, falling back to all candidate lines for from-scratch designs.
    """
    n = net.n_buses
    if kind == "frequency":
        return CoherenceSpec(w=np.zeros((n, n)), s=np.ones(n))
    if kind == "losses":
        lines = net.existing_lines or net.lines
        lap = build_laplacian(lines, n, reference=0)
        return CoherenceSpec(w=lap.full, s=np.zeros(n))
    if kind == "coherence":
        w = np.eye(n) - np.full((n, n), 1.0 / n)
        return CoherenceSpec(w=w, s=np.zeros(n))
    raise ValueError(f"unknown metric preset {kind!r}; expected one of {PRESETS}")


def spec_from_metric(metric: dict, net: PowerNetwork) -> CoherenceSpec:
    """Build a CoherenceSpec from a network file's metric section."""
    if not metric or "preset" in metric:
        return preset_spec(metric.get("preset", "coherence") if metric else "coherence", net)
    n = net.n_buses
    w = np.zeros((n, n))
    for i, j, wij in metric.get("w", []):
        i, j = int(i), int(j)
        w[i, i] += wij
        w[j, j] += wij
        w[i, j] -= wij
        w[j, i] -= wij
    s = np.array(metric.get("s", [0.0] * n), dtype=float)
    return CoherenceSpec(w=w, s=s)


# ---------------------------------------------------------------------------
# State space
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateSpace:
    """State-space form of the swing dynamics, states ordered (theta, omega)."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    params: MachineParams = field(repr=False)
    spec: CoherenceSpec = field(repr=False)

    @property
    def n_buses(self) -> int:
        return self.b.shape[1]


def _psd_sqrt(w: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    vals, vecs = np.linalg.eigh(w)
    scale = max(1.0, float(np.abs(vals).max()))
    if vals.min() < -tol * scale:
        raise ValueError("matrix is not positive semidefinite")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def assemble_state_space(
    lap: LaplacianMatrix, params: MachineParams, spec: CoherenceSpec
) -> StateSpace:
    """Assemble (A, B, C) with C chosen so that C^T C = blkdiag(W, S)."""
    n = lap.full.shape[0]
    m = params.inertia
    if m.shape[0] != n:
        raise ValueError("parameter length does not match Laplacian size")
    if np.any(m <= 0):
        raise ValueError("zero-inertia bus: Kron reduction unsupported")
    minv = 1.0 / m
    a = np.zeros((2 * n, 2 * n))
    a[:n, n:] = np.eye(n)
    a[n:, :n] = -minv[:, None] * lap.full
    a[n:, n:] = -np.diag(minv * params.damping)
    b = np.zeros((2 * n, n))
    b[n:, :] = np.diag(minv)
    c = np.zeros((2 * n, 2 * n))
    c[:n, :n] = _psd_sqrt(spec.w)
    c[n:, n:] = np.diag(np.sqrt(spec.s))
    return StateSpace(a=a, b=b, c=c, params=params, spec=spec)


# ---------------------------------------------------------------------------
# Route 1: closed form
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class H2ClosedForm:
    cost: float
    topology_term: float


def topology_term(spec: CoherenceSpec, lap: LaplacianMatrix) -> float:
    """trace of reduced-W times inverse reduced Laplacian (the design objective)."""
    from scipy.linalg import cho_factor, cho_solve

    wt = spec.reduced_w(lap.reference)
    if lap.reduced.size == 0:
        return 0.0
    try:
        cf, lower = cho_factor(lap.reduced)
    except np.linalg.LinAlgError as exc:
        raise GraphError("singular reduced Laplacian (topology disconnected)") from exc
    diag = np.abs(np.diag(cf))
    if diag.min() < 1e-9 * diag.max():
        raise GraphError("singular reduced Laplacian (topology disconnected)")
    x = cho_solve((cf, lower), wt.T)
    return float(np.trace(x))


def h2_squared_closed_form(
    spec: CoherenceSpec, lap: LaplacianMatrix, params: MachineParams
) -> H2ClosedForm:
    """Squared H2 value under uniform damping: (topology term + tr(S M^-1)) / 2d."""
    d = params.uniform_damping
    topo = topology_term(spec, lap)
    freq = float(np.sum(spec.s / params.inertia))
    return H2ClosedForm(cost=(topo + freq) / (2.0 * d), topology_term=topo)


# ---------------------------------------------------------------------------
# Route 2: observability Gramian
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gramian:
    """Observability Gramian with the angle/frequency block partition."""

    q: np.ndarray
    deflated_residual: float
    rhs_norm: float

    @property
    def q1(self) -> np.ndarray:
        n = self.q.shape[0] // 2
        return self.q[:n, :n]

    @property
    def q0(self) -> np.ndarray:
        n = self.q.shape[0] // 2
        return self.q[:n, n:]

    @property
    def q2(self) -> np.ndarray:
        n = self.q.shape[0] // 2
        return self.q[n:, n:]


def observability_gramian(ss: StateSpace) -> Gramian:
    """Solve A^T Q + Q A = -C^T C on the complement of the angle-shift mode.

    The mode [1; 0] spans ker(A); its A-invariant complement is the orthogonal
    complement of the left null vector u = [D 1; M 1]. The restricted Lyapunov
    equation is solved densely in Kronecker form and the solution lifted back,
    which reproduces the integral Gramian (the solution annihilating the
    marginal mode).
    """
    n = ss.n_buses
    w1 = ss.spec.w @ np.ones(n)
    if np.abs(w1).max() > 1e-9 * max(1.0, np.abs(ss.spec.w).max()):
        raise ValueError(
            "marginal angle-shift mode is observable (W 1 != 0); H2 value is infinite"
        )
    u = np.concatenate([ss.params.damping, ss.params.inertia])
    v = np.concatenate([np.ones(n), np.zeros(n)])
    qfull, _ = np.linalg.qr(np.column_stack([u / np.linalg.norm(u), np.eye(2 * n)]))
    basis = qfull[:, 1 : 2 * n]  # orthonormal basis of the complement of u
    proj = np.eye(2 * n) - np.outer(v, u) / (u @ v)

    a_r = basis.T @ ss.a @ basis
    c_r = ss.c @ basis
    rhs = -(c_r.T @ c_r)
    k = a_r.shape[0]
    lyap = np.kron(np.eye(k), a_r.T) + np.kron(a_r.T, np.eye(k))
    try:
        q_vec = np.linalg.solve(lyap, rhs.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise GraphError(
            "Lyapunov operator singular beyond the deflated mode (topology disconnected?)"
        ) from exc
    q_r = q_vec.reshape((k, k), order="F")
    q_r = 0.5 * (q_r + q_r.T)
    residual = np.linalg.norm(a_r.T @ q_r + q_r @ a_r + c_r.T @ c_r)
    q = proj.T @ basis @ q_r @ basis.T @ proj
    return Gramian(
        q=q,
        deflated_residual=float(residual),
        rhs_norm=float(np.linalg.norm(ss.c.T @ ss.c)),
    )


def h2_squared_gramian(ss: StateSpace) -> float:
    """Squared H2 value as trace(B^T Q B); valid for non-uniform damping too."""
    gram = observability_gramian(ss)
    return float(np.trace(ss.b.T @ gram.q @ ss.b))


# ---------------------------------------------------------------------------
# Route 3: impulse simulation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Trajectory:
    """Fixed-step impulse response with running output-energy accumulation."""

    t: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    coherence: np.ndarray  # dispersion of angles around the grid average
    loss: np.ndarray  # generalized loss ||y||^2
    energy: np.ndarray  # cumulative integral of the loss

    @property
    def total_energy(self) -> float:
        return float(self.energy[-1])

    @property
    def tail_energy_fraction(self) -> float:
        """Share of the output energy accumulated over the last 10% of the horizon."""
        total = self.energy[-1]
        if total <= 0:
            return 0.0
        cut = int(0.9 * (len(self.t) - 1))
        return float((self.energy[-1] - self.energy[cut]) / total)

    def to_csv(self) -> str:
        n = self.theta.shape[1]
        header = (
            "t,"
            + ",".join(f"theta_{i}" for i in range(n))
            + ","
            + ",".join(f"omega_{i}" for i in range(n))
            + ",fc,f"
        )
        rows = [header]
        for k in range(len(self.t)):
            vals = (
                [self.t[k]]
                + list(self.theta[k])
                + list(self.omega[k])
                + [self.coherence[k], self.loss[k]]
            )
            rows.append(",".join(f"{v:.9g}" for v in vals))
        return "\n".join(rows) + "\n"


def _rk4_step_matrix(a: np.ndarray, dt: float) -> np.ndarray:
    """One-step operator of classical RK4 applied to xdot = A x."""
    n = a.shape[0]
    ah = a * dt
    phi = np.eye(n)
    term = np.eye(n)
    for k in (1, 2, 3, 4):
        term = term @ ah / k
        phi = phi + term
    return phi


def simulate_impulse(
    ss: StateSpace, bus: int, horizon: float = 400.0, dt: float = 0.01
) -> Trajectory:
    """Response to a unit impulse injected at ``bus`` (state jump to B e_bus)."""
    if dt <= 0 or horizon <= dt:
        raise ValueError("need dt > 0 and horizon > dt")
    n = ss.n_buses
    if not 0 <= bus < n:
        raise ValueError(f"impulse bus {bus} out of range")
    steps = int(round(horizon / dt))
    phi = _rk4_step_matrix(ss.a, dt)
    states = np.empty((steps + 1, 2 * n))
    x = ss.b[:, bus].copy()
    states[0] = x
    for k in range(1, steps + 1):
        x = phi @ x
        states[k] = x
    if not np.isfinite(states).all():
        raise NumericalInstabilityError(
            "impulse integration diverged; reduce dt (system too stiff for this step)"
        )
    theta = states[:, :n]
    omega = states[:, n:]
    y = states @ ss.c.T
    loss = np.einsum("ij,ij->i", y, y)
    quarter = max(1, (steps + 1) // 4)
    if loss[-quarter:].max() > max(loss[:quarter].max(), 1e-12):
        raise NumericalInstabilityError(
            "impulse integration diverged (output energy growing); reduce dt"
        )
    dev = theta - theta.mean(axis=1, keepdims=True)
    coherence = np.einsum("ij,ij->i", dev, dev)
    t = np.arange(steps + 1) * dt
    energy = np.concatenate([[0.0], np.cumsum(0.5 * (loss[1:] + loss[:-1]) * dt)])
    return Trajectory(t=t, theta=theta, omega=omega, coherence=coherence, loss=loss, energy=energy)


def h2_squared_impulse_sum(
    ss: StateSpace, horizon: float = 400.0, dt: float = 0.01
) -> float:
    """Total impulse-response output energy summed over every input bus.

    Propagates all impulse columns together; the per-bus sum is accumulated in
    fixed bus order, so the result does not depend on scheduling.
    """
    n = ss.n_buses
    steps = int(round(horizon / dt))
    phi = _rk4_step_matrix(ss.a, dt)
    x = ss.b.copy()  # one column per impulse bus
    y = ss.c @ x
    prev = np.einsum("ij,ij->j", y, y)
    energies = np.zeros(n)
    for _ in range(steps):
        x = phi @ x
        y = ss.c @ x
        cur = np.einsum("ij,ij->j", y, y)
        energies += 0.5 * (prev + cur) * dt
        prev = cur
    if not np.isfinite(energies).all():
        raise NumericalInstabilityError("impulse integration diverged; reduce dt")
    return float(np.sum(energies))
