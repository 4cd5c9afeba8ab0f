"""Finite-dimensional reductions of the HP flow and of the controlled evolution.

Everything here works on the system density ``rho_t`` obtained by tracing
out the noise against a coherent (or vacuum) field state, so that
``m_t(Y) = Tr(rho_t Y)``. The reductions are integrated with classical RK4
on uniform grids. :func:`collision_oracle` is an independent
repeated-interaction discretization used to validate them.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .operators import (CERT_TOL, DimensionError, adjoint, as_operator, certify_hermitian,
                        commutator, hermitian_part, sandwich_superop, vec)

#: default resolution of :meth:`TimeGrid.default`
STEPS_PER_UNIT = 2000


class GridTooCoarseWarning(UserWarning):
    pass


class TruncationWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# model, state, grid
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class HPModel:
    """Coefficients of ``dU = (F U + u) dt + Psi U dA + Phi U dA^dagger``.

    With only ``H`` and ``L`` given, ``F = -(iH + L*L/2)``, ``G = I``,
    ``Psi = -L*`` and ``Phi = L``, which is the unitary HP equation.
    """
    H: np.ndarray
    L: np.ndarray
    T: float = 1.0
    F: np.ndarray | None = None
    G: np.ndarray | None = None
    Psi: np.ndarray | None = None
    Phi: np.ndarray | None = None

    def __post_init__(self):
        H = as_operator(self.H)
        d = H.shape[0]
        L = as_operator(self.L, d)
        if not certify_hermitian(H).hermitian:
            raise ValueError("H must be Hermitian")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon must be positive, got {self.T}")
        Ls = adjoint(L)
        defaults = {"F": -(1j * H + 0.5 * Ls @ L), "G": np.eye(d, dtype=complex),
                    "Psi": -Ls, "Phi": L}
        set_ = lambda k, v: object.__setattr__(self, k, v)
        set_("H", hermitian_part(H)[0])
        set_("L", L)
        set_("T", float(self.T))
        for k, v in defaults.items():
            cur = getattr(self, k)
            if cur is None:
                set_(k, v)
            elif k == "G":
                G = np.atleast_2d(np.asarray(cur, dtype=complex))
                if G.shape[0] != d:
                    raise DimensionError(f"G must have {d} rows, got shape {G.shape}")
                set_(k, G)
            else:
                set_(k, as_operator(cur, d))

    @classmethod
    def controlled(cls, F, Phi, Psi=None, G=None, T=1.0):
        """Model given directly by its drift and noise coefficients."""
        F = as_operator(F)
        d = F.shape[0]
        Phi = as_operator(Phi, d)
        return cls(np.zeros((d, d)), Phi, T=T, F=F, G=G,
                   Psi=-adjoint(Phi) if Psi is None else Psi, Phi=Phi)

    @property
    def dim(self):
        return self.H.shape[0]

    def is_unitary_form(self, tol=1e-12):
        """Coefficients coincide with the unitary HP defaults."""
        Ls = adjoint(self.L)
        ref = (-(1j * self.H + 0.5 * Ls @ self.L), -Ls, self.L)
        return all(np.linalg.norm(a - b) <= tol * max(1.0, np.linalg.norm(b))
                   for a, b in zip((self.F, self.Psi, self.Phi), ref))

    def with_horizon(self, T):
        return HPModel(self.H, self.L, T, self.F, self.G, self.Psi, self.Phi)


@dataclass(frozen=True)
class TimeGrid:
    T: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError(f"steps must be a positive integer, got {self.steps}")
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon must be positive, got {self.T}")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "T", float(self.T))

    @classmethod
    def default(cls, T, per_unit=STEPS_PER_UNIT):
        return cls(T, max(1, math.ceil(per_unit * T - 1e-9)))

    @property
    def dt(self):
        return self.T / self.steps

    @property
    def times(self):
        return np.linspace(0.0, self.T, self.steps + 1)

    @property
    def half_times(self):
        """Nodes and midpoints, ``2 * steps + 1`` points."""
        return np.linspace(0.0, self.T, 2 * self.steps + 1)

    def refine(self, factor=2):
        return TimeGrid(self.T, self.steps * factor)


@dataclass(frozen=True)
class ExpVectorState:
    """``amplitude * xi0 (x) psi(f)`` with ``f`` piecewise constant.

    ``breakpoints[k]`` is the left end of the k-th piece, on which ``f``
    equals ``values[k]``; the first breakpoint is 0 and the last piece runs
    to the horizon. No breakpoints means the vacuum.

    By default the exponential vector ``psi(f)`` is used unnormalized, so
    every expectation carries the factor ``||psi(f)||^2 = exp(int_0^T |f|^2)``
    (reported as ``weight`` in trajectory metadata). With
    ``normalized=True`` the field part is the coherent state
    ``psi(f) / ||psi(f)||`` and ``m_t(I) = |amplitude|^2``.
    """
    xi0: np.ndarray
    breakpoints: tuple = ()
    values: tuple = ()
    amplitude: complex = 1.0
    normalized: bool = False

    def __post_init__(self):
        xi0 = np.asarray(self.xi0, dtype=complex).reshape(-1)
        if abs(np.linalg.norm(xi0) - 1.0) > 1e-12:
            raise ValueError(f"xi0 must be a unit vector, norm {np.linalg.norm(xi0)!r}")
        bp = tuple(float(b) for b in self.breakpoints)
        vals = tuple(complex(v) for v in self.values)
        if len(bp) != len(vals):
            raise ValueError("breakpoints and values differ in length")
        if bp:
            if bp[0] != 0.0:
                raise ValueError("first breakpoint must be 0")
            if any(b2 <= b1 for b1, b2 in zip(bp, bp[1:])):
                raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "xi0", xi0)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "amplitude", complex(self.amplitude))

    @classmethod
    def vacuum(cls, xi0, amplitude=1.0):
        return cls(xi0, amplitude=amplitude)

    @classmethod
    def coherent(cls, xi0, f, normalized=False):
        """Constant test function ``f`` on the whole horizon."""
        return cls(xi0, (0.0,), (f,), normalized=normalized)

    @property
    def dim(self):
        return self.xi0.size

    @property
    def is_vacuum(self):
        return all(v == 0 for v in self.values)

    def f(self, t):
        """Test function at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        if not self.breakpoints:
            return np.zeros(t.shape, dtype=complex)
        idx = np.searchsorted(np.asarray(self.breakpoints), t, side="right") - 1
        vals = np.asarray(self.values)
        return np.where(idx >= 0, vals[np.clip(idx, 0, None)], 0.0)

    def field_norm_sq(self, T):
        """``int_0^T |f|^2``."""
        if not self.breakpoints:
            return 0.0
        ends = list(self.breakpoints[1:]) + [max(T, self.breakpoints[-1])]
        total = 0.0
        for b, e, v in zip(self.breakpoints, ends, self.values):
            lo, hi = min(b, T), min(e, T)
            total += (hi - lo) * abs(v) ** 2
        return total

    def weight(self, T):
        """Factor multiplying the normalized system expectation."""
        w = abs(self.amplitude) ** 2
        if not self.normalized:
            w *= math.exp(self.field_norm_sq(T))
        return w

    @property
    def rho0(self):
        return np.outer(self.xi0, self.xi0.conj())


@dataclass
class Trajectory:
    """Expectation values ``values[k, j] = m_{t_k}(Y_j)``."""
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def rows(self):
        """CSV rows ``(t, observable_index, value_re, value_im)``."""
        for k, t in enumerate(self.times):
            for j, v in enumerate(self.values[k]):
                yield (float(t), j, float(v.real), float(v.imag))


TRAJECTORY_HEADER = ("t", "observable_index", "value_re", "value_im")


# --------------------------------------------------------------------------
# generators
# --------------------------------------------------------------------------

def heisenberg_drift(model, Y):
    """``theta0(Y) = i[H, Y] - (L*L Y + Y L*L - 2 L* Y L) / 2``."""
    Y = as_operator(Y, model.dim)
    H, L = model.H, model.L
    Ls = adjoint(L)
    LsL = Ls @ L
    return 1j * commutator(H, Y) - 0.5 * (LsL @ Y + Y @ LsL - 2.0 * Ls @ Y @ L)


CONVENTIONS = ("derived", "swapped")


def flow_superops(model, convention="derived", jump=True):
    """Column-stacked superoperators ``(L0, Lf, Lfbar)`` of the state equation

    ``rho' = L0 rho + f Lf rho + conj(f) Lfbar rho``

    dual to ``m' = m(theta0(Y)) + f m([L*, Y]) + conj(f) m([Y, L])``.
    ``convention="swapped"`` exchanges ``f`` and ``conj(f)``; it exists so
    that the oracle comparison can tell the two apart. ``jump=False`` drops
    the ``L rho L*`` term (negative control: breaks trace preservation).
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    d = model.dim
    I = np.eye(d)
    H, L = model.H, model.L
    Ls = adjoint(L)
    LsL = Ls @ L
    S = sandwich_superop
    L0 = (-1j * (S(H, I) - S(I, H)) - 0.5 * (S(LsL, I) + S(I, LsL)))
    if jump:
        L0 = L0 + S(L, Ls)
    Lf = S(I, Ls) - S(Ls, I)          # [rho, L*]
    Lfb = S(L, I) - S(I, L)           # [L, rho]
    if convention == "swapped":
        Lf, Lfb = Lfb, Lf
    return L0, Lf, Lfb


def controlled_superops(model, K=None):
    """``(L0, Lf, Lfbar)`` for ``rho' = (F+K) rho + rho (F+K)* + Phi rho Phi*``
    plus the coherent-field terms ``f (Psi rho + rho Phi*) + conj(f) (Phi rho + rho Psi*)``.
    """
    d = model.dim
    I = np.eye(d)
    A = model.F if K is None else model.F + as_operator(K, d)
    Phi, Psi = model.Phi, model.Psi
    S = sandwich_superop
    L0 = S(A, I) + S(I, adjoint(A)) + S(Phi, adjoint(Phi))
    Lf = S(Psi, I) + S(I, adjoint(Phi))
    Lfb = S(Phi, I) + S(I, adjoint(Psi))
    return L0, Lf, Lfb


def _rk4_poly(M, h):
    """``I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24``: one RK4 step of ``y' = M y``."""
    n = M.shape[0]
    A = h * M
    P = np.eye(n, dtype=complex)
    term = np.eye(n, dtype=complex)
    for k in range(1, 5):
        term = term @ A / k
        P = P + term
    return P


def _observable_rows(observables, d):
    # Tr(rho Y) = vec(Y.T) . vec(rho)
    return np.array([vec(as_operator(Y, d).T) for Y in observables])


def _integrate_linear(superops, f_of_t, rho0, grid, obs_rows):
    """RK4 on ``rho' = (L0 + f Lf + conj(f) Lfb) rho`` with ``f`` frozen at each step's midpoint."""
    L0, Lf, Lfb = superops
    h = grid.dt
    n = grid.steps
    fmid = np.asarray(f_of_t((np.arange(n) + 0.5) * h), dtype=complex)
    cache = {}
    y = vec(rho0).astype(complex)
    out = np.empty((n + 1, obs_rows.shape[0]), dtype=complex)
    out[0] = obs_rows @ y
    for k in range(n):
        fk = complex(fmid[k])
        P = cache.get(fk)
        if P is None:
            P = cache[fk] = _rk4_poly(L0 + fk * Lf + fk.conjugate() * Lfb, h)
        y = P @ y
        out[k + 1] = obs_rows @ y
    return out, y


def _halving_check(fine, coarse, tol, what):
    diff = float(np.max(np.abs(fine[::2] - coarse))) if coarse is not None else 0.0
    if diff > tol:
        warnings.warn(f"{what}: halving the step count changes outputs by {diff:.3e} "
                      f"(> {tol:.1e}); grid too coarse", GridTooCoarseWarning, stacklevel=3)
    return diff


# --------------------------------------------------------------------------
# flow expectations
# --------------------------------------------------------------------------

def flow_expectations(model, state, observables, grid, convention="derived",
                      check=True, tol=1e-8):
    """``m_t(Y) = <xi, j_t(Y) xi>`` on every node of ``grid``.

    The model's H and L define the flow (the HP unitary). For a coherent
    field the drift picks up ``f [L*, Y] + conj(f) [Y, L]``; this is the
    ``"derived"`` convention, which the collision oracle confirms.
    With ``check=True`` the run is repeated on the half-resolution grid and
    a :class:`GridTooCoarseWarning` is raised when the two differ by more
    than ``tol`` at shared nodes; the difference is stored in
    ``meta["halving_diff"]``.
    """
    if state.dim != model.dim:
        raise DimensionError(f"state dimension {state.dim} != model dimension {model.dim}")
    obs = _observable_rows(observables, model.dim)
    ops = flow_superops(model, convention)
    vals, _ = _integrate_linear(ops, state.f, state.rho0, grid, obs)
    w = state.weight(grid.T)
    meta = {"weight": w, "convention": convention}
    if check and grid.steps % 2 == 0:
        coarse, _ = _integrate_linear(ops, state.f, state.rho0, TimeGrid(grid.T, grid.steps // 2), obs)
        meta["halving_diff"] = _halving_check(w * vals, w * coarse, tol, "flow_expectations")
    return Trajectory(grid.times, w * vals, meta)


@dataclass
class UnitarityReport:
    residual: float
    hermiticity_drift: float


def unitarity_residual(model, state, grid, observable=None, superops=None):
    """``max_t |m_t(I) - 1|`` for the normalized state, plus ``max_t |Im m_t(Y)|``
    for a Hermitian observable ``Y`` (default: the Hermitian part of ``L``).

    ``superops`` overrides the generator (used for negative controls).
    """
    d = model.dim
    Y = hermitian_part(model.L)[0] if observable is None else as_operator(observable, d)
    if not certify_hermitian(Y).hermitian:
        raise ValueError("observable must be Hermitian")
    obs = _observable_rows([np.eye(d), Y], d)
    ops = flow_superops(model) if superops is None else superops
    vals, _ = _integrate_linear(ops, state.f, state.rho0, grid, obs)
    return UnitarityReport(float(np.max(np.abs(vals[:, 0] - 1.0))),
                           float(np.max(np.abs(vals[:, 1].imag))))


# --------------------------------------------------------------------------
# controlled evolution
# --------------------------------------------------------------------------

def _gain_stages(K, grid):
    """Gain values at ``2*steps + 1`` half nodes, shape ``(2n+1, [B,] k, d)``."""
    if hasattr(K, "half_values"):
        return K.half_values(grid)
    K = np.atleast_2d(np.asarray(K, dtype=complex))
    if K.ndim == 2:
        return np.broadcast_to(K, (2 * grid.steps + 1,) + K.shape)
    if K.shape[0] == 2 * grid.steps + 1:
        return K
    raise DimensionError("gain must be an operator, a schedule, or an array over half nodes")


def controlled_rk4(model, K_half, grid, rho0, running=None, R=None, state=None,
                   keep_nodes=True):
    """RK4 for ``rho' = A rho + rho A* + Phi rho Phi*`` with ``A = F + G K(t)``.

    ``K_half`` has shape ``(2n+1, k, d)`` or ``(2n+1, B, k, d)`` (a batch of
    gain schedules integrated together). When ``running`` (the operator
    ``X*X``) is given, the running costs ``int Tr(rho X*X) dt`` and
    ``int Tr(rho K* R K) dt`` are integrated as extra RK4 components.
    Returns ``(rho, state_cost, control_cost)`` where ``rho`` holds every
    node (``keep_nodes=True``, shape ``(n+1, [B,] d, d)``) or only the final
    density.
    """
    F, G, Phi, Psi = model.F, model.G, model.Phi, model.Psi
    Phis, Psis = adjoint(Phi), adjoint(Psi)
    h = grid.dt
    n = grid.steps
    K_half = np.asarray(K_half, dtype=complex)
    batch = K_half.shape[1:-2]
    rho = np.broadcast_to(np.asarray(rho0, dtype=complex), batch + rho0.shape).copy()
    if state is None or state.is_vacuum:
        fmid = np.zeros(n, dtype=complex)
    else:
        fmid = np.asarray(state.f((np.arange(n) + 0.5) * h), dtype=complex)
    Xs = None if running is None else as_operator(running, model.dim)
    Rw = None if R is None else np.atleast_2d(np.asarray(R, dtype=complex))
    GK_half = G @ K_half

    def herm_adj(A):
        return np.swapaxes(A, -1, -2).conj()

    def rhs(rho, GK, Kt, ft):
        A = F + GK
        d = A @ rho + rho @ herm_adj(A) + Phi @ rho @ Phis
        if ft != 0:
            d = d + ft * (Psi @ rho + rho @ Phis) + np.conj(ft) * (Phi @ rho + rho @ Psis)
        if Xs is None:
            return d, 0.0, 0.0
        KRK = herm_adj(Kt) @ (Kt if Rw is None else Rw @ Kt)
        cs = np.einsum("...ij,ji->...", rho, Xs)
        cc = np.einsum("...ij,...ji->...", rho, KRK)
        return d, cs, cc

    nodes = np.empty((n + 1,) + rho.shape, dtype=complex) if keep_nodes else None
    if keep_nodes:
        nodes[0] = rho
    cs = np.zeros(batch, dtype=complex)
    cc = np.zeros(batch, dtype=complex)
    for k in range(n):
        i0, i1, i2 = 2 * k, 2 * k + 1, 2 * k + 2
        fk = fmid[k]
        k1, s1, c1 = rhs(rho, GK_half[i0], K_half[i0], fk)
        k2, s2, c2 = rhs(rho + 0.5 * h * k1, GK_half[i1], K_half[i1], fk)
        k3, s3, c3 = rhs(rho + 0.5 * h * k2, GK_half[i1], K_half[i1], fk)
        k4, s4, c4 = rhs(rho + h * k3, GK_half[i2], K_half[i2], fk)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if Xs is not None:
            cs = cs + (h / 6.0) * (s1 + 2 * s2 + 2 * s3 + s4)
            cc = cc + (h / 6.0) * (c1 + 2 * c2 + 2 * c3 + c4)
        if keep_nodes:
            nodes[k + 1] = rho
    out = nodes if keep_nodes else rho
    if Xs is None:
        return out, None, None
    return out, cs, cc


def controlled_sandwich_flow(model, K, grid, Y_list, state=None, check=True, tol=1e-8):
    """``S_t(Y) = <xi, U_t* Y U_t xi>`` under the feedback ``u_t = K(t) U_t``.

    ``K`` is a constant operator, a :class:`~qflowctl.control.GainSchedule`,
    or an array of gains on the half-node grid. ``state`` defaults to the
    vacuum over the first basis vector; non-vacuum states use the
    coherent-field terms and are experimental.
    """
    d = model.dim
    if state is None:
        state = ExpVectorState.vacuum(np.eye(d)[0])
    obs = np.array([as_operator(Y, d) for Y in Y_list])

    def run(g):
        nodes, _, _ = controlled_rk4(model, _gain_stages(K, g), g, state.rho0, state=state)
        return np.einsum("kij,oji->ko", nodes, obs)

    vals = run(grid)
    w = state.weight(grid.T)
    meta = {"weight": w, "experimental": not state.is_vacuum}
    if check and grid.steps % 2 == 0:
        coarse = TimeGrid(grid.T, grid.steps // 2)
        meta["halving_diff"] = _halving_check(w * vals, w * run(coarse), tol,
                                              "controlled_sandwich_flow")
    return Trajectory(grid.times, w * vals, meta)


# --------------------------------------------------------------------------
# collision oracle
# --------------------------------------------------------------------------

def _mode_ops(n):
    a = np.diag(np.sqrt(np.arange(1, n)), 1).astype(complex)
    return a, a.conj().T


def coherent_truncated(alpha, n):
    """First ``n`` Fock amplitudes of the coherent state, renormalized."""
    k = np.arange(n)
    v = np.array([complex(alpha) ** j / math.sqrt(math.factorial(j)) for j in k], dtype=complex)
    return v / np.linalg.norm(v)


def collision_step_unitary(model, dt, n_max):
    """``exp(-i H dt (x) I + sqrt(dt) (L (x) a^dagger - L* (x) a))``.

    The quadratic part of the exponential already produces the
    ``-L*L dt / 2`` damping, so it is not added separately.
    """
    a, ad = _mode_ops(n_max)
    Im = np.eye(n_max)
    G = (-1j * dt * np.kron(model.H, Im)
         + math.sqrt(dt) * (np.kron(model.L, ad) - np.kron(adjoint(model.L), a)))
    return scipy.linalg.expm(G)


def collision_oracle(model, state, grid, observables, n_max=4, leak_tol=1e-6):
    """Repeated-interaction simulation of the flow expectations.

    Each step couples the system to a fresh ``n_max``-level mode prepared
    in the truncated coherent state of amplitude ``f sqrt(dt)`` (``f`` at
    the step midpoint), applies :func:`collision_step_unitary` and traces
    the mode out. First order in ``dt``. A :class:`TruncationWarning` is
    raised when the top mode level ever holds more than ``leak_tol``.
    """
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    d = model.dim
    h = grid.dt
    V = collision_step_unitary(model, h, n_max)
    Vh = V.conj().T
    obs = np.array([as_operator(Y, d) for Y in observables])
    rho = state.rho0.astype(complex)
    fmid = state.f((np.arange(grid.steps) + 0.5) * h)
    out = np.empty((grid.steps + 1, len(obs)), dtype=complex)
    out[0] = np.einsum("ij,oji->o", rho, obs)
    leak = 0.0
    cache = {}
    for k in range(grid.steps):
        fk = complex(fmid[k])
        mode = cache.get(fk)
        if mode is None:
            v = coherent_truncated(fk * math.sqrt(h), n_max)
            mode = cache[fk] = np.outer(v, v.conj())
        joint = V @ np.kron(rho, mode) @ Vh
        j4 = joint.reshape(d, n_max, d, n_max)
        leak = max(leak, float(np.einsum("ikik->k", j4)[-1].real))
        rho = np.einsum("ikjk->ij", j4)
        out[k + 1] = np.einsum("ij,oji->o", rho, obs)
    if leak > leak_tol:
        warnings.warn(f"collision mode leakage {leak:.2e} at level {n_max - 1} exceeds "
                      f"{leak_tol:.0e}; raise n_max", TruncationWarning, stacklevel=2)
    w = state.weight(grid.T)
    return Trajectory(grid.times, w * out, {"weight": w, "leakage": leak, "n_max": n_max})


def oracle_deviation(model, state, observables, steps, n_max=4, T=None):
    """``max |collision - flow|`` over nodes and observables at a given step count."""
    grid = TimeGrid(model.T if T is None else T, steps)
    ref = flow_expectations(model, state, observables, grid, check=False)
    col = collision_oracle(model, state, grid, observables, n_max=n_max)
    return float(np.max(np.abs(ref.values - col.values)))
