"""Operator Riccati equations: backward ODE, auxiliary affine ODE, Picard
iteration, Newton-Kleinman CARE and the stationary flow-cost equation.

Conventions: ``S = G R^-1 G*``; the backward equation is

    dPi/dt + Pi F + F* Pi + Phi* Pi Phi - Pi S Pi + Q = 0,   Pi(T) = Q_T,

and its time reversal ``P(s) = Pi(T - s)`` solves the forward equation
with ``P(0) = Q_T``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.interpolate
import scipy.linalg

from .flow import TimeGrid
from .operators import (CERT_TOL, DimensionError, NotPSDError, adjoint, as_operator,
                        certify_hermitian, certify_psd, hermitian_part, is_psd, project_psd,
                        psd_sqrt, solve_generalized_lyapunov, vec, unvec)


class RiccatiBlowUpError(ArithmeticError):
    def __init__(self, time, norm, bound, trajectory=None):
        self.time = time
        self.norm = norm
        self.bound = bound
        self.trajectory = trajectory
        super().__init__(f"|Pi| = {norm:.3e} exceeded {bound:.1e} at t = {time:.6g}")


class NewtonStagnationError(ArithmeticError):
    def __init__(self, residuals):
        self.residuals = list(residuals)
        super().__init__(f"Newton residual stopped decreasing at {residuals[-1]:.3e}")


class PicardPSDError(ArithmeticError):
    pass


def _herm(A):
    return 0.5 * (A + np.swapaxes(A, -1, -2).conj())


# --------------------------------------------------------------------------
# cost
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CostSpec:
    """Quadratic cost weights (time-constant).

    ``QT`` is the terminal weight (``M``); ``mT`` the terminal affine
    weight. For the forward orientation (initial cost) ``QT`` plays the
    part of ``Q_0``. The affine weights act on the state from the left:
    ``m`` and ``mT`` have shape ``(p, d)`` and ``eta`` shape ``(p, k)`` with
    ``k`` the control dimension; ``p = d`` for operator states and ``p = 1``
    for the vector reduction.
    """
    Q: np.ndarray
    R: np.ndarray
    QT: np.ndarray
    m: np.ndarray | None = None
    eta: np.ndarray | None = None
    mT: np.ndarray | None = None
    tol: float = CERT_TOL

    def __post_init__(self):
        Q = as_operator(self.Q)
        d = Q.shape[0]
        R = as_operator(self.R)
        QT = as_operator(self.QT, d)
        for name, A in (("Q", Q), ("QT", QT)):
            if not certify_psd(A, self.tol).psd:
                raise NotPSDError(f"{name} must be Hermitian psd")
        cr = certify_psd(R, self.tol)
        if not cr.hermitian or cr.min_eig <= 1e-8:
            raise NotPSDError(f"R must be Hermitian positive definite (min eig {cr.min_eig:.3e})")
        zero = np.zeros((d, d), dtype=complex)
        put = lambda k, v: object.__setattr__(self, k, v)
        put("Q", hermitian_part(Q)[0])
        put("QT", hermitian_part(QT)[0])
        put("R", hermitian_part(R)[0])
        k = R.shape[0]
        mat = lambda v: np.atleast_2d(np.asarray(v, dtype=complex))
        m = zero if self.m is None else mat(self.m)
        p = m.shape[0]
        mT = np.zeros((p, d), dtype=complex) if self.mT is None else mat(self.mT)
        eta = np.zeros((p, k), dtype=complex) if self.eta is None else mat(self.eta)
        if m.shape != (p, d) or mT.shape != (p, d) or eta.shape != (p, k):
            raise DimensionError(f"affine weights must be m, mT: ({p}, {d}), eta: ({p}, {k})")
        put("m", m)
        put("mT", mT)
        put("eta", eta)

    @property
    def dim(self):
        return self.Q.shape[0]

    @property
    def Rinv(self):
        return np.linalg.inv(self.R)

    @classmethod
    def flow(cls, X, M):
        """``Q = X*X``, ``R = I``, terminal ``M``: the flow-cost setting."""
        X = as_operator(X)
        return cls(adjoint(X) @ X, np.eye(X.shape[0]), M)


def gain_matrix(G, cost):
    """``S = G R^-1 G*``."""
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    return _herm(G @ cost.Rinv @ G.conj().T)


# --------------------------------------------------------------------------
# trajectory
# --------------------------------------------------------------------------

@dataclass
class RiccatiTrajectory:
    """``Pi`` (and optionally ``r``) on a grid, with derivative samples for
    cubic Hermite interpolation between nodes."""
    grid: TimeGrid
    Pi: np.ndarray
    dPi: np.ndarray
    r: np.ndarray | None = None
    dr: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = None
        self._rspline = None

    def at(self, t):
        """``Pi(t)`` for scalar or array ``t`` (cubic Hermite, fourth-order accurate)."""
        if self._spline is None:
            self._spline = scipy.interpolate.CubicHermiteSpline(
                self.grid.times, self.Pi, self.dPi, axis=0)
        return _herm(self._spline(t))

    def r_at(self, t):
        if self.r is None:
            raise ValueError("trajectory carries no affine term")
        if self._rspline is None:
            self._rspline = scipy.interpolate.CubicHermiteSpline(
                self.grid.times, self.r, self.dr, axis=0)
        return self._rspline(t)

    def half_values(self, grid=None):
        g = self.grid if grid is None else grid
        return self.at(g.half_times)

    @property
    def Pi0(self):
        return self.Pi[0]

    def rows(self):
        """CSV rows ``(t, i, j, pi_re, pi_im, r_re, r_im)``."""
        d = self.Pi.shape[-1]
        r = self.r if self.r is not None else np.zeros_like(self.Pi)
        for k, t in enumerate(self.grid.times):
            for i in range(d):
                for j in range(d):
                    p, q = self.Pi[k, i, j], r[k, i, j]
                    yield (float(t), i, j, float(p.real), float(p.imag),
                           float(q.real), float(q.imag))


RICCATI_HEADER = ("t", "i", "j", "pi_re", "pi_im", "r_re", "r_im")


# --------------------------------------------------------------------------
# backward Riccati ODE
# --------------------------------------------------------------------------

def riccati_rhs(P, F, Phi, S, Q):
    """``F* P + P F + Phi* P Phi - P S P + Q`` (so that ``dPi/dt = -rhs``)."""
    Fs = adjoint(F)
    out = Fs @ P + P @ F - P @ S @ P + Q
    if Phi is not None:
        out = out + adjoint(Phi) @ P @ Phi
    return out


def _integrate_forward(P0, rhs, grid, bound, symmetrize=True):
    """RK4 for ``P' = rhs(P)`` from ``s = 0``; returns nodes and rhs samples."""
    h = grid.dt
    n = grid.steps
    P = np.array(P0, dtype=complex)
    nodes = np.empty((n + 1,) + P.shape, dtype=complex)
    derivs = np.empty_like(nodes)
    asym = 0.0
    nodes[0] = P
    for k in range(n):
        k1 = rhs(P)
        k2 = rhs(P + 0.5 * h * k1)
        k3 = rhs(P + 0.5 * h * k2)
        k4 = rhs(P + h * k3)
        derivs[k] = k1
        P = P + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        if symmetrize:
            asym = max(asym, float(np.linalg.norm(0.5 * (P - P.conj().T))))
            P = _herm(P)
        nrm = float(np.linalg.norm(P))
        if not np.isfinite(nrm) or nrm > bound:
            raise RiccatiBlowUpError((k + 1) * h, nrm, bound, nodes[:k + 1])
        nodes[k + 1] = P
    derivs[n] = rhs(P)
    return nodes, derivs, asym


def solve_riccati_ode(model, cost, grid, Phi="model", blowup_bound=1e8):
    """Backward RK4 solve of the Riccati ODE with ``Pi(T) = Q_T``.

    ``Phi="model"`` uses the model's ``Phi``; pass ``None`` to drop the
    ``Phi* Pi Phi`` term or another operator to override it. Records the
    noise-coefficient residuals ``max_t ||Pi Psi + Phi* Pi||`` and
    ``max_t ||Pi Phi + Psi* Pi||`` without enforcing them.
    """
    F = model.F
    Phi = model.Phi if isinstance(Phi, str) else Phi
    S = gain_matrix(model.G, cost)
    Q = cost.Q
    d = model.dim
    if cost.dim != d:
        raise DimensionError("cost and model dimensions differ")
    rhs = lambda P: riccati_rhs(P, F, Phi, S, Q)
    try:
        rev, drev, asym = _integrate_forward(cost.QT, rhs, grid, blowup_bound)
    except RiccatiBlowUpError as e:
        raise RiccatiBlowUpError(grid.T - e.time, e.norm, blowup_bound) from None
    Pi = rev[::-1].copy()
    Pi[-1] = cost.QT
    dPi = -drev[::-1]
    traj = RiccatiTrajectory(grid, Pi, dPi)
    traj.diagnostics = riccati_diagnostics(traj, model, asym)
    return traj


def riccati_diagnostics(traj, model, asym=0.0):
    Pi = traj.Pi
    Psi, Phi = model.Psi, model.Phi
    resA = np.linalg.norm(Pi @ Psi + adjoint(Phi) @ Pi, axis=(1, 2))
    resAd = np.linalg.norm(Pi @ Phi + adjoint(Psi) @ Pi, axis=(1, 2))
    return {
        "max_asymmetry": float(asym),
        "min_eigenvalue": float(min(np.linalg.eigvalsh(P)[0] for P in Pi)),
        "noise_residual_dA": float(resA.max()),
        "noise_residual_dAdag": float(resAd.max()),
    }


# --------------------------------------------------------------------------
# auxiliary affine equation
# --------------------------------------------------------------------------

def solve_auxiliary_ode(model, cost, traj, affine_drift=None, grid=None):
    """Backward RK4 solve of the affine equation with ``r(T) = m_T*``:

        dr/dt + (F - S Pi)* r + Pi affine_drift + m* - Pi G R^-1 eta* = 0.

    ``r`` has the shape of ``m*``, ``(d, p)``. Stores ``r`` and its
    derivative on ``traj`` and returns ``r``.
    """
    if grid is not None and (grid.steps != traj.grid.steps or grid.T != traj.grid.T):
        raise DimensionError("auxiliary grid differs from the Riccati grid")
    g = traj.grid
    d = model.dim
    F, G = model.F, model.G
    S = gain_matrix(G, cost)
    Rinv = cost.Rinv
    ms = cost.m.conj().T                 # (d, p)
    etas = cost.eta.conj().T             # (k, p)
    ell = np.zeros_like(ms) if affine_drift is None else np.atleast_2d(np.asarray(affine_drift, complex))
    if ell.ndim == 2 and ell.shape[0] == d and ell.shape[1] == 1 and ms.shape[1] != 1:
        ell = np.broadcast_to(ell, ms.shape)
    if ell.shape != ms.shape:
        raise DimensionError(f"affine drift must have shape {ms.shape}, got {ell.shape}")
    GRi = G @ Rinv

    def rhs(s, r):
        Pi = traj.at(g.T - s)
        A = F - S @ Pi
        return adjoint(A) @ r + Pi @ ell + ms - Pi @ GRi @ etas

    h = g.dt
    n = g.steps
    r = cost.mT.conj().T.copy()
    nodes = np.empty((n + 1,) + r.shape, dtype=complex)
    derivs = np.empty_like(nodes)
    nodes[0] = r
    for k in range(n):
        s = k * h
        k1 = rhs(s, r)
        k2 = rhs(s + 0.5 * h, r + 0.5 * h * k1)
        k3 = rhs(s + 0.5 * h, r + 0.5 * h * k2)
        k4 = rhs(s + h, r + h * k3)
        derivs[k] = k1
        r = r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        nodes[k + 1] = r
    derivs[n] = rhs(g.T, r)
    traj.r = nodes[::-1].copy()
    traj.dr = -derivs[::-1]
    traj._rspline = None
    return traj.r


# --------------------------------------------------------------------------
# Picard iteration (forward orientation, Pi(0) = Q0)
# --------------------------------------------------------------------------

def effective_drift(model, mode="vacuum"):
    """Drift entering the propagators of the iteration.

    ``"vacuum"``: ``F``. ``"levy"``: ``F + Psi Phi``, the creation /
    annihilation pair with ``dA dA^dagger = dt`` (only ``sigma_22 = 1``
    survives in the Ito correction of the drift).
    """
    if mode == "vacuum":
        return model.F
    if mode == "levy":
        return model.F + model.Psi @ model.Phi
    raise ValueError("mode must be 'vacuum' or 'levy'")


def _lyap_superop(A, Phi):
    """Matrix of ``P -> A* P + P A + Phi* P Phi`` on column-stacked ``P``."""
    d = A.shape[0]
    I = np.eye(d)
    M = np.kron(I, adjoint(A)) + np.kron(A.T, I)
    if Phi is not None:
        M = M + np.kron(Phi.T, adjoint(Phi))
    return M


def _lyap_superop_batch(As, Phi):
    """Stack of :func:`_lyap_superop` matrices for ``As`` of shape ``(n, d, d)``."""
    n, d, _ = As.shape
    I = np.eye(d)
    Ah = np.swapaxes(As, 1, 2).conj()
    M = (np.einsum("ij,nkl->nikjl", I, Ah).reshape(n, d * d, d * d)
         + np.einsum("nji,kl->nikjl", As, I).reshape(n, d * d, d * d))
    if Phi is not None:
        M = M + np.kron(Phi.T, adjoint(Phi))[None]
    return M


def _expm_batch(Ms):
    """Batched matrix exponential; truncated Taylor series when every norm is
    below 1/2 (terms stop once below rounding), ``scipy.linalg.expm`` otherwise."""
    nrm = float(np.max(np.linalg.norm(Ms, ord=1, axis=(1, 2)), initial=0.0))
    if nrm > 0.5:
        return scipy.linalg.expm(Ms)
    order, tail = 1, nrm
    while tail > 1e-17 and order < 20:
        order += 1
        tail *= nrm / order
    n = Ms.shape[-1]
    out = np.broadcast_to(np.eye(n, dtype=complex), Ms.shape).copy()
    term = out.copy()
    for k in range(1, order + 1):
        term = term @ Ms / k
        out += term
    return out


@dataclass
class PicardResult:
    iterates: list
    monotonicity: list          # min eig(Pi_n - Pi_{n+1}) per n (1-based n)
    increments: list            # max_t ||Pi_{n+1} - Pi_n||_F
    drift_mode: str
    grid: TimeGrid

    @property
    def final(self):
        return self.iterates[-1]

    def monotone_from(self, n0=2, tol=1e-8):
        return all(m >= -tol for n, m in enumerate(self.monotonicity, start=1) if n >= n0)


def picard_iterate(model, cost, grid, n_iters=30, drift_mode="vacuum", Phi="model",
                   psd_tol=1e-8, tol=None):
    """Fixed-point iteration for the forward Riccati equation with ``Pi(0) = Q0``.

    ``Pi_1 = Q0``; ``Pi_{n+1}`` solves the linear equation
    ``P' = A_n* P + P A_n + Phi* P Phi + Q + Pi_n S Pi_n`` with
    ``A_n = F_eff - S Pi_n``, ``P(0) = Q0``, i.e. the variation-of-constants
    formula with the propagator of the linear part. The integral is
    evaluated with the trapezoid rule, the one-step propagator exactly
    (matrix exponential of the superoperator at the step midpoint).

    ``Q0`` is ``cost.QT``. Stops early when ``tol`` is given and the
    largest nodal increment falls below it.
    """
    d = model.dim
    Phi = model.Phi if isinstance(Phi, str) else Phi
    F = effective_drift(model, drift_mode)
    S = gain_matrix(model.G, cost)
    Q, Q0 = cost.Q, cost.QT
    n = grid.steps
    h = grid.dt
    prev = np.broadcast_to(Q0, (n + 1, d, d)).copy()
    iterates = [prev]
    mono, incs = [], []
    for it in range(n_iters):
        A = F[None] - S[None] @ prev                          # A_n at nodes
        Amid = 0.5 * (A[:-1] + A[1:])
        g = Q[None] + prev @ S[None] @ prev                   # forcing at nodes
        gv = np.swapaxes(g, 1, 2).reshape(n + 1, d * d)      # column-stacked
        props = _expm_batch(h * _lyap_superop_batch(Amid, Phi))
        ys = np.empty((n + 1, d * d), dtype=complex)
        y = vec(Q0).astype(complex)
        ys[0] = y
        for k in range(n):
            y = props[k] @ (y + 0.5 * h * gv[k]) + 0.5 * h * gv[k + 1]
            ys[k + 1] = y
        nxt = _herm(np.swapaxes(ys.reshape(n + 1, d, d), 1, 2))
        lo = float(np.linalg.eigvalsh(nxt)[:, 0].min())
        if lo < -psd_tol * max(1.0, float(np.abs(nxt).max())):
            raise PicardPSDError(f"iterate {it + 2} lost positivity: min eigenvalue {lo:.3e}")
        diff = _herm(prev - nxt)
        mono.append(float(np.linalg.eigvalsh(diff)[:, 0].min()))
        incs.append(float(np.linalg.norm(diff, axis=(1, 2)).max()))
        iterates.append(nxt)
        prev = nxt
        if tol is not None and incs[-1] < tol:
            break
    return PicardResult(iterates, mono, incs, drift_mode, grid)


def solve_forward_riccati(model, cost, grid, drift_mode="vacuum", Phi="model"):
    """Direct forward solution ``P(0) = Q0`` by reindexing the backward solver.

    Returns node values ordered in forward time.
    """
    F = effective_drift(model, drift_mode)
    fwd_model = _replace_F(model, F)
    traj = solve_riccati_ode(fwd_model, cost, grid, Phi=Phi)
    return traj.Pi[::-1].copy()


def _replace_F(model, F):
    from .flow import HPModel
    return HPModel(model.H, model.L, model.T, F, model.G, model.Psi, model.Phi)


# --------------------------------------------------------------------------
# Newton-Kleinman CARE
# --------------------------------------------------------------------------

@dataclass
class CareResult:
    Pi: np.ndarray
    residual: float
    residuals: list
    iterations: int
    init: str


def care_residual(Pi, F, S, Q, Phi=None):
    return riccati_rhs(Pi, F, Phi, S, Q)


def _long_horizon_init(F, Phi, S, Q):
    scale = 1.0 + np.linalg.norm(F, 2) + (np.linalg.norm(Phi, 2) ** 2 if Phi is not None else 0.0)
    T = 50.0 / max(np.linalg.norm(F, 2), 1e-3)
    h = 0.05 / (scale + math.sqrt(np.linalg.norm(S, 2) * max(np.linalg.norm(Q, 2), 1e-12)))
    steps = int(min(200_000, max(200, math.ceil(T / h))))
    grid = TimeGrid(T, steps)
    rhs = lambda P: riccati_rhs(P, F, Phi, S, Q)
    nodes, _, _ = _integrate_forward(np.zeros_like(Q), rhs, grid, 1e12)
    return nodes[-1]


def solve_care(F, G, R, Q, Phi=None, tol=1e-10, max_iter=100, init=None):
    """Newton-Kleinman for ``F* Pi + Pi F + Phi* Pi Phi + Q - Pi S Pi = 0``.

    Each step solves the generalized Lyapunov equation
    ``A_k* D + D A_k + Phi* D Phi = -Res(Pi_k)``, ``A_k = F - S Pi_k``;
    this is the exact Newton step because the ``Phi`` term is linear.
    Initial guess: ``psd_sqrt(Q)`` when ``F + F*`` is negative
    semidefinite, else the long-horizon Riccati ODE value; the other choice
    is tried if the first one stagnates.
    """
    F = as_operator(F)
    d = F.shape[0]
    G = as_operator(G) if np.ndim(G) == 2 and np.shape(G)[0] == np.shape(G)[1] else np.asarray(G, complex)
    R = np.atleast_2d(np.asarray(R, dtype=complex))
    Q = hermitian_part(as_operator(Q, d))[0]
    Phi = None if Phi is None else as_operator(Phi, d)
    if not certify_psd(Q).psd:
        raise NotPSDError("Q must be psd")
    S = _herm(G @ np.linalg.inv(R) @ G.conj().T)
    scale = max(1.0, np.linalg.norm(Q), np.linalg.norm(F) ** 2)
    dissipative = np.linalg.eigvalsh(_herm(F + adjoint(F)))[-1] <= 1e-12

    def run(P, label):
        res = [float(np.linalg.norm(care_residual(P, F, S, Q, Phi)))]
        stall = 0
        best = P
        for it in range(max_iter):
            if res[-1] <= tol:
                return CareResult(P, res[-1], res, it, label)
            A = F - S @ P
            D = solve_generalized_lyapunov(A, Phi, -care_residual(P, F, S, Q, Phi))
            P = _herm(P + D)
            r = float(np.linalg.norm(care_residual(P, F, S, Q, Phi)))
            if not np.isfinite(r):
                raise NewtonStagnationError(res + [r])
            stall = stall + 1 if r >= res[-1] else 0
            res.append(r)
            if r < min(res[:-1]):
                best = P
            if stall >= 5:
                raise NewtonStagnationError(res)
        if res[-1] > tol:
            raise NewtonStagnationError(res)
        return CareResult(best, res[-1], res, max_iter, label)

    if init is not None:
        order = [("given", lambda: hermitian_part(as_operator(init, d))[0])]
    else:
        sq = ("psd_sqrt", lambda: psd_sqrt(Q))
        ode = ("riccati_ode", lambda: _long_horizon_init(F, Phi, S, Q))
        order = [sq, ode] if dissipative else [ode, sq]
    last = None
    for label, make in order:
        try:
            out = run(make(), label)
        except (NewtonStagnationError, RiccatiBlowUpError, np.linalg.LinAlgError) as e:
            last = e
            continue
        if not is_psd(out.Pi, 1e-8):
            last = NotPSDError(f"Newton limit from {label} is not psd")
            continue
        return out
    raise last


# --------------------------------------------------------------------------
# stationary flow-cost equation
# --------------------------------------------------------------------------

ARE_FORMS = {"paper": (0.5, 0.25), "derived": (1.0, 1.0)}


def paper_are_residual(H, X, Pi, form="paper"):
    """``a i[H, Pi] + b Pi^2 + X^2`` with ``(a, b) = (1/2, 1/4)`` (``"paper"``)
    or ``(1, 1)`` (``"derived"``: the stationary Riccati ODE at
    ``F = -iH``, ``Phi = L``, ``Pi = L*L/2``)."""
    a, b = ARE_FORMS[form]
    return a * 1j * (H @ Pi - Pi @ H) + b * Pi @ Pi + X @ X


@dataclass
class PaperAREResult:
    feasible: bool
    Pi: np.ndarray
    residual: float
    trace_obstruction: float
    form: str
    iterations: int = 0

    def diagnostics(self):
        return {"feasible": self.feasible, "residual": self.residual,
                "trace_obstruction": self.trace_obstruction, "form": self.form,
                "iterations": self.iterations}


def solve_paper_are(H, X, tol=1e-12, form="paper", ridge=1e-8, max_iter=5000):
    """Psd solution of the stationary flow-cost Riccati equation, or an
    infeasibility certificate.

    Taking the trace kills the commutator, leaving ``b tr(Pi^2) +
    tr(X^2) = 0``: a Hermitian solution exists only for ``X = 0``. For
    ``X != 0`` the result carries ``trace_obstruction = tr(X^2) > 0`` and
    the psd ``Pi`` minimizing ``||residual||_F^2 + ridge ||Pi||_F^2``,
    found by projected gradient descent from ``Pi = 0`` with Armijo
    backtracking.
    """
    H, X = as_operator(H), as_operator(X)
    for name, A in (("H", H), ("X", X)):
        if not certify_hermitian(A).hermitian:
            raise ValueError(f"{name} must be Hermitian")
    H, X = hermitian_part(H)[0], hermitian_part(X)[0]
    d = H.shape[0]
    obstruction = float(np.trace(X @ X).real)
    zero = np.zeros((d, d), dtype=complex)
    if obstruction <= tol:
        res = float(np.linalg.norm(paper_are_residual(H, X, zero, form)))
        return PaperAREResult(True, zero, res, obstruction, form)
    a, b = ARE_FORMS[form]

    def obj(P):
        E = paper_are_residual(H, X, P, form)
        return float(np.linalg.norm(E) ** 2 + ridge * np.linalg.norm(P) ** 2), E

    def grad(P, E):
        G = a * 1j * (E @ H - H @ E) + b * (E @ P + P @ E)
        return _herm(2.0 * G + 2.0 * ridge * P)

    P = zero
    f, E = obj(P)
    step = 1.0 / (1.0 + np.linalg.norm(H, 2) + np.linalg.norm(X, 2) ** 2)
    it = 0
    for it in range(max_iter):
        g = grad(P, E)
        while True:
            Pn = project_psd(P - step * g)
            fn, En = obj(Pn)
            dec = np.linalg.norm(Pn - P) ** 2 / (2 * step)
            if fn <= f - 0.5 * dec or step < 1e-14:
                break
            step *= 0.5
        moved = np.linalg.norm(Pn - P)
        P, f, E = Pn, fn, En
        step *= 2.0
        if moved <= 1e-14 * max(1.0, np.linalg.norm(P)):
            break
    res = float(np.linalg.norm(paper_are_residual(H, X, P, form)))
    return PaperAREResult(False, P, res, obstruction, form, it + 1)
