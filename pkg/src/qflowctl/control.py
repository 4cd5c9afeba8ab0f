"""Feedback synthesis and the quadratic cost functionals of controlled flows.

Three costs of a flow are compared here:

* ``j_hat`` -- the flow cost of the coupling ``L``:
  ``int ||j_t(X) xi||^2 + ||j_t(L*L) xi||^2 / 4 dt + ||j_T(L) xi||^2 / 2``;
* ``j`` -- flow size plus control effort plus terminal penalty for a
  feedback ``u_t = K U_t``;
* ``j_tilde`` -- the quadratic cost of the controlled evolution, computed
  from the controlled sandwich flow.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.interpolate
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .flow import (ExpVectorState, HPModel, TimeGrid, controlled_rk4, flow_expectations)
from .operators import (CERT_TOL, DimensionError, adjoint, as_operator, certify_hermitian,
                        commutator, hermitian_part, psd_sqrt)
from .riccati import (CostSpec, RiccatiTrajectory, gain_matrix, solve_auxiliary_ode,
                      solve_riccati_ode)

IMAG_TOL = 1e-10


def _real(z, what, scale=1.0):
    z = complex(z)
    if abs(z.imag) > IMAG_TOL * max(1.0, abs(z), scale):
        raise ArithmeticError(f"{what} has imaginary part {z.imag:.3e}")
    return z.real


# --------------------------------------------------------------------------
# gains
# --------------------------------------------------------------------------

@dataclass
class GainSchedule:
    """Feedback ``u_t = K(t) U_t`` sampled on the nodes of ``grid``.

    Between nodes the schedule is evaluated by ``fn`` when one is attached
    (e.g. the Hermite interpolant of a Riccati solution), else by a cubic
    spline through the nodes. ``affine`` carries the separate affine part
    of the feedback law, when there is one.
    """
    grid: TimeGrid
    K: np.ndarray
    provenance: str = "custom"
    fn: object = None
    affine: np.ndarray | None = None
    source: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.K = np.asarray(self.K, dtype=complex)
        if self.K.shape[0] != self.grid.steps + 1:
            raise DimensionError("gain schedule needs one operator per grid node")
        self._spline = None

    @classmethod
    def constant(cls, K, grid, provenance="custom"):
        K = np.atleast_2d(np.asarray(K, dtype=complex))
        return cls(grid, np.broadcast_to(K, (grid.steps + 1,) + K.shape).copy(), provenance,
                   fn=lambda t: np.broadcast_to(K, np.shape(t) + K.shape))

    def at(self, t):
        if self.fn is not None:
            return self.fn(t)
        if self._spline is None:
            self._spline = scipy.interpolate.CubicSpline(self.grid.times, self.K, axis=0)
        return self._spline(t)

    def half_values(self, grid=None):
        g = self.grid if grid is None else grid
        if g.T != self.grid.T:
            raise DimensionError("gain schedule horizon differs from the grid")
        if g == self.grid and self.fn is None:
            out = np.empty((2 * g.steps + 1,) + self.K.shape[1:], dtype=complex)
            out[0::2] = self.K
            out[1::2] = self.at(g.half_times[1::2])
            return out
        return np.asarray(self.at(g.half_times), dtype=complex)

    @property
    def dim(self):
        return self.K.shape[-1]


def feedback_gain(traj, cost, model, r=None):
    """``K = -R^-1 G* Pi`` and affine part ``-R^-1 (G* r + eta*)``.

    With ``G = R = I`` and no affine weights the gain is exactly ``-Pi``.
    """
    cr = np.linalg.eigvalsh(cost.R)
    if cr[0] <= 1e-8 * max(1.0, cr[-1]):
        raise np.linalg.LinAlgError(f"R is not safely invertible (min eigenvalue {cr[0]:.3e})")
    G = model.G
    d = model.dim
    identity = (G.shape == (d, d) and cost.R.shape == (d, d)
                and np.array_equal(G, np.eye(d)) and np.array_equal(cost.R, np.eye(d)))
    grid = traj.grid
    if identity:
        K = -traj.Pi
        fn = lambda t: -traj.at(t)
    else:
        RiGs = np.linalg.solve(cost.R, G.conj().T)
        K = -RiGs @ traj.Pi
        fn = lambda t: -RiGs @ traj.at(t)
    affine = None
    rr = traj.r if r is None else r
    if rr is not None:
        affine = -np.linalg.solve(cost.R, G.conj().T @ rr + cost.eta.conj().T)
    return GainSchedule(grid, K, "optimal", fn=fn, affine=affine, source=traj)


@dataclass
class SynthesizedCoupling:
    L: np.ndarray
    pi_residual: float          # ||L*L/2 - Pi_inf||_F
    normality_residual: float   # ||[L, L*]||_F


def synthesize_L(Pi_inf, W=None, tol=1e-10):
    """``L = sqrt(2) Pi_inf^(1/2) W`` for a unitary ``W`` commuting with ``Pi_inf``."""
    P = as_operator(Pi_inf)
    d = P.shape[0]
    W = np.eye(d, dtype=complex) if W is None else as_operator(W, d)
    if np.linalg.norm(adjoint(W) @ W - np.eye(d)) > tol * 10:
        raise ValueError("W must be unitary")
    c = float(np.linalg.norm(commutator(W, P)))
    if c > tol * max(1.0, np.linalg.norm(P)):
        raise ValueError(f"W does not commute with Pi_inf: ||[W, Pi]||_F = {c:.3e}")
    L = math.sqrt(2.0) * psd_sqrt(P) @ W
    Ls = adjoint(L)
    return SynthesizedCoupling(L, float(np.linalg.norm(0.5 * Ls @ L - P)),
                               float(np.linalg.norm(L @ Ls - Ls @ L)))


# --------------------------------------------------------------------------
# costs
# --------------------------------------------------------------------------

@dataclass
class CostReport:
    j_hat: float | None = None
    j: float | None = None
    j_tilde: float | None = None
    min_value_prediction: float | None = None
    gap_slope: float | None = None
    breakdown: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"j_hat": self.j_hat, "j": self.j, "j_tilde": self.j_tilde,
                "min_value_prediction": self.min_value_prediction,
                "gap_slope": self.gap_slope, "breakdown": dict(self.breakdown),
                "meta": dict(self.meta)}


def _trapezoid(vals, grid):
    return complex(np.trapezoid(vals, dx=grid.dt))


def _square_weight(X):
    X = as_operator(X)
    return X @ X if certify_hermitian(X).hermitian else adjoint(X) @ X


def eval_cost_flow(model, X, state, grid, check=False):
    """``j_hat`` for the HP flow of ``model`` (trapezoid quadrature)."""
    d = model.dim
    LsL = adjoint(model.L) @ model.L
    obs = [_square_weight(as_operator(X, d)), LsL @ LsL, LsL]
    tr = flow_expectations(model, state, obs, grid, check=check)
    size = _trapezoid(tr.values[:, 0], grid)
    effort = 0.25 * _trapezoid(tr.values[:, 1], grid)
    term = 0.5 * tr.values[-1, 2]
    total = size + effort + term
    br = {"running_state": _real(size, "flow size"), "running_control": _real(effort, "effort"),
          "terminal": _real(term, "terminal")}
    return _real(total, "j_hat"), br


def eval_cost_definition(model, X, K, M, state, grid, check=False):
    """``j`` for a constant feedback ``u_t = K U_t`` along the HP flow:
    ``int m_t(X*X) + m_t(K*K) dt + m_T(M)``."""
    d = model.dim
    K = as_operator(K, d)
    obs = [_square_weight(as_operator(X, d)), adjoint(K) @ K, as_operator(M, d)]
    tr = flow_expectations(model, state, obs, grid, check=check)
    size = _trapezoid(tr.values[:, 0], grid)
    effort = _trapezoid(tr.values[:, 1], grid)
    term = tr.values[-1, 2]
    br = {"running_state": _real(size, "flow size"), "running_control": _real(effort, "effort"),
          "terminal": _real(term, "terminal")}
    return _real(size + effort + term, "j"), br


def _controlled_costs(model, K_half, X, M, state, grid, R=None):
    """Batched ``j_tilde`` pieces for gains on the half-node grid."""
    Xs = _square_weight(as_operator(X, model.dim))
    rho, cs, cc = controlled_rk4(model, K_half, grid, state.rho0, running=Xs, R=R,
                                 state=state, keep_nodes=False)
    term = np.einsum("...ij,ji->...", rho, as_operator(M, model.dim))
    w = state.weight(grid.T)
    return w * cs, w * cc, w * term


def eval_cost_controlled(model, gains, X, M, state=None, grid=None, R=None):
    """``j_tilde = int <U xi, X*X U xi> + <u xi, R u xi> dt + <U_T xi, M U_T xi>``
    for the feedback ``u_t = K(t) U_t``, through the controlled sandwich flow.

    Non-vacuum states use the coherent-field terms and are flagged
    experimental. For optimal gains the report carries
    ``min_value_prediction = <xi0, Pi(0) xi0>`` (times the state weight).
    """
    d = model.dim
    if state is None:
        state = ExpVectorState.vacuum(np.eye(d)[0])
    if isinstance(gains, GainSchedule):
        grid = gains.grid if grid is None else grid
        if grid.T != gains.grid.T:
            raise DimensionError("gain schedule and grid have different horizons")
        K_half = gains.half_values(grid)
    else:
        if grid is None:
            raise ValueError("grid required for a constant gain")
        K = np.atleast_2d(np.asarray(gains, dtype=complex))
        K_half = np.broadcast_to(K, (2 * grid.steps + 1,) + K.shape)
    cs, cc, term = _controlled_costs(model, K_half, X, M, state, grid, R)
    scale = abs(cs) + abs(cc) + abs(term)
    rep = CostReport(breakdown={"running_state": _real(cs, "state cost", scale),
                                "running_control": _real(cc, "control cost", scale),
                                "terminal": _real(term, "terminal cost", scale)})
    rep.j_tilde = rep.breakdown["running_state"] + rep.breakdown["running_control"] + rep.breakdown["terminal"]
    rep.meta["experimental"] = not state.is_vacuum
    rep.meta["normalized_field"] = state.normalized
    rep.meta["state_weight"] = state.weight(grid.T)
    if isinstance(gains, GainSchedule) and gains.provenance == "optimal" and gains.source is not None:
        P0 = gains.source.Pi[0]
        v = state.weight(grid.T) * np.vdot(state.xi0, P0 @ state.xi0)
        rep.min_value_prediction = _real(v, "min value")
    return rep


# --------------------------------------------------------------------------
# equality of the three flow costs
# --------------------------------------------------------------------------

@dataclass
class Lemma1Report:
    j_hat: float
    j: float
    j_tilde: float
    max_deviation: float

    def to_dict(self):
        return {"j_hat": self.j_hat, "j": self.j, "j_tilde": self.j_tilde,
                "max_deviation": self.max_deviation}


def lemma1_check(model, X, state, grid):
    """Evaluate ``j_hat``, ``j`` and ``j_tilde`` for ``u = -L*L U / 2`` and
    ``M = L*L / 2``.

    ``j_tilde`` runs on the controlled form with ``F = -iH``, ``Phi = L``,
    ``Psi = -L*``, which together with the feedback reproduces the HP flow.
    """
    if not model.is_unitary_form():
        raise ValueError("needs a model in unitary HP form")
    X = as_operator(X, model.dim)
    if not certify_hermitian(X).hermitian:
        raise ValueError("X must be self-adjoint")
    LsL = adjoint(model.L) @ model.L
    K = -0.5 * LsL
    M = 0.5 * LsL
    j_hat, _ = eval_cost_flow(model, X, state, grid)
    j, _ = eval_cost_definition(model, X, K, M, state, grid)
    ctrl = HPModel.controlled(-1j * model.H, model.L, Psi=-adjoint(model.L), T=model.T)
    j_tilde = eval_cost_controlled(ctrl, K, X, M, state, grid).j_tilde
    vals = (j_hat, j, j_tilde)
    dev = max(abs(a - b) for a in vals for b in vals)
    return Lemma1Report(j_hat, j, j_tilde, dev)


def convergence_order(dev_coarse, dev_fine, factor=2.0, floor=1e-13):
    """Observed order ``log(dev_coarse / dev_fine) / log(factor)``; ``inf``
    when both deviations sit at the rounding floor."""
    if dev_coarse <= floor and dev_fine <= floor:
        return math.inf
    if dev_fine <= 0:
        return math.inf
    return math.log(dev_coarse / dev_fine) / math.log(factor)


# --------------------------------------------------------------------------
# optimality probe
# --------------------------------------------------------------------------

@dataclass
class ProbeReport:
    j_opt: float
    min_value_prediction: float
    value_gap: float
    epsilons: tuple
    gaps: np.ndarray            # (trials, len(epsilons))
    slopes: np.ndarray          # per-trial log-log slope
    gap_slope: float            # slope of the trial-averaged gaps
    rows: list

    @property
    def min_gap(self):
        return float(self.gaps.min())

    def cost_report(self):
        return CostReport(j_tilde=self.j_opt, min_value_prediction=self.min_value_prediction,
                          gap_slope=self.gap_slope)


PROBE_HEADER = ("trial", "epsilon", "gap")


def perturbation_schedule(rng, grid, dim, n_knots=9):
    """Random smooth gain perturbation on the half-node grid.

    Knot values are i.i.d. standard complex gaussian, joined by a cubic
    spline and scaled so that ``max_t ||Delta(t)||_F = 1``.
    """
    knots = np.linspace(0.0, grid.T, n_knots)
    vals = (rng.standard_normal((n_knots, dim, dim))
            + 1j * rng.standard_normal((n_knots, dim, dim))) / math.sqrt(2.0)
    D = scipy.interpolate.CubicSpline(knots, vals, axis=0)(grid.half_times)
    return D / np.linalg.norm(D, axis=(1, 2)).max()


def optimality_probe(model, X, M, state, grid, epsilons=(1e-1, 1e-2), trials=100, seed=0,
                     chunk=None, n_knots=9):
    """Perturb the optimal gain ``-Pi`` and measure the cost increase.

    Trial ``i`` draws its perturbation from ``default_rng([seed, i])`` so
    results do not depend on batching. Returns gaps
    ``j_tilde(K + eps Delta) - j_tilde(K)``, their log-log slopes and
    ``|j_tilde(K) - <xi0, Pi(0) xi0>|``.
    """
    if not state.is_vacuum:
        raise ValueError("the probe is defined for vacuum states")
    d = model.dim
    cost = CostSpec.flow(X, M)
    traj = solve_riccati_ode(model, cost, grid)
    gains = feedback_gain(traj, cost, model)
    K_half = gains.half_values(grid)
    cs, cc, tm = _controlled_costs(model, K_half, X, M, state, grid)
    j_opt = float((cs + cc + tm).real)
    pred = float((state.weight(grid.T) * np.vdot(state.xi0, traj.Pi[0] @ state.xi0)).real)
    eps = tuple(float(e) for e in epsilons)
    if chunk is None:
        chunk = max(1, int(4e7 // ((2 * grid.steps + 1) * d * d * 16 * len(eps))))
    gaps = np.empty((trials, len(eps)))
    for start in range(0, trials, chunk):
        idx = range(start, min(trials, start + chunk))
        deltas = [perturbation_schedule(np.random.default_rng([seed, i]), grid, d, n_knots)
                  for i in idx]
        batch = np.stack([K_half + e * D for D in deltas for e in eps], axis=1)
        cs, cc, tm = _controlled_costs(model, batch, X, M, state, grid)
        J = (cs + cc + tm).real.reshape(len(idx), len(eps))
        gaps[start:start + len(idx)] = J - j_opt
    logs = np.log(np.asarray(eps))
    with np.errstate(invalid="ignore", divide="ignore"):
        lg = np.log(np.where(gaps > 0, gaps, np.nan))
        slopes = np.array([np.polyfit(logs, row, 1)[0] if np.all(np.isfinite(row)) else np.nan
                           for row in lg]) if len(eps) > 1 else np.full(trials, np.nan)
        mean = gaps.mean(axis=0)
        gap_slope = (float(np.polyfit(logs, np.log(mean), 1)[0])
                     if len(eps) > 1 and np.all(mean > 0) else math.nan)
    rows = [(i, e, float(gaps[i, j])) for i in range(trials) for j, e in enumerate(eps)]
    return ProbeReport(j_opt, pred, abs(j_opt - pred), eps, gaps, slopes, gap_slope, rows)


# --------------------------------------------------------------------------
# noise-free regulator: feedback law against a discretized quadratic program
# --------------------------------------------------------------------------

@dataclass
class LQRComparison:
    feedback_cost: float
    oracle_cost: float
    zero_control_cost: float
    relative_gap: float
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"feedback_cost": self.feedback_cost, "oracle_cost": self.oracle_cost,
                "zero_control_cost": self.zero_control_cost, "relative_gap": self.relative_gap}


def _lqr_running(x, v, Q, R, m_row, eta_row):
    return (np.vdot(x, Q @ x) + np.vdot(v, R @ v)
            + 2.0 * (m_row @ x).real.sum() + 2.0 * (eta_row @ v).real.sum())


def lqr_feedback_cost(F, G, ell, cost, x0, grid, traj=None):
    """Cost of ``v = -R^-1 (G* (Pi x + r) + eta*)`` along ``x' = F x + G v + ell``.

    Linear weights enter as twice their real part. RK4 with the running
    cost as an extra component; ``Pi`` and ``r`` between nodes from their
    Hermite interpolants.
    """
    d = F.shape[0]
    model = HPModel.controlled(F, np.zeros((d, d)), G=G, T=grid.T)
    if traj is None:
        traj = solve_riccati_ode(model, cost, grid, Phi=None)
        solve_auxiliary_ode(model, cost, traj, ell.reshape(d, 1))
    Q, R, Rinv = cost.Q, cost.R, cost.Rinv
    m_row, eta_row = cost.m, cost.eta
    Gs = G.conj().T
    etas = eta_row.conj().T
    ell = ell.reshape(d)
    Pi_half = traj.at(grid.half_times)
    r_half = traj.r_at(grid.half_times)[:, :, 0]

    def control(x, i):
        return -Rinv @ (Gs @ (Pi_half[i] @ x + r_half[i]) + etas[:, 0])

    def rhs(x, i):
        v = control(x, i)
        return F @ x + G @ v + ell, _lqr_running(x, v, Q, R, m_row, eta_row)

    x = np.asarray(x0, dtype=complex).copy()
    h = grid.dt
    J = 0.0
    for k in range(grid.steps):
        k1, c1 = rhs(x, 2 * k)
        k2, c2 = rhs(x + 0.5 * h * k1, 2 * k + 1)
        k3, c3 = rhs(x + 0.5 * h * k2, 2 * k + 1)
        k4, c4 = rhs(x + h * k3, 2 * k + 2)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        J += (h / 6.0) * (c1 + 2 * c2 + 2 * c3 + c4)
    J += np.vdot(x, cost.QT @ x) + 2.0 * (cost.mT @ x).real.sum()
    return _real(J, "feedback cost"), traj


def _zoh(F, G, ell, h):
    """Exact one-step map ``x -> Ad x + Bd v + cd`` for constant ``v``."""
    d, k = G.shape
    blk = np.zeros((d + k + 1, d + k + 1), dtype=complex)
    blk[:d, :d] = F
    blk[:d, d:d + k] = G
    blk[:d, -1] = ell
    E = scipy.linalg.expm(h * blk)
    return E[:d, :d], E[:d, d:d + k], E[:d, -1]


def lqr_qp_oracle(F, G, ell, cost, x0, grid):
    """Exact minimizer of the time-discretized cost.

    Controls are piecewise constant, the state map is exact on each step,
    the state part of the running cost uses the trapezoid rule and the
    control part is exact. The problem is quadratic in the stacked
    ``(x_0, ..., x_N, v_0, ..., v_{N-1})`` with linear equality constraints;
    one sparse KKT solve gives the minimizer.
    """
    d, k = G.shape
    N, h = grid.steps, grid.dt
    Ad, Bd, cd = _zoh(F, G, ell, h)
    nx, nu = (N + 1) * d, N * k
    w = np.full(N + 1, h)
    w[0] = w[-1] = 0.5 * h
    Q, R = cost.Q, cost.R
    I_N1 = scipy.sparse.identity(N + 1, format="csr")
    Hx = scipy.sparse.kron(scipy.sparse.diags(w), Q) + scipy.sparse.kron(
        scipy.sparse.csr_matrix(([1.0], ([N], [N])), shape=(N + 1, N + 1)), cost.QT)
    Hu = scipy.sparse.kron(scipy.sparse.identity(N), h * R)
    H = scipy.sparse.block_diag([Hx, Hu], format="csr")
    m_col = cost.m.conj().T[:, 0]           # gradient of 2 Re(m x) is m*
    eta_col = cost.eta.conj().T[:, 0]
    b = np.concatenate([np.kron(w, m_col) + np.concatenate([np.zeros(N * d), cost.mT.conj().T[:, 0]]),
                        np.kron(np.full(N, h), eta_col)])
    # constraints: x_0 = x0; x_{k+1} - Ad x_k - Bd v_k = cd
    rows = []
    rows.append(scipy.sparse.hstack([scipy.sparse.eye(d, nx), scipy.sparse.csr_matrix((d, nu))]))
    shift = scipy.sparse.eye(N, N + 1, k=1)
    stay = scipy.sparse.eye(N, N + 1)
    Cx = scipy.sparse.kron(shift, np.eye(d)) - scipy.sparse.kron(stay, Ad)
    Cu = -scipy.sparse.kron(scipy.sparse.identity(N), Bd)
    rows.append(scipy.sparse.hstack([Cx, Cu]))
    C = scipy.sparse.vstack(rows, format="csr")
    e = np.concatenate([np.asarray(x0, dtype=complex), np.tile(cd, N)])
    KKT = scipy.sparse.bmat([[2.0 * H, C.conj().T], [C, None]], format="csc")
    rhs = np.concatenate([-2.0 * b, e])
    sol = scipy.sparse.linalg.spsolve(KKT, rhs)
    z = sol[:nx + nu]
    J = np.vdot(z, H @ z) + 2.0 * np.vdot(b, z).real
    xs = z[:nx].reshape(N + 1, d)
    vs = z[nx:].reshape(N, k)
    return _real(J, "oracle cost"), xs, vs


def lqr_open_loop_cost(F, G, ell, cost, x0, grid, v=None):
    """Cost of a given (default zero) constant control, by RK4."""
    d, k = G.shape
    v = np.zeros(k, dtype=complex) if v is None else np.asarray(v, dtype=complex)
    x = np.asarray(x0, dtype=complex).copy()
    h = grid.dt
    rhs = lambda x: (F @ x + G @ v + ell, _lqr_running(x, v, cost.Q, cost.R, cost.m, cost.eta))
    J = 0.0
    for _ in range(grid.steps):
        k1, c1 = rhs(x)
        k2, c2 = rhs(x + 0.5 * h * k1)
        k3, c3 = rhs(x + 0.5 * h * k2)
        k4, c4 = rhs(x + h * k3)
        x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        J += (h / 6.0) * (c1 + 2 * c2 + 2 * c3 + c4)
    J += np.vdot(x, cost.QT @ x) + 2.0 * (cost.mT @ x).real.sum()
    return _real(J, "open-loop cost")


def classical_lqr_check(F, G, ell, cost, x0, grid):
    """Compare the feedback law's cost with the discretized-QP minimum.

    ``cost`` uses row-vector affine weights (``p = 1``): ``m``, ``mT`` of
    shape ``(1, d)`` and ``eta`` of shape ``(1, k)``.
    """
    F = np.atleast_2d(np.asarray(F, dtype=complex))
    G = np.atleast_2d(np.asarray(G, dtype=complex))
    d = F.shape[0]
    ell = np.zeros(d, dtype=complex) if ell is None else np.asarray(ell, dtype=complex).reshape(d)
    J_fb, _ = lqr_feedback_cost(F, G, ell, cost, x0, grid)
    J_qp, _, _ = lqr_qp_oracle(F, G, ell, cost, x0, grid)
    J0 = lqr_open_loop_cost(F, G, ell, cost, x0, grid)
    rel = abs(J_fb - J_qp) / max(abs(J_qp), abs(J_fb), 1e-300) if (J_fb or J_qp) else 0.0
    return LQRComparison(J_fb, J_qp, J0, rel, {"steps": grid.steps})
