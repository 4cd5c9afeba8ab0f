"""Mechanical derivations with the Ito engine.

* :func:`derive_flow_generator` -- the stochastic differential of
  ``U* X U`` for the Hudson-Parthasarathy unitary.
* :func:`verify_theorem1_cancellation` -- the cross term of the quadratic
  cost vanishes once the feedback law and the Riccati relations are used.
* :func:`expand_proposition1` -- coefficient equations for the drift and
  noise parts of the Riccati process, plus transcriptions of the printed
  forms so the two can be diffed.
"""

from dataclasses import dataclass, field

import sympy

from .calculus import (adjoint_expr, collect, extract_sandwich, ito_product, mul, rho,
                       substitute)
from .expr import NCExpr, Sym
from .table import boson_fock_table

I = sympy.I
HALF = sympy.Rational(1, 2)


# --------------------------------------------------------------------------
# flow generator
# --------------------------------------------------------------------------

H_SYM = Sym("H", hermitian=True, adapted=False)
L_SYM = Sym("L", adapted=False)
X_SYM = Sym("X", adapted=False)
U_SYM = Sym("U", adapted=True)


@dataclass
class FlowGenerator:
    """Coefficients of ``d j_t(X)`` with ``j_t`` stripped off.

    ``residuals`` maps each label to ``derived - target``; all zero means
    the derivation reproduced the closed forms exactly.
    """
    theta0: NCExpr
    coef_dA: NCExpr
    coef_dAdag: NCExpr
    targets: dict
    residuals: dict
    unmatched: NCExpr = field(default_factory=NCExpr)

    @property
    def ok(self):
        return self.unmatched.is_zero() and all(r.is_zero() for r in self.residuals.values())


def hp_differential(H, L, table, U=U_SYM):
    """``dU = -((iH + L*L/2) dt + L* dA - L dA^dagger) U`` as an expression."""
    dA, dAd = table.noise
    t = table.time
    Ls = adjoint_expr(L)
    Ue = NCExpr.symbol(U)
    drift = H.scale(I) + mul(Ls, L).scale(HALF)
    return (mul(NCExpr.differential(t), drift, Ue, table=table).scale(-1)
            + mul(NCExpr.differential(dA), Ls, Ue, table=table).scale(-1)
            + mul(NCExpr.differential(dAd), L, Ue, table=table))


def flow_targets(H, L, X):
    """Closed forms of the three coefficients of ``d j_t(X)``."""
    Ls = adjoint_expr(L)
    LsL = mul(Ls, L)
    theta0 = ((mul(H, X) - mul(X, H)).scale(I)
              - (mul(LsL, X) + mul(X, LsL) - mul(Ls, X, L).scale(2)).scale(HALF))
    return {"dt": theta0, "dA": mul(Ls, X) - mul(X, Ls), "dAdag": mul(X, L) - mul(L, X)}


def derive_flow_generator(table=None, H=None, L=None, X=None):
    """Derive ``d(U* X U)`` from the HP equation and its adjoint.

    ``H``, ``L``, ``X`` default to the symbols ``H`` (Hermitian), ``L`` and
    ``X``; pass any differential-free expressions (e.g. ``NCExpr.one()`` for
    the identity or ``NCExpr.zero()``) to specialize.
    """
    table = table or boson_fock_table()
    if len(table.noise) != 2:
        raise ValueError("flow generator needs a two-label (annihilation, creation) table")
    H = NCExpr.symbol(H_SYM) if H is None else H
    L = NCExpr.symbol(L_SYM) if L is None else L
    X = NCExpr.symbol(X_SYM) if X is None else X
    Ue = NCExpr.symbol(U_SYM)
    Us = adjoint_expr(Ue)
    dU = hp_differential(H, L, table)
    dUs = adjoint_expr(dU, table)

    UsX = mul(Us, X)
    dUsX = ito_product(Us, dUs, X, NCExpr.zero(), table)
    d_flow = ito_product(UsX, dUsX, Ue, dU, table)

    inner, unmatched = extract_sandwich(d_flow, U_SYM.adjoint(), U_SYM)
    groups = collect(inner)
    # collect() keys by differential; relabel to fixed names
    t, dA, dAd = table.time, *table.noise
    derived = {"dt": groups.get(t, NCExpr()), "dA": groups.get(dA, NCExpr()),
               "dAdag": groups.get(dAd, NCExpr())}
    targets = flow_targets(H, L, X)
    residuals = {k: derived[k] - targets[k] for k in derived}
    return FlowGenerator(derived["dt"], derived["dA"], derived["dAdag"],
                         targets, residuals, unmatched)


# --------------------------------------------------------------------------
# symbols of the controlled evolution
# --------------------------------------------------------------------------

class ControlSymbols:
    """Operator symbols of the controlled QSDE, the cost and the Riccati pair."""

    def __init__(self, table, w=True, z=True, inverses=True):
        S = Sym
        self.table = table
        self.F = S("F")
        self.G = S("G")
        self.R = S("R", hermitian=True, inverse="Rinv" if inverses else None)
        self.Rinv = S("Rinv", hermitian=True, inverse="R" if inverses else None)
        self.Q = S("Q", hermitian=True)
        self.Pi = S("Pi", hermitian=True)
        self.r = S("r")
        self.m = S("m")
        self.eta = S("eta")
        self.Ld = S("Ld")          # additive drift of the state equation
        self.w_sym = S("w")
        self.z_sym = S("z")
        self.Xh = S("Xh")
        self.Y = S("Y")
        self.mu = S("mu")
        self.A = S("A")
        self.C = S("C")
        self.B = {a: S(f"B_{a}") for a in table.noise}
        self.D = {a: S(f"D_{a}") for a in table.noise}
        self.Fa = {a: S(f"F_{a}") for a in table.noise}
        # w = 0, z = id is the linear-regulator case
        self.w = NCExpr.symbol(self.w_sym) if w else NCExpr.zero()
        self.z = NCExpr.symbol(self.z_sym) if z else NCExpr.one()

    def e(self, *syms):
        return NCExpr.symbol(*syms)

    def adj(self, x):
        return adjoint_expr(x, self.table)

    def dt(self, x=None):
        d = NCExpr.differential(self.table.time)
        return d if x is None else mul(d, x, table=self.table)

    def noise_sum(self, right):
        """``sum_a dM_a F_a right``."""
        out = NCExpr.zero()
        for a in self.table.noise:
            out = out + mul(NCExpr.differential(a), self.e(self.Fa[a]), right, table=self.table)
        return out

    def S_gain(self):
        """``G R^-1 G*``."""
        return self.e(self.G, self.Rinv, self.G.adjoint())

    def dPi(self):
        out = self.dt(self.e(self.A))
        for a in self.table.noise:
            out = out + mul(NCExpr.differential(a), self.e(self.B[a]), table=self.table)
        return out

    def dr(self):
        out = self.dt(self.e(self.C))
        for a in self.table.noise:
            out = out + mul(NCExpr.differential(a), self.e(self.D[a]), table=self.table)
        return out


def riccati_expression(sy, sign=1, dPi=None):
    """Left side of the stochastic Riccati equation for the chosen sign.

    ``sign=+1`` pairs with the forward-driven evolution and terminal cost,
    ``-1`` with the time-reversed one.
    """
    t = sy.table
    m = lambda *xs: mul(*xs, table=t)
    Pi = sy.e(sy.Pi)
    F = sy.e(sy.F)
    dPi = sy.dPi() if dPi is None else dPi
    N = sy.noise_sum(sy.w)
    Ns = sy.adj(N)
    one = NCExpr.one()
    drift = (m(sy.adj(F), Pi) + m(Pi, F) + sy.e(sy.Q) - m(Pi, sy.S_gain(), Pi))
    out = sy.dt(drift) + m(Ns, Pi) + m(Pi, N) + m(Ns, Pi, N).scale(sign)
    out = out + m(Ns + one.scale(sign), dPi, N + one.scale(sign)).scale(sign)
    return out


def auxiliary_expression(sy, sign=1, dPi=None, dr=None):
    """Left side of the equation for the affine process ``r``."""
    t = sy.table
    m = lambda *xs: mul(*xs, table=t)
    Pi, r = sy.e(sy.Pi), sy.e(sy.r)
    F = sy.e(sy.F)
    dPi = sy.dPi() if dPi is None else dPi
    dr = sy.dr() if dr is None else dr
    N = sy.noise_sum(sy.w)
    Ns = sy.adj(N)
    Nz = sy.noise_sum(sy.z)
    S = sy.S_gain()
    drift = (m(sy.adj(F), r) - m(Pi, S, r) + m(Pi, sy.e(sy.Ld)) + sy.adj(sy.e(sy.m))
             - m(Pi, sy.e(sy.G, sy.Rinv), sy.adj(sy.e(sy.eta))))
    out = sy.dt(drift) + m(Ns, r) + m(Pi, Nz) + m(dPi, Nz)
    out = out + (m(Ns, Pi, Nz) + m(Ns, dPi, Nz)).scale(sign)
    out = out + m(Ns + NCExpr.one().scale(sign), dr)
    return out


# --------------------------------------------------------------------------
# Theorem-1 cross-term cancellation
# --------------------------------------------------------------------------

NEGATIVE_CONTROLS = ("drop_state_weight", "keep_inverses")


def verify_theorem1_cancellation(table, general_wz=False, negative_control=None):
    """Residual of the cost cross term after the optimal substitution.

    Builds the integrand of the cross term ``K`` for the split
    ``X = Xh + Y`` (``Y`` driven by the feedback ``Lambda Y + lambda``,
    ``Xh`` by the deviation control ``mu``), differentiates ``Xh* p`` with
    ``p = r + Pi Y`` by the Ito product rule, and subtracts
    ``Xh* (Riccati) Y + Xh* (auxiliary)``. With
    ``Lambda = -R^-1 G* Pi`` and ``lambda = -R^-1 (G* r + eta*)`` the
    result must vanish identically, i.e. ``K`` is the integral of
    expressions that are zero whenever the two Riccati relations hold.

    ``general_wz=False`` is the linear-regulator case ``w = 0, z = id``.
    ``negative_control`` in :data:`NEGATIVE_CONTROLS` deliberately breaks
    the argument and must yield a nonzero residual.
    """
    if negative_control not in (None,) + NEGATIVE_CONTROLS:
        raise ValueError(f"unknown negative control {negative_control!r}")
    sy = ControlSymbols(table, w=general_wz, z=general_wz,
                        inverses=negative_control != "keep_inverses")
    t = table
    m = lambda *xs: mul(*xs, table=t)
    e, adj = sy.e, sy.adj

    Pi, r, G, F = e(sy.Pi), e(sy.r), e(sy.G), e(sy.F)
    Rinv, R = e(sy.Rinv), e(sy.R)
    Xh, Y, mu = e(sy.Xh), e(sy.Y), e(sy.mu)
    Gs = adj(G)
    eta_s = adj(e(sy.eta))
    Lam = m(Rinv, Gs, Pi).scale(-1)
    lam = m(Rinv, m(Gs, r) + eta_s).scale(-1)

    dXh = sy.dt(m(F, Xh) + m(G, Lam, Xh) + m(G, mu)) + sy.noise_sum(m(sy.w, Xh))
    dY = (sy.dt(m(F, Y) + m(G, Lam, Y) + m(G, lam) + e(sy.Ld))
          + sy.noise_sum(m(sy.w, Y) + sy.z))
    dPi, dr = sy.dPi(), sy.dr()

    p = r + m(Pi, Y)
    dp = dr + ito_product(Pi, dPi, Y, dY, t)
    Xhs, dXhs = adj(Xh), adj(dXh)
    d_Xhp = ito_product(Xhs, dXhs, p, dp, t)

    ctrl = m(Lam, Xh) + mu
    ctrl_s = adj(ctrl)
    Qw = NCExpr.zero() if negative_control == "drop_state_weight" else e(sy.Q)
    running = (m(Xhs, Qw, Y) + m(ctrl_s, R, m(Lam, Y) + lam)
               + m(Xhs, adj(e(sy.m))) + m(ctrl_s, eta_s))
    integrand = sy.dt(running) + d_Xhp

    target = m(Xhs, riccati_expression(sy, 1, dPi), Y) + m(Xhs, auxiliary_expression(sy, 1, dPi, dr))
    residual = integrand - target
    return residual


# --------------------------------------------------------------------------
# drift / noise decomposition of the Riccati process
# --------------------------------------------------------------------------

def expand_proposition1(table, sign=1, process="Pi", general_wz=True):
    """Coefficient equations of the Riccati (``process="Pi"``) or auxiliary
    (``"r"``) equation after substituting ``dPi = A dt + sum_a B_a dM_a``
    (and ``dr = C dt + sum_a D_a dM_a``).

    Returns ``{label: expression}``; each expression must vanish, by the
    linear independence of the differentials.
    """
    sy = ControlSymbols(table, w=general_wz, z=general_wz)
    if process == "Pi":
        expr = riccati_expression(sy, sign)
    elif process == "r":
        expr = auxiliary_expression(sy, sign)
    else:
        raise ValueError("process must be 'Pi' or 'r'")
    groups = collect(expr)
    groups.pop(None, None)
    return {a: groups.get(a, NCExpr()) for a in table.labels}


def _wF_star(sy, a):
    """``w* F*_{j(a)}`` where ``j(a*) = a``."""
    ja = sy.table.star(a)
    return mul(sy.adj(sy.w), NCExpr.symbol(sy.Fa[ja].adjoint()), table=sy.table)


def printed_proposition1(table, sign=1, process="Pi", general_wz=True, corrected=False):
    """Literal transcription of the printed coefficient equations.

    For ``process="r"`` the printed drift equation ends in a structure
    constant sum with no operator attached; that trailing term is
    transcribed as absent. ``corrected=True`` applies the three repairs
    that make the transcription agree with the mechanical expansion: the
    triple-product constant in the ``Pi`` noise equation is
    ``c_J(eps, gamma)``, the truncated drift term of the ``r`` equation is
    restored, and the ``Pi`` term of the ``r`` noise equation carries the
    sign.
    """
    sy = ControlSymbols(table, w=general_wz, z=general_wz)
    t = table
    s = sign
    m = lambda *xs: mul(*xs, table=t)
    e = sy.e
    w, z = sy.w, sy.z
    Pi = e(sy.Pi)
    F = e(sy.F)
    rh = lambda x, a: rho(x, a, t)
    noise = t.noise
    out = {}
    if process == "Pi":
        dt_eq = (m(sy.adj(F), Pi) + m(Pi, F) + e(sy.Q) - m(Pi, sy.S_gain(), Pi)
                 + e(sy.A).scale(s))
        for a in noise:
            for b in noise:
                c0 = t.c0(a, b)
                W = rh(_wF_star(sy, a), a)
                X1 = m(rh(m(W, Pi), b), e(sy.Fa[b]), w)
                X2 = m(rh(W, b), e(sy.B[b]))
                X3 = m(rh(e(sy.B[a]), b), e(sy.Fa[b]), w)
                X4 = NCExpr.zero()
                for g in noise:
                    for eps in noise:
                        X4 = X4 + m(rh(m(rh(W, b), e(sy.B[b])), g), e(sy.Fa[g]), w).scale(
                            t.c(eps, a, b) * t.c0(eps, g))
                dt_eq = dt_eq + (X1.scale(c0) + X2.scale(s * c0) + X3.scale(s * c0) + X4).scale(s)
        out[t.time] = dt_eq
        for J in noise:
            eq = (m(rh(_wF_star(sy, J), J), Pi) + m(rh(Pi, J), e(sy.Fa[J]), w)
                  + e(sy.B[J]).scale(s))
            for a in noise:
                for b in noise:
                    cJ = t.c(J, a, b)
                    W = rh(_wF_star(sy, a), a)
                    eq = eq + m(rh(e(sy.B[a]), b), e(sy.Fa[b]), w).scale(cJ)
                    eq = eq + m(rh(W, b), e(sy.B[b])).scale(cJ)
                    eq = eq + m(rh(m(W, Pi), b), e(sy.Fa[b]), w).scale(s * cJ)
                    for g in noise:
                        for eps in noise:
                            # printed index: c_J(a, gamma)
                            k = t.c(eps, a, b) * t.c(J, eps if corrected else a, g)
                            eq = eq + m(rh(m(rh(W, b), e(sy.B[b])), g), e(sy.Fa[g]), w).scale(s * k)
            out[J] = eq
        return out
    if process != "r":
        raise ValueError("process must be 'Pi' or 'r'")
    r = e(sy.r)
    dt_eq = (m(sy.adj(F), r) - m(Pi, sy.S_gain(), r) + m(Pi, e(sy.Ld)) + sy.adj(e(sy.m))
             - m(Pi, e(sy.G, sy.Rinv), sy.adj(e(sy.eta))) + e(sy.C).scale(s))
    for a in noise:
        for b in noise:
            c0 = t.c0(a, b)
            W = rh(_wF_star(sy, a), a)
            dt_eq = dt_eq + m(rh(e(sy.B[a]), b), e(sy.Fa[b]), z).scale(c0)
            dt_eq = dt_eq + m(rh(m(W, Pi), b), e(sy.Fa[b]), z).scale(s * c0)
            dt_eq = dt_eq + m(rh(W, b), e(sy.D[b])).scale(c0)
            if corrected:
                for g in noise:
                    for eps in noise:
                        k = t.c(eps, a, b) * t.c0(eps, g)
                        dt_eq = dt_eq + m(rh(rh(W, b), g), rh(e(sy.B[b]), g),
                                          e(sy.Fa[g]), z).scale(s * k)
    out[t.time] = dt_eq
    for J in noise:
        eq = (m(rh(_wF_star(sy, J), J), r) + m(rh(Pi, J), e(sy.Fa[J]), z)
              + e(sy.D[J]).scale(s))
        for a in noise:
            for b in noise:
                cJ = t.c(J, a, b)
                W = rh(_wF_star(sy, a), a)
                eq = eq + (m(rh(e(sy.B[a]), b), e(sy.Fa[b]), z)
                           + m(rh(m(W, Pi), b), e(sy.Fa[b]), z).scale(s if corrected else 1)
                           + m(rh(W, b), e(sy.D[b]))).scale(cJ)
                for g in noise:
                    for eps in noise:
                        k = t.c(eps, a, b) * t.c(J, eps, g)
                        eq = eq + m(rh(rh(W, b), g), rh(e(sy.B[b]), g), e(sy.Fa[g]), z).scale(s * k)
        out[J] = eq
    return out


def compare_proposition1(table, sign=1, process="Pi", general_wz=True, corrected=False):
    """``derived - printed`` for every coefficient equation (zero = agreement)."""
    derived = expand_proposition1(table, sign, process, general_wz)
    printed = printed_proposition1(table, sign, process, general_wz, corrected)
    return {a: derived.get(a, NCExpr()) - printed.get(a, NCExpr()) for a in table.labels}


# --------------------------------------------------------------------------
# Levy-pair reduction
# --------------------------------------------------------------------------

@dataclass
class LevyReduction:
    """Solved drift ``A`` and noise coefficients ``B`` of ``dPi``."""
    A: NCExpr
    B: dict
    printed_A: NCExpr
    printed_B: dict

    @property
    def diff(self):
        d = {"dt": self.A - self.printed_A}
        for k in self.B:
            d[k] = self.B[k] - self.printed_B[k]
        return d

    @property
    def agrees(self):
        return all(v.is_zero() for v in self.diff.values())


def levy_pair_reduction(table, sign=1, general_wz=True):
    """Solve the coefficient equations of a Levy-pair table for ``A`` and ``B_a``.

    For a Levy pair every product of noise differentials is a multiple of
    ``dt``, so each noise equation is ``P_J + sign * B_J = 0`` and the drift
    equation is linear in ``A`` once the ``B`` are substituted. The solved
    form is returned next to a transcription of the printed reduced Riccati
    equation.
    """
    if not table.is_levy():
        raise ValueError("needs a Levy-pair table")
    sy = ControlSymbols(table, w=general_wz, z=general_wz)
    groups = expand_proposition1(table, sign, "Pi", general_wz)
    zero_B = {sy.B[a]: NCExpr.zero() for a in table.noise}
    B_sol = {}
    for J in table.noise:
        g = groups[J]
        P = substitute(g, zero_B, table)
        if not (g - P - NCExpr.symbol(sy.B[J]).scale(sign)).is_zero():
            raise ValueError(f"noise equation for {J} is not of the form P + sign*B")
        B_sol[J] = P.scale(-sign)
    g0 = substitute(groups[table.time], {sy.B[a]: B_sol[a] for a in B_sol}, table)
    P0 = substitute(g0, {sy.A: NCExpr.zero()}, table)
    if not (g0 - P0 - NCExpr.symbol(sy.A).scale(sign)).is_zero():
        raise ValueError("drift equation is not of the form P + sign*A")
    A_sol = P0.scale(-sign)
    pA, pB = printed_levy_riccati(table, sign, general_wz)
    return LevyReduction(A_sol, B_sol, pA, pB)


def printed_levy_riccati(table, sign=1, general_wz=True):
    """Transcription of the printed drift and noise coefficients of ``dPi``."""
    sy = ControlSymbols(table, w=general_wz, z=general_wz)
    t = table
    m = lambda *xs: mul(*xs, table=t)
    e = sy.e
    w = sy.w
    a1, a2 = t.noise
    sig = t.sigma
    s11, s12, s21, s22 = sig[0][0], sig[0][1], sig[1][0], sig[1][1]
    r1 = lambda x: rho(x, a1, t)
    r2 = lambda x: rho(x, a2, t)
    F, Pi = e(sy.F), e(sy.Pi)
    F1w, F2w = m(e(sy.Fa[a1]), w), m(e(sy.Fa[a2]), w)
    wF1s, wF2s = sy.adj(F1w), sy.adj(F2w)
    mp = -sign   # the printed "minus-or-plus"
    left = (F.scale(mp)
            + m(r2(F2w), r1(r2(F1w))).scale(s11)
            + m(r2(F2w), F2w).scale(s12)
            + m(r1(F1w), r2(r1(F2w))).scale(s22)
            + m(r1(F1w), F1w).scale(s21))
    right = (m(Pi, F).scale(mp)
             + m(r1(r2(Pi)), r1(F2w), F1w).scale(s11)
             + m(Pi, r2(F2w), F2w).scale(s12)
             + m(r2(r1(Pi)), r2(F1w), F2w).scale(s22)
             + m(Pi, r1(F1w), F1w).scale(s21))
    quad = (m(r1(r2(wF1s)), r1(Pi), F1w).scale(s11)
            + m(wF1s, r2(Pi), F2w).scale(s12)
            + m(r2(r1(wF2s)), r2(Pi), F2w).scale(s22)
            + m(wF2s, r1(Pi), F1w).scale(s21))
    A = (m(sy.adj(left), Pi) + right + quad + e(sy.Q).scale(mp)
         + m(Pi, sy.S_gain(), Pi).scale(sign))
    B = {a1: (m(r1(wF2s), Pi) + m(r1(Pi), F1w)).scale(mp),
         a2: (m(r2(wF1s), Pi) + m(r2(Pi), F2w)).scale(mp)}
    return A, B
