import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from conftest import SIGMA_MINUS, crandn, rand_hermitian, rand_hp, rand_psd, rand_unit
from qflowctl.control import (GainSchedule, classical_lqr_check, convergence_order,
                              eval_cost_controlled, eval_cost_definition, eval_cost_flow,
                              feedback_gain, lemma1_check, lqr_qp_oracle, optimality_probe,
                              perturbation_schedule, synthesize_L)
from qflowctl.flow import ExpVectorState, HPModel, TimeGrid, collision_oracle
from qflowctl.operators import DimensionError
from qflowctl.riccati import CostSpec, solve_auxiliary_ode, solve_care, solve_riccati_ode

seeds = st.integers(0, 2 ** 32 - 1)
Z1 = np.zeros((1, 1))
VAC1 = ExpVectorState.vacuum([1.0])


def scalar_setup(T=1.0, steps=2000):
    model = HPModel.controlled(Z1, Z1, T=T)
    cost = CostSpec.flow(np.eye(1), Z1)
    grid = TimeGrid(T, steps)
    traj = solve_riccati_ode(model, cost, grid)
    return model, cost, grid, traj


# ---- gains ---------------------------------------------------------------

def test_zero_riccati_gives_zero_gain():
    model = HPModel.controlled(np.zeros((2, 2)), np.zeros((2, 2)))
    cost = CostSpec(np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)))
    traj = solve_riccati_ode(model, cost, TimeGrid(1.0, 20))
    solve_auxiliary_ode(model, cost, traj)
    K = feedback_gain(traj, cost, model)
    assert not K.K.any() and not K.affine.any()


def test_identity_setting_gain_is_minus_pi_exactly():
    model, cost, grid, traj = scalar_setup()
    K = feedback_gain(traj, cost, model)
    assert np.array_equal(K.K, -traj.Pi)
    assert K.provenance == "optimal"


def test_scalar_affine_gain_closed_form():
    g, rw = 2.0, 3.0
    model = HPModel.controlled(np.array([[-0.5]]), Z1, G=[[g]])
    cost = CostSpec(np.eye(1), [[rw]], Z1, m=[[0.3]], eta=[[0.2]], mT=[[0.1]])
    traj = solve_riccati_ode(model, cost, TimeGrid(1.0, 200))
    r = solve_auxiliary_ode(model, cost, traj)
    K = feedback_gain(traj, cost, model)
    x = 0.7
    u = K.K[:, 0, 0] * x + K.affine[:, 0, 0]
    expected = -(g * (traj.Pi[:, 0, 0] * x + r[:, 0, 0]) + 0.2) / rw
    assert np.allclose(u, expected, atol=1e-14)


def test_gain_schedule_checks_length():
    with pytest.raises(DimensionError):
        GainSchedule(TimeGrid(1.0, 10), np.zeros((5, 2, 2)))


def test_gain_schedule_interpolates():
    g = TimeGrid(1.0, 40)
    t = g.times
    Ks = (np.sin(t)[:, None, None] * np.eye(2))
    sched = GainSchedule(g, Ks)
    half = sched.half_values(g)
    assert np.allclose(half[1::2, 0, 0], np.sin(g.half_times[1::2]), atol=1e-7)


# ---- synthesized coupling ------------------------------------------------

def test_synthesize_zero_and_half_identity():
    assert not synthesize_L(np.zeros((2, 2))).L.any()
    s = synthesize_L(0.5 * np.eye(3))
    assert np.allclose(s.L, np.eye(3))
    assert s.pi_residual < 1e-15


def test_synthesize_diagonal_phase():
    P = np.diag([0.3, 1.2, 2.0])
    W = np.diag(np.exp(1j * np.array([0.4, -1.0, 2.5])))
    s = synthesize_L(P, W)
    assert s.normality_residual <= 1e-12
    assert s.pi_residual <= 1e-12


def test_synthesize_rejects_noncommuting():
    P = np.diag([1.0, 2.0])
    W = np.array([[0, 1], [1, 0]], complex)
    with pytest.raises(ValueError, match=r"\[W, Pi\]"):
        synthesize_L(P, W)


# ---- flow cost -----------------------------------------------------------

def test_flow_cost_trivial():
    m = HPModel(np.zeros((2, 2)), np.zeros((2, 2)))
    j, _ = eval_cost_flow(m, np.zeros((2, 2)), ExpVectorState.vacuum([1.0, 0.0]), TimeGrid(1.0, 10))
    assert j == 0


def test_flow_cost_hamiltonian_quadrature():
    rng = np.random.default_rng(0)
    H, X = rand_hermitian(rng, 3), rand_hermitian(rng, 3)
    xi = rand_unit(rng, 3)
    m = HPModel(H, np.zeros((3, 3)))
    g = TimeGrid.default(1.0)
    j, br = eval_cost_flow(m, X, ExpVectorState.vacuum(xi), g)
    w, V = np.linalg.eigh(H)
    c = V.conj().T @ xi
    M = V.conj().T @ X @ X @ V
    # exact integral of sum_jk conj(c_j) c_k M_jk exp(i (w_j - w_k) t)
    dw = w[:, None] - w[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        I = np.where(np.abs(dw) > 1e-14, (np.exp(1j * dw) - 1) / (1j * dw), 1.0)
    exact = np.real(np.sum(np.conj(c)[:, None] * c[None, :] * M * I))
    assert j == pytest.approx(exact, abs=1e-7)
    assert br["running_control"] == 0 and br["terminal"] == 0


def test_flow_cost_against_oracle(qubit_decay):
    m, s, X = qubit_decay
    g = TimeGrid(1.0, 1000)
    j, _ = eval_cost_flow(m, X, s, g)
    LsL = SIGMA_MINUS.conj().T @ SIGMA_MINUS
    col = collision_oracle(m, s, g, [X @ X, LsL @ LsL, LsL]).values.real
    ref = (np.trapezoid(col[:, 0], dx=g.dt) + 0.25 * np.trapezoid(col[:, 1], dx=g.dt)
           + 0.5 * col[-1, 2])
    assert abs(j - ref) < 5 * g.dt
    # exact: p(t) = exp(-t), X^2 = (L*L)^2 = L*L = p
    assert j == pytest.approx(1.25 * (1 - np.exp(-1)) + 0.5 * np.exp(-1), abs=1e-7)


def test_nonhermitian_weight_uses_square_modulus():
    m = HPModel(np.zeros((2, 2)), np.zeros((2, 2)))
    X = np.array([[0, 1], [0, 0]], complex)
    j, _ = eval_cost_flow(m, X, ExpVectorState.vacuum([0.0, 1.0]), TimeGrid(1.0, 10))
    assert j == pytest.approx(1.0)


# ---- controlled cost -----------------------------------------------------

def test_controlled_cost_trivial():
    rng = np.random.default_rng(1)
    m = HPModel.controlled(crandn(rng, 2, 2), crandn(rng, 2, 2))
    rep = eval_cost_controlled(m, np.zeros((2, 2)), np.zeros((2, 2)), np.zeros((2, 2)),
                               ExpVectorState.vacuum([1.0, 0.0]), TimeGrid(1.0, 50))
    assert rep.j_tilde == 0


def test_scalar_optimal_cost_is_tanh():
    model, cost, grid, traj = scalar_setup()
    rep = eval_cost_controlled(model, feedback_gain(traj, cost, model), np.eye(1), Z1, VAC1)
    assert rep.j_tilde == pytest.approx(np.tanh(1.0), abs=1e-10)
    assert abs(rep.j_tilde - rep.min_value_prediction) <= 1e-6
    zero = eval_cost_controlled(model, np.zeros((1, 1)), np.eye(1), Z1, VAC1, grid)
    assert zero.j_tilde == pytest.approx(1.0, abs=1e-12)
    assert rep.j_tilde < zero.j_tilde


def test_cost_report_components_sum():
    model, cost, grid, traj = scalar_setup(steps=400)
    rep = eval_cost_controlled(model, feedback_gain(traj, cost, model), np.eye(1), Z1, VAC1)
    b = rep.breakdown
    assert rep.j_tilde == b["running_state"] + b["running_control"] + b["terminal"]
    assert set(rep.to_dict()) >= {"j_hat", "j", "j_tilde", "min_value_prediction", "gap_slope"}


def test_grid_mismatch():
    model, cost, grid, traj = scalar_setup(steps=100)
    with pytest.raises(DimensionError):
        eval_cost_controlled(model, feedback_gain(traj, cost, model), np.eye(1), Z1, VAC1,
                             TimeGrid(2.0, 100))


def test_controlled_cost_refinement_invariant():
    rng = np.random.default_rng(2)
    d = 3
    model = HPModel.controlled(0.5 * crandn(rng, d, d), 0.4 * crandn(rng, d, d))
    X, M = rand_hermitian(rng, d), rand_psd(rng, d)
    s = ExpVectorState.vacuum(rand_unit(rng, d))
    vals = []
    for n in (2000, 4000):
        g = TimeGrid(1.0, n)
        traj = solve_riccati_ode(model, CostSpec.flow(X, M), g)
        vals.append(eval_cost_controlled(model, feedback_gain(traj, CostSpec.flow(X, M), model),
                                         X, M, s).j_tilde)
    assert abs(vals[0] - vals[1]) <= 1e-6 * abs(vals[1])


@given(seeds, st.integers(1, 3))
def test_optimal_cost_monotone_in_weight(seed, d):
    rng = np.random.default_rng(seed)
    model = HPModel.controlled(0.5 * crandn(rng, d, d), 0.3 * crandn(rng, d, d))
    X = rand_hermitian(rng, d)
    s = ExpVectorState.vacuum(rand_unit(rng, d))
    g = TimeGrid(1.0, 200)
    Y = X @ X + rand_psd(rng, d)
    X2 = scipy.linalg.sqrtm(Y)
    costs = []
    for W in (X, X2):
        c = CostSpec.flow(W, np.zeros((d, d)))
        traj = solve_riccati_ode(model, c, g)
        costs.append(eval_cost_controlled(model, feedback_gain(traj, c, model), W,
                                          np.zeros((d, d)), s).j_tilde)
    assert costs[1] >= costs[0] - 1e-10


def test_coherent_cost_flagged():
    model, cost, grid, traj = scalar_setup(steps=100)
    rep = eval_cost_controlled(model, np.zeros((1, 1)), np.eye(1), Z1,
                               ExpVectorState.coherent([1.0], 0.5), grid)
    assert rep.meta["experimental"]


# ---- three costs ---------------------------------------------------------

def test_lemma1_no_coupling():
    rng = np.random.default_rng(3)
    H, X = rand_hermitian(rng, 2), rand_hermitian(rng, 2)
    m = HPModel(H, np.zeros((2, 2)))
    s = ExpVectorState.vacuum(rand_unit(rng, 2))
    g = TimeGrid(1.0, 400)
    r = lemma1_check(m, X, s, g)
    j, _ = eval_cost_definition(m, X, np.zeros((2, 2)), np.zeros((2, 2)), s, g)
    assert r.j_hat == j and r.j == j
    # j_tilde integrates by RK4, the others by the trapezoid rule
    r2 = lemma1_check(m, X, s, g.refine())
    assert convergence_order(r.max_deviation, r2.max_deviation) == pytest.approx(2.0, abs=0.05)


def test_lemma1_qubit_decay(qubit_decay):
    m, s, X = qubit_decay
    r = lemma1_check(m, X, s, TimeGrid.default(1.0))
    assert r.max_deviation <= 1e-6


def test_lemma1_homogeneous():
    rng = np.random.default_rng(4)
    m = rand_hp(rng, 2)
    X = rand_hermitian(rng, 2)
    xi = rand_unit(rng, 2)
    g = TimeGrid(1.0, 200)
    a = lemma1_check(m, X, ExpVectorState.vacuum(xi), g)
    c = 1.5 - 2j
    b = lemma1_check(m, X, ExpVectorState.vacuum(xi, amplitude=c), g)
    for k in ("j_hat", "j", "j_tilde"):
        assert getattr(b, k) == pytest.approx(abs(c) ** 2 * getattr(a, k), rel=1e-12)


def test_lemma1_rejects_nonunitary_model():
    m = HPModel.controlled(np.eye(2), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        lemma1_check(m, np.eye(2), ExpVectorState.vacuum([1.0, 0.0]), TimeGrid(1.0, 10))


def test_convergence_order():
    assert convergence_order(4e-4, 1e-4) == pytest.approx(2.0)
    assert convergence_order(1e-15, 1e-15) == np.inf


# ---- probe ---------------------------------------------------------------

def test_perturbation_normalized():
    rng = np.random.default_rng(5)
    D = perturbation_schedule(rng, TimeGrid(1.0, 50), 3)
    assert np.linalg.norm(D, axis=(1, 2)).max() == pytest.approx(1.0)


def test_probe_scalar():
    model, cost, grid, traj = scalar_setup(steps=1000)
    p = optimality_probe(model, np.eye(1), Z1, VAC1, grid, trials=20, seed=1)
    assert p.value_gap <= 1e-6
    assert p.min_gap >= -1e-7
    assert 1.8 <= p.gap_slope <= 2.2


def test_probe_independent_of_chunking():
    rng = np.random.default_rng(6)
    model = HPModel.controlled(0.5 * crandn(rng, 2, 2), 0.3 * crandn(rng, 2, 2))
    X = rand_hermitian(rng, 2)
    s = ExpVectorState.vacuum(rand_unit(rng, 2))
    g = TimeGrid(1.0, 200)
    a = optimality_probe(model, X, np.zeros((2, 2)), s, g, trials=6, seed=9, chunk=1)
    b = optimality_probe(model, X, np.zeros((2, 2)), s, g, trials=6, seed=9, chunk=6)
    assert np.array_equal(a.gaps, b.gaps)


def test_probe_rejects_coherent():
    model, cost, grid, traj = scalar_setup(steps=10)
    with pytest.raises(ValueError):
        optimality_probe(model, np.eye(1), Z1, ExpVectorState.coherent([1.0], 1.0), grid)


# ---- classical regulator -------------------------------------------------

def test_lqr_zero_weights():
    c = CostSpec(np.zeros((2, 2)), np.eye(2), np.zeros((2, 2)), m=np.zeros((1, 2)),
                 eta=np.zeros((1, 2)), mT=np.zeros((1, 2)))
    r = classical_lqr_check(-np.eye(2), np.eye(2), None, c, [1.0, 0.5], TimeGrid(1.0, 100))
    assert r.feedback_cost == 0 and r.oracle_cost == 0


def test_lqr_scalar():
    c = CostSpec(3 * np.eye(1), np.eye(1), Z1, m=Z1, eta=Z1, mT=Z1)
    errs = []
    for n in (250, 500):
        r = classical_lqr_check(-np.eye(1), np.eye(1), None, c, [1.0], TimeGrid(2.0, n))
        assert r.feedback_cost < r.zero_control_cost and r.oracle_cost < r.zero_control_cost
        errs.append(abs(r.feedback_cost - r.oracle_cost))
    assert errs[0] / errs[1] > 3.0
    # infinite-horizon value is pi x0^2 = 1 with pi from the CARE
    assert solve_care(-np.eye(1), np.eye(1), np.eye(1), 3 * np.eye(1)).Pi[0, 0] == pytest.approx(1.0)


def test_lqr_oracle_unconstrained_check():
    """With G = 0 the control is useless: oracle equals open-loop cost with v = -R^-1 eta*."""
    rng = np.random.default_rng(7)
    d = 2
    F = crandn(rng, d, d) - np.eye(d)
    c = CostSpec(rand_psd(rng, d), np.eye(1), np.zeros((d, d)), m=np.zeros((1, d)),
                 eta=np.zeros((1, 1)), mT=np.zeros((1, d)))
    x0 = crandn(rng, d)
    J, xs, vs = lqr_qp_oracle(F, np.zeros((d, 1)), np.zeros(d), c, x0, TimeGrid(1.0, 2000))
    assert np.allclose(vs, 0, atol=1e-12)
    assert np.allclose(xs[-1], scipy.linalg.expm(F) @ x0, atol=1e-10)
