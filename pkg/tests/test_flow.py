import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, strategies as st

from conftest import SIGMA_MINUS, crandn, rand_hermitian, rand_hp, rand_unit
from qflowctl.flow import (ExpVectorState, GridTooCoarseWarning, HPModel, TimeGrid,
                           TruncationWarning, collision_oracle, controlled_sandwich_flow,
                           flow_expectations, flow_superops, heisenberg_drift,
                           oracle_deviation, unitarity_residual)
from qflowctl.operators import DimensionError

seeds = st.integers(0, 2 ** 32 - 1)


# ---- types ---------------------------------------------------------------

def test_model_defaults_reproduce_unitary_form():
    rng = np.random.default_rng(0)
    m = rand_hp(rng, 3)
    Ls = m.L.conj().T
    assert np.allclose(m.F, -(1j * m.H + 0.5 * Ls @ m.L))
    assert np.array_equal(m.Psi, -Ls) and np.array_equal(m.Phi, m.L)
    assert m.is_unitary_form()


def test_model_validation():
    with pytest.raises(ValueError):
        HPModel(np.array([[0, 1], [0, 0]]), np.zeros((2, 2)))
    with pytest.raises(ValueError):
        HPModel(np.eye(2), np.zeros((2, 2)), T=0.0)
    with pytest.raises(DimensionError):
        HPModel(np.eye(2), np.zeros((3, 3)))


def test_state_validation():
    with pytest.raises(ValueError):
        ExpVectorState([1.0, 1.0])
    with pytest.raises(ValueError):
        ExpVectorState([1.0], (0.0, 0.0), (1, 2))
    with pytest.raises(ValueError):
        ExpVectorState([1.0], (0.1,), (1,))


def test_state_f_piecewise():
    s = ExpVectorState([1.0], (0.0, 0.5), (1.0, 2j))
    assert np.array_equal(s.f([0.0, 0.49, 0.5, 0.9]), [1.0, 1.0, 2j, 2j])
    assert s.field_norm_sq(1.0) == pytest.approx(0.5 + 0.5 * 4)
    assert not s.is_vacuum
    assert ExpVectorState([1.0], (0.0,), (0,)).is_vacuum


def test_grid():
    g = TimeGrid.default(1.5)
    assert g.steps == 3000 and g.dt == pytest.approx(5e-4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0)


# ---- generator -----------------------------------------------------------

def test_drift_identity_is_zero():
    rng = np.random.default_rng(1)
    m = rand_hp(rng, 4)
    assert np.linalg.norm(heisenberg_drift(m, np.eye(4))) <= 1e-14 * np.linalg.norm(m.L) ** 2


def test_drift_commuting_diagonals():
    m = HPModel(np.zeros((3, 3)), np.diag([1.0, 2j, -0.5]))
    assert np.allclose(heisenberg_drift(m, np.diag([3.0, 1.0, 2.0])), 0, atol=1e-15)


def test_drift_qubit_value():
    m = HPModel(np.zeros((2, 2)), SIGMA_MINUS)
    assert np.allclose(heisenberg_drift(m, np.diag([1.0, -1.0])), np.diag([0.0, 2.0]), atol=0)


def test_drift_dimension_mismatch():
    with pytest.raises(DimensionError):
        heisenberg_drift(HPModel(np.eye(2), np.zeros((2, 2))), np.eye(3))


@given(seeds, st.integers(1, 5))
def test_drift_preserves_hermiticity(seed, d):
    rng = np.random.default_rng(seed)
    m = rand_hp(rng, d)
    Y = rand_hermitian(rng, d)
    Z = heisenberg_drift(m, Y)
    assert np.linalg.norm(Z - Z.conj().T) <= 1e-14 * max(1.0, np.linalg.norm(Z)) * 10


# ---- flow ----------------------------------------------------------------

def test_qubit_decay_closed_form(qubit_decay):
    m, s, X = qubit_decay
    g = TimeGrid.default(1.0)
    tr = flow_expectations(m, s, [X, np.eye(2)], g)
    assert np.max(np.abs(tr.values[:, 0] - np.exp(-g.times))) < 1e-12
    assert np.max(np.abs(tr.values[:, 1] - 1)) < 1e-12


def test_no_coupling_constant():
    rng = np.random.default_rng(2)
    m = HPModel(np.zeros((3, 3)), np.zeros((3, 3)))
    Y = crandn(rng, 3, 3)
    s = ExpVectorState.vacuum(rand_unit(rng, 3))
    tr = flow_expectations(m, s, [Y], TimeGrid(1.0, 100))
    assert np.allclose(tr.values, tr.values[0], atol=1e-14)


def test_hamiltonian_conjugation_oracle():
    rng = np.random.default_rng(3)
    H = rand_hermitian(rng, 3)
    m = HPModel(H, np.zeros((3, 3)))
    Y = rand_hermitian(rng, 3)
    xi = rand_unit(rng, 3)
    g = TimeGrid.default(1.0)
    tr = flow_expectations(m, ExpVectorState.vacuum(xi), [Y], g)
    for k in (0, 700, 2000):
        U = scipy.linalg.expm(-1j * H * g.times[k])
        assert tr.values[k, 0] == pytest.approx(np.vdot(xi, U.conj().T @ Y @ U @ xi), abs=1e-11)


def test_coarse_grid_warns():
    rng = np.random.default_rng(4)
    m = rand_hp(rng, 3, lscale=3.0)
    with pytest.warns(GridTooCoarseWarning):
        flow_expectations(m, ExpVectorState.vacuum(np.eye(3)[0]), [np.eye(3)], TimeGrid(1.0, 8))


def test_unnormalized_state_weight():
    rng = np.random.default_rng(5)
    m = rand_hp(rng, 2)
    s = ExpVectorState.coherent(np.eye(2)[0], 0.8, normalized=False)
    tr = flow_expectations(m, s, [np.eye(2)], TimeGrid(1.0, 200))
    assert np.allclose(tr.values[:, 0], np.exp(0.64), atol=1e-12)


@given(seeds, st.integers(1, 4))
def test_cauchy_schwarz(seed, d):
    rng = np.random.default_rng(seed)
    m = rand_hp(rng, d)
    Y = rand_hermitian(rng, d)
    s = ExpVectorState.vacuum(rand_unit(rng, d))
    tr = flow_expectations(m, s, [Y, Y @ Y], TimeGrid(1.0, 400), check=False)
    assert np.all(tr.values[:, 1].real >= tr.values[:, 0].real ** 2 - 1e-8)


def test_rk4_fourth_order():
    rng = np.random.default_rng(6)
    m = rand_hp(rng, 3, lscale=1.5)
    s = ExpVectorState.vacuum(rand_unit(rng, 3))
    Y = [rand_hermitian(rng, 3)]
    ref = flow_expectations(m, s, Y, TimeGrid(1.0, 1600), check=False).values
    e = [np.abs(flow_expectations(m, s, Y, TimeGrid(1.0, n), check=False).values[-1]
                - ref[-1]).max() for n in (25, 50)]
    assert e[0] / e[1] > 12


# ---- unitarity -----------------------------------------------------------

def test_unitarity_without_coupling():
    rng = np.random.default_rng(7)
    m = HPModel(rand_hermitian(rng, 3), np.zeros((3, 3)))
    r = unitarity_residual(m, ExpVectorState.vacuum(rand_unit(rng, 3)), TimeGrid.default(1.0))
    assert r.residual <= 1e-12


def test_unitarity_negative_control_grows_linearly():
    rng = np.random.default_rng(8)
    m = rand_hp(rng, 3)
    s = ExpVectorState.vacuum(rand_unit(rng, 3))
    broken = flow_superops(m, jump=False)
    r1 = unitarity_residual(m, s, TimeGrid(0.01, 20), superops=broken).residual
    r2 = unitarity_residual(m, s, TimeGrid(0.02, 40), superops=broken).residual
    assert r1 > 1e-4
    assert r2 / r1 == pytest.approx(2.0, rel=0.05)


@given(seeds, st.integers(1, 4), st.complex_numbers(max_magnitude=1.5))
def test_unitarity_coherent(seed, d, f):
    rng = np.random.default_rng(seed)
    m = rand_hp(rng, d)
    s = ExpVectorState.coherent(rand_unit(rng, d), f)
    r = unitarity_residual(m, s, TimeGrid(1.0, 500), observable=rand_hermitian(rng, d))
    assert r.residual <= 1e-10 and r.hermiticity_drift <= 1e-10


# ---- controlled evolution ------------------------------------------------

def test_controlled_identity_unitary_case():
    rng = np.random.default_rng(9)
    m = rand_hp(rng, 3)
    tr = controlled_sandwich_flow(m, np.zeros((3, 3)), TimeGrid.default(1.0), [np.eye(3)],
                                  ExpVectorState.vacuum(rand_unit(rng, 3)))
    assert np.max(np.abs(tr.values - 1)) < 1e-12


def test_controlled_matches_flow_at_zero_gain():
    rng = np.random.default_rng(10)
    m = rand_hp(rng, 3)
    s = ExpVectorState.vacuum(rand_unit(rng, 3))
    Y = [rand_hermitian(rng, 3)]
    g = TimeGrid.default(1.0)
    a = controlled_sandwich_flow(m, np.zeros((3, 3)), g, Y, s).values
    b = flow_expectations(m, s, Y, g).values
    assert np.max(np.abs(a - b)) < 1e-12


def test_controlled_conjugation_oracle():
    rng = np.random.default_rng(11)
    H = rand_hermitian(rng, 2)
    m = HPModel.controlled(-1j * H, np.zeros((2, 2)))
    Y = rand_hermitian(rng, 2)
    xi = rand_unit(rng, 2)
    g = TimeGrid.default(1.0)
    tr = controlled_sandwich_flow(m, np.zeros((2, 2)), g, [Y], ExpVectorState.vacuum(xi))
    U = scipy.linalg.expm(-1j * H)
    assert tr.values[-1, 0] == pytest.approx(np.vdot(xi, U.conj().T @ Y @ U @ xi), abs=1e-11)


def test_controlled_scalar():
    m = HPModel.controlled(np.array([[-0.3]]), np.zeros((1, 1)))
    g = TimeGrid.default(1.0)
    tr = controlled_sandwich_flow(m, np.array([[0.7]]), g, [np.eye(1)],
                                  ExpVectorState.vacuum([1.0]))
    assert np.allclose(tr.values[:, 0], np.exp(2 * 0.4 * g.times), rtol=1e-12)


def test_controlled_coherent_flagged_experimental():
    rng = np.random.default_rng(12)
    m = rand_hp(rng, 2)
    s = ExpVectorState.coherent(np.eye(2)[0], 0.5)
    tr = controlled_sandwich_flow(m, np.zeros((2, 2)), TimeGrid(1.0, 400), [np.eye(2)], s)
    assert tr.meta["experimental"]
    ref = flow_expectations(m, s, [np.eye(2)], TimeGrid(1.0, 400))
    assert np.allclose(tr.values, ref.values, atol=1e-12)


# ---- collision oracle ----------------------------------------------------

def test_oracle_trivial_model():
    rng = np.random.default_rng(13)
    m = HPModel(np.zeros((2, 2)), np.zeros((2, 2)))
    s = ExpVectorState.vacuum(rand_unit(rng, 2))
    Y = [crandn(rng, 2, 2)]
    g = TimeGrid(1.0, 50)
    assert np.allclose(collision_oracle(m, s, g, Y).values,
                       flow_expectations(m, s, Y, g, check=False).values, atol=1e-14)


def test_oracle_qubit_decay(qubit_decay):
    m, s, X = qubit_decay
    g = TimeGrid(1.0, 400)
    tr = collision_oracle(m, s, g, [X])
    err = np.max(np.abs(tr.values[:, 0] - np.exp(-g.times)))
    assert err < 5 * g.dt


def test_oracle_rejects_small_truncation():
    with pytest.raises(ValueError):
        collision_oracle(HPModel(np.eye(1), np.eye(1)), ExpVectorState.vacuum([1.0]),
                         TimeGrid(1.0, 4), [np.eye(1)], n_max=1)


def test_oracle_truncation_warning():
    m = HPModel(np.zeros((2, 2)), 3.0 * SIGMA_MINUS)
    with pytest.warns(TruncationWarning):
        collision_oracle(m, ExpVectorState.coherent([0.0, 1.0], 3.0), TimeGrid(1.0, 10),
                         [np.eye(2)], n_max=2)


def test_coherent_field_sign_selected_by_oracle():
    """The oracle singles out one of the two sign conventions for the field terms."""
    rng = np.random.default_rng(14)
    m = rand_hp(rng, 2)
    s = ExpVectorState.coherent(rand_unit(rng, 2), 0.9 + 0.6j)
    Y = [rand_hermitian(rng, 2), crandn(rng, 2, 2)]
    g = TimeGrid(1.0, 400)
    col = collision_oracle(m, s, g, Y, n_max=6).values
    good = flow_expectations(m, s, Y, g, convention="derived", check=False).values
    bad = flow_expectations(m, s, Y, g, convention="swapped", check=False).values
    assert np.abs(col - good).max() < 20 * g.dt
    assert np.abs(col - bad).max() > 100 * np.abs(col - good).max()


def test_oracle_first_order_coherent():
    rng = np.random.default_rng(15)
    m = rand_hp(rng, 2)
    s = ExpVectorState(rand_unit(rng, 2), (0.0, 0.4), (0.5, -0.3j))
    Y = [rand_hermitian(rng, 2)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        d1 = oracle_deviation(m, s, Y, 250, n_max=5)
        d2 = oracle_deviation(m, s, Y, 500, n_max=5)
    assert 1.7 <= d1 / d2 <= 2.3
