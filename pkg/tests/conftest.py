import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("qflowctl", max_examples=30, deadline=None)
settings.load_profile("qflowctl")


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


def rand_hermitian(rng, d, scale=1.0):
    A = crandn(rng, d, d)
    return scale * 0.5 * (A + A.conj().T)


def rand_psd(rng, d, scale=1.0):
    A = crandn(rng, d, d)
    return scale * A @ A.conj().T / d


def rand_unit(rng, d):
    v = crandn(rng, d)
    return v / np.linalg.norm(v)


def rand_hp(rng, d, T=1.0, lscale=0.7):
    from qflowctl.flow import HPModel
    return HPModel(rand_hermitian(rng, d), lscale * crandn(rng, d, d), T=T)


SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)


@pytest.fixture
def qubit_decay():
    """H = 0, L = lowering, X = excited-state projector, excited start."""
    from qflowctl.flow import ExpVectorState, HPModel
    model = HPModel(np.zeros((2, 2)), SIGMA_MINUS, T=1.0)
    state = ExpVectorState.vacuum(np.array([0.0, 1.0]))
    X = np.diag([0.0, 1.0]).astype(complex)
    return model, state, X


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
