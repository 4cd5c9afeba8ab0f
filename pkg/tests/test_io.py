import numpy as np
import pytest
from hypothesis import given, strategies as st

from qflowctl.io import (LiteralError, fmt, format_matrix, format_vector, parse_matrix,
                         parse_scalar, parse_vector, write_csv)


def test_identity_literal():
    lit = [[[1, 0], [0, 0]], [[0, 0], [1, 0]]]
    assert np.array_equal(parse_matrix(lit), np.eye(2))


@pytest.mark.parametrize("lit", [
    [], [[[1, 0]], [[0, 0]]], [[[1, 0], [0]]], [[[1, "a"]]], [[[True, 0]]],
    [[[float("nan"), 0]]],
])
def test_malformed_literals(lit):
    with pytest.raises(LiteralError):
        parse_matrix(lit)


def test_scalar_forms():
    assert parse_scalar(2) == 2
    assert parse_scalar([0, 1]) == 1j
    with pytest.raises(LiteralError):
        parse_scalar("x")


finite = st.floats(-1e6, 1e6, allow_nan=False)


@given(st.integers(1, 4).flatmap(lambda d: st.lists(
    st.lists(st.tuples(finite, finite), min_size=d, max_size=d), min_size=d, max_size=d)))
def test_matrix_round_trip(rows):
    A = np.array([[complex(a, b) for a, b in r] for r in rows])
    assert np.array_equal(parse_matrix(format_matrix(A)), A)


@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=5))
def test_vector_round_trip(pairs):
    v = np.array([complex(a, b) for a, b in pairs])
    assert np.array_equal(parse_vector(format_vector(v)), v)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_fmt_round_trips(x):
    assert float(fmt(x)) == x


def test_csv_layout(tmp_path):
    p = tmp_path / "a.csv"
    write_csv(p, ("t", "v"), [(0.0, 1), (0.5, 2)])
    assert p.read_bytes() == b"t,v\n0.0,1\n0.5,2\n"
