import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from transindex.clifford import (build_spin_rep, dstar, rotation_generator, skew_log, spin_exp,
                                 supertrace)

DIMS = (2, 4, 6, 8)
finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)


def skew(n):
    return arrays(float, (n, n), elements=finite).map(lambda a: a - a.T)


@pytest.mark.parametrize("n", DIMS)
def test_clifford_relations(n):
    rep = build_spin_rep(n)
    C = rep.generators
    I = np.eye(rep.dim)
    for i in range(n):
        for j in range(n):
            anti = C[i] @ C[j] + C[j] @ C[i]
            assert np.allclose(anti, -2 * I * (i == j))


@pytest.mark.parametrize("n", DIMS)
def test_grading_is_diagonal_involution(n):
    rep = build_spin_rep(n)
    G = rep.grading
    assert np.allclose(G, np.diag(np.diag(G)))
    assert np.allclose(G @ G, np.eye(rep.dim))
    assert rep.half_dims == (rep.dim // 2, rep.dim // 2)
    for c in rep.generators:
        assert np.allclose(G @ c, -c @ G)


def test_supertrace_of_volume_pair():
    rep = build_spin_rep(2)
    assert supertrace(rep.generators[0] @ rep.generators[1], rep) == pytest.approx(-2j)


@settings(max_examples=30, deadline=None)
@given(v=arrays(float, 4, elements=finite))
def test_clifford_square_is_minus_norm(v):
    rep = build_spin_rep(4)
    c = rep.clifford(v)
    assert np.allclose(c @ c, -np.dot(v, v) * np.eye(rep.dim), atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(A=skew(4), B=skew(4))
def test_dstar_is_lie_homomorphism(A, B):
    rep = build_spin_rep(4)
    dA, dB = dstar(A, rep), dstar(B, rep)
    assert np.allclose(dA @ dB - dB @ dA, dstar(A @ B - B @ A, rep), atol=1e-8)


@settings(max_examples=30, deadline=None)
@given(A=skew(4), v=arrays(float, 4, elements=finite))
def test_spin_lift_covers_rotation(A, v):
    """exp(dstar A) c(v) exp(-dstar A) = c(exp(A) v)."""
    rep = build_spin_rep(4)
    A = A / max(1.0, np.linalg.norm(A))
    S = expm(dstar(A, rep))
    lhs = S @ rep.clifford(v) @ np.linalg.inv(S)
    assert np.allclose(lhs, rep.clifford(expm(A) @ v), atol=1e-8)


@settings(max_examples=25, deadline=None)
@given(A=skew(2))
def test_dstar_commutes_with_grading(A):
    rep = build_spin_rep(2)
    X = dstar(A, rep)
    assert np.allclose(X @ rep.grading, rep.grading @ X)


def test_full_turn_lifts_to_minus_identity():
    rep = build_spin_rep(2)
    J = rotation_generator(2)
    assert J[1, 0] == 1.0
    assert np.allclose(expm(dstar(2 * np.pi * J, rep)), -np.eye(2))
    assert np.allclose(expm(dstar(4 * np.pi * J, rep)), np.eye(2))


@pytest.mark.parametrize("n", (4, 6))
def test_low_degree_supertraces_vanish(n):
    rng = np.random.default_rng(0)
    rep = build_spin_rep(n)
    for k in range(1, n // 2):
        op = np.eye(rep.dim, dtype=complex)
        for _ in range(k):
            A = rng.normal(size=(n, n))
            op = op @ dstar(A - A.T, rep)
        assert abs(supertrace(op, rep)) < 1e-12


def test_top_degree_supertrace_survives():
    rep = build_spin_rep(4)
    J12, J34 = rotation_generator(4, 0, 1), rotation_generator(4, 2, 3)
    assert abs(supertrace(dstar(J12, rep) @ dstar(J34, rep), rep)) > 0.1


def test_spin_exp_series_converges():
    rep = build_spin_rep(4)
    A = 0.3 * (rotation_generator(4, 0, 1) + rotation_generator(4, 1, 3))
    res = spin_exp(A, rep, 20)
    assert np.allclose(res.truncated, res.full, atol=1e-14)
    assert np.allclose(spin_exp(A, rep, 0).truncated, np.eye(rep.dim))


def test_skew_log_inverts_exp():
    A = 0.4 * rotation_generator(3, 0, 2)
    assert np.allclose(skew_log(expm(A)), A)


def test_rank_supertrace():
    rep = build_spin_rep(2)
    op = np.kron(np.diag([1.0, 0.0]), np.eye(3))
    assert supertrace(op, rep, rank=3) == pytest.approx(3.0)


@pytest.mark.parametrize("bad", (1, 3, 0, 10, -2))
def test_bad_dimension_rejected(bad):
    with pytest.raises(ValueError):
        build_spin_rep(bad)


def test_non_integer_dimension_rejected():
    with pytest.raises(TypeError):
        build_spin_rep(2.0)


def test_non_skew_rejected():
    rep = build_spin_rep(2)
    with pytest.raises(ValueError):
        dstar(np.eye(2), rep)
    with pytest.raises(ValueError):
        dstar(np.zeros((3, 3)), rep)
    with pytest.raises(ValueError):
        supertrace(np.eye(3), rep)
    with pytest.raises(ValueError):
        spin_exp(np.zeros((2, 2)), rep, -1)
