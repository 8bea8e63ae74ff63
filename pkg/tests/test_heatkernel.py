import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transindex import oracles
from transindex.geometry import FlatTorus, Football, RoundSphere, Teardrop
from transindex.heatkernel import (DriftUnavailable, Parametrix, diagonal_ratio, flat_image_sum,
                                   gaussian_ratio, kernel_for, lift_to_X, log_gradient,
                                   successive_approximation, verify_bounds)
from transindex.geometry import catalog
from transindex.acceptance import sandwich_report

TWO_PI = 2 * np.pi
SPHERE = kernel_for(RoundSphere())
TORUS = kernel_for(FlatTorus())


def sphere_point(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


@pytest.mark.parametrize("t", [0.05, 0.2, 0.5, 2.0])
def test_torus_kernel_matches_theta_oracle(t):
    rng = np.random.default_rng(0)
    x, y = rng.uniform(0, TWO_PI, (2, 30, 2))
    ref = oracles.torus_kernel((TWO_PI, TWO_PI), t, y - x)
    assert np.allclose(TORUS(t, x, y), ref, rtol=1e-12, atol=0)


@pytest.mark.parametrize("t", [0.05, 0.1, 0.3, 0.5])
def test_sphere_kernel_matches_spectral_oracle(t):
    rng = np.random.default_rng(1)
    g = RoundSphere()
    x = g.fold(rng.normal(size=(40, 3)) / 1.0)[0]
    y = g.fold(rng.normal(size=(40, 3)))[0]
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    y /= np.linalg.norm(y, axis=1, keepdims=True)
    ref = oracles.sphere_kernel(t, g.cover_distance(x, y))
    resolved = ref > 1e-9 * oracles.sphere_diagonal(t)
    rel = np.abs(SPHERE(t, x, y) - ref)[resolved] / ref[resolved]
    assert rel.max() < 5e-3


def test_football_kernel_matches_image_oracle():
    g = Football(3)
    K = kernel_for(g)
    x = np.array([sphere_point(0.3, 0.1), sphere_point(1.2, 2.0)])
    y = np.array([sphere_point(0.5, 1.0), sphere_point(2.5, 0.4)])
    for t in (0.1, 0.4):
        assert np.allclose(K(t, x, y), oracles.football_kernel(3, t, x, y), rtol=5e-3)


@settings(max_examples=20, deadline=None)
@given(a=st.floats(0.1, 3.0), b=st.floats(0, 6.2), c=st.floats(0.1, 3.0), d=st.floats(0, 6.2),
       t=st.floats(0.05, 1.0))
def test_sphere_kernel_symmetric(a, b, c, d, t):
    x, y = sphere_point(a, b)[None], sphere_point(c, d)[None]
    assert SPHERE(t, x, y)[0] == pytest.approx(SPHERE(t, y, x)[0], rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(x=st.tuples(st.floats(0, 6.28), st.floats(0, 6.28)),
       y=st.tuples(st.floats(0, 6.28), st.floats(0, 6.28)), t=st.floats(0.01, 3.0))
def test_torus_kernel_positive_symmetric(x, y, t):
    x, y = np.array([x]), np.array([y])
    v = TORUS(t, x, y)[0]
    assert v > 0
    assert v == pytest.approx(TORUS(t, y, x)[0], rel=1e-12)


@pytest.mark.parametrize("K, x", [
    (SPHERE, sphere_point(0.7, 0.2)), (TORUS, np.array([1.0, 2.0])),
    (kernel_for(Teardrop(2)), np.array([1.2, 0.4]))])
def test_stochastic_completeness(K, x):
    for t in (0.1, 0.5):
        mass = K.apply(t, lambda z: np.ones(len(z)), x[None])
        assert float(mass[0]) == pytest.approx(1.0, abs=2e-4)


def test_semigroup_on_sphere():
    x, y = sphere_point(0.5, 0.1), sphere_point(1.1, 0.9)
    lhs = SPHERE.apply(0.1, lambda z: SPHERE(0.15, z, y[None]), x[None])
    assert float(lhs[0]) == pytest.approx(float(SPHERE(0.25, x[None], y[None])[0]), rel=1e-4)


def test_sphere_log_gradient_matches_finite_differences():
    g = RoundSphere()
    x, y = sphere_point(0.8, 0.3), sphere_point(1.4, 1.2)
    t = 0.2
    grad = SPHERE.log_gradient(t, x[None], y[None])[0]
    E = g.frame(x[None])[0]
    h = 1e-5
    for k in range(2):
        up = g.exp(x[None], h * E[:, k][None])
        dn = g.exp(x[None], -h * E[:, k][None])
        fd = (np.log(SPHERE(t, up, y[None])) - np.log(SPHERE(t, dn, y[None])))[0] / (2 * h)
        assert np.dot(grad, E[:, k]) == pytest.approx(fd, rel=1e-5, abs=1e-7)


@pytest.mark.parametrize("t", [2.5e-4, 0.01, 0.05])
def test_tabulated_drift_matches_direct_gradient(t):
    rng = np.random.default_rng(4)
    y = sphere_point(0.9, 0.5)[None].repeat(50, 0)
    # spread over a few bridge widths, where the sampler evaluates the drift
    x = y + 3 * np.sqrt(t) * rng.normal(size=(50, 3))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    p, b = SPHERE.drift_field(t)(x, y)
    # only where the kernel is resolved (same floor as the accuracy table)
    ok = oracles.sphere_kernel(t, RoundSphere().cover_distance(x, y)) > 1e-9 * oracles.sphere_diagonal(t)
    assert ok.sum() >= 40
    exact = SPHERE.log_gradient(t, x, y)
    err = np.linalg.norm(b - exact, axis=1)[ok] / np.maximum(np.linalg.norm(exact, axis=1)[ok], 1.0)
    assert err.max() < 2e-3


def test_torus_log_gradient_points_back():
    x, y = np.array([[1.0, 1.0]]), np.array([[1.3, 0.8]])
    b = log_gradient(TORUS, 0.01, x, y)[0]
    assert np.allclose(b, (y - x)[0] / 0.01, rtol=1e-8)


def test_drift_unavailable_below_floor():
    x, y = np.array([[0.0, 0.0]]), np.array([[np.pi, np.pi]])
    with pytest.raises(DriftUnavailable):
        log_gradient(TORUS, 1e-4, x, y)


def test_nonpositive_time_rejected():
    with pytest.raises(ValueError):
        TORUS(0.0, np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        kernel_for(Teardrop(2))(0.01, np.array([[1.0, 0.0]]), np.array([[1.0, 0.0]]))
    with pytest.raises(ValueError):
        Parametrix(RoundSphere(), order=2)
    with pytest.raises(ValueError):
        successive_approximation(Parametrix(RoundSphere()), depth=-1)


def test_flat_image_sum_reduces_to_gaussian():
    t = 0.01
    d = np.array([[0.1, 0.05]])
    expected = np.exp(-np.sum(d ** 2) / (2 * t)) / (TWO_PI * t)
    assert flat_image_sum(np.array([TWO_PI, TWO_PI]), t, d)[0] == pytest.approx(expected, rel=1e-12)


def test_diagonal_ratio_tends_to_isotropy_order():
    g = Football(2)
    K = kernel_for(g)
    cone = float(diagonal_ratio(K, 0.01, np.array([[0.0, 0.0, 1.0]]))[0])
    assert cone == pytest.approx(2.0, rel=0.02)


def test_gaussian_ratio_is_one_on_plane_scale():
    x, y = np.array([[1.0, 1.0]]), np.array([[1.1, 1.0]])
    assert gaussian_ratio(TORUS, 0.01, x, y)[0] == pytest.approx(1 / TWO_PI, rel=1e-10)


def test_bounds_on_torus():
    g = FlatTorus()
    rng = np.random.default_rng(0)
    rep = sandwich_report(TORUS, g, [0.3, 0.6], rng, 20, 20)
    assert rep.ok
    assert rep.C1 < rep.C2
    assert rep.hinge_min >= 0


def test_random_fit_alone_can_miss_the_diameter():
    # the sandwich constants come from a fit; without extremal pairs a fresh
    # sample nearer the cut locus may exceed them
    g = FlatTorus()
    rng = np.random.default_rng(0)
    P = tuple(rng.uniform(0, TWO_PI, (2, 20, 2)))
    V = tuple(rng.uniform(0, TWO_PI, (2, 20, 2)))
    assert not verify_bounds(TORUS, g, [0.3, 0.6], P, V).ok


def test_bounds_reject_large_times():
    g = FlatTorus()
    P = (np.zeros((2, 2)), np.ones((2, 2)))
    with pytest.raises(ValueError):
        verify_bounds(TORUS, g, [1.5], P)


def test_lifted_kernel_divides_by_circle():
    sp = catalog("hopf")
    u = sp.random_X(np.random.default_rng(0), 3)
    v = sp.random_X(np.random.default_rng(1), 3)
    lifted = lift_to_X(SPHERE, sp)
    assert np.allclose(lifted(0.2, u, v) * TWO_PI, SPHERE(0.2, sp.project(u), sp.project(v)))


def test_sphere_diagonal_oracle_small_time():
    # (2 pi t) p(t,x,x) = 1 + t/6 + O(t^2) for the unit sphere (scalar curvature 2, 1/2 Laplacian)
    t = 1e-3
    assert TWO_PI * t * oracles.sphere_diagonal(t) == pytest.approx(1 + t / 6, abs=1e-6)


def test_monopole_area_law_at_zero_charge():
    assert oracles.monopole_area_cf(0, 0.3) == pytest.approx(1.0)
    assert 0 < oracles.monopole_area_cf(0.5, 0.3) < 1
