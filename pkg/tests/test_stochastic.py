import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transindex import oracles
from transindex.clifford import build_spin_rep
from transindex.geometry import FlatTorus, RoundSphere, Teardrop, monopole_twist, trivial_twist
from transindex.heatkernel import kernel_for
from transindex.stochastic import (OVERSHOOT, RandomSource, evolve_transport, exit_time,
                                   feynman_kac_solve, path_dump_rows, path_supertrace, run_blocks,
                                   sample_bridge, sample_path)

TORUS = FlatTorus()
SPHERE = RoundSphere()


def z(mean, expected, se):
    return (mean - expected) / se


def test_seed_is_mandatory():
    with pytest.raises(ValueError):
        RandomSource(None)
    with pytest.raises(ValueError):
        sample_path(TORUS, np.zeros(2), 0.1)


@settings(max_examples=15, deadline=None)
@given(first=st.integers(0, 50), count=st.integers(1, 6), seed=st.integers(0, 2 ** 31))
def test_draws_depend_only_on_path_index(first, count, seed):
    src = RandomSource(seed)
    whole, extra = src.draws(0, first + count, (5, 2))
    part, extra_part = src.draws(first, count, (5, 2))
    assert np.array_equal(whole[:, first:], part)
    assert np.array_equal(extra[:, first:], extra_part)


def _ends(first, count, seed):
    p = sample_path(TORUS, np.array([1.0, 2.0]), 0.05, None, RandomSource(seed), count,
                    first_path=first, record=False)
    return p.cover[-1]


def test_block_and_worker_invariance():
    a = np.concatenate(run_blocks(_ends, 300, 100, 1, (5,)))
    b = np.concatenate(run_blocks(_ends, 300, 77, 1, (5,)))
    c = np.concatenate(run_blocks(_ends, 300, 100, 2, (5,)))
    assert np.array_equal(a, b) and np.array_equal(a, c)


def test_quadratic_variation_on_sphere():
    t = 0.05
    p = sample_path(SPHERE, np.array([0.0, 0.0, 1.0]), t, None, RandomSource(1), 2000)
    qv = np.sum(p.increments ** 2, axis=(0, 2))
    assert abs(z(qv.mean(), 2 * t, qv.std(ddof=1) / np.sqrt(qv.size))) < 4


def test_sphere_paths_stay_on_sphere_with_orthonormal_frames():
    p = sample_path(SPHERE, np.array([0.0, 0.6, 0.8]), 0.1, None, RandomSource(2), 50)
    assert np.allclose(np.linalg.norm(p.cover, axis=-1), 1.0, atol=1e-12)
    F = p.frames[-1]
    assert np.allclose(np.einsum('bdi,bdj->bij', F, F), np.eye(2), atol=1e-10)
    assert np.allclose(np.einsum('bd,bdi->bi', p.cover[-1], F), 0.0, atol=1e-10)


def test_flat_loop_area_has_levy_variance():
    # Levy area of a planar Brownian loop of duration T has variance T^2 / 12;
    # the in-step area term makes this exact even with very few steps
    T = 0.1
    K = kernel_for(TORUS)
    x = np.array([1.0, 1.0])
    with_sub = sample_bridge(TORUS, K, x, x, T, T / 5, RandomSource(3), 20000, record=False)
    without = sample_bridge(TORUS, K, x, x, T, T / 5, RandomSource(3), 20000, record=False,
                            substep_area=False)
    v = with_sub.area.var()
    se = v * np.sqrt(2.0 / 20000) * 2       # logistic-like tails: generous kurtosis factor
    assert abs(v - T ** 2 / 12) < 3 * se
    assert without.area.var() < T ** 2 / 12 - 3 * se


def test_bridge_lands_on_target():
    K = kernel_for(SPHERE)
    x = np.array([0.0, 0.0, 1.0])
    y = np.array([np.sin(0.3), 0.0, np.cos(0.3)])
    p = sample_bridge(SPHERE, K, x, y, 0.1, None, RandomSource(4), 200)
    assert np.allclose(p.cover[-1], y, atol=1e-12)
    assert p.valid.all()


def test_flat_bridge_midpoint_variance():
    # planar Brownian bridge: Var X_s = s (T - s) / T per coordinate
    T = 0.1
    K = kernel_for(TORUS)
    x, y = np.array([1.0, 1.0]), np.array([1.2, 1.1])
    p = sample_bridge(TORUS, K, x, y, T, None, RandomSource(6), 4000)
    mid = p.cover[len(p.times) // 2]
    s = p.times[len(p.times) // 2]
    lin = x + (y - x) * s / T
    d2 = np.sum((mid - lin) ** 2, axis=-1)
    expected = 2 * s * (T - s) / T
    assert abs(z(d2.mean(), expected, d2.std(ddof=1) / np.sqrt(d2.size))) < 4


def test_sphere_loop_holonomy_matches_monopole_spectrum():
    # E[cos(A/2)] over Brownian loops equals a ratio of heat traces of the
    # charge-one monopole Laplacian and the scalar Laplacian
    T = 0.3
    K = kernel_for(SPHERE)
    x = np.array([0.0, 0.0, 1.0])
    p = sample_bridge(SPHERE, K, x, x, T, None, RandomSource(7), 3000, record=False)
    c = np.cos(p.area / 2)
    exact = oracles.monopole_area_cf(0.5, T)
    assert abs(z(c.mean(), exact, c.std(ddof=1) / np.sqrt(c.size))) < 4


def test_feynman_kac_scalar_heat_semigroup():
    # E f(X_t) for f = cos(x_1) on the flat torus is exp(-t/2) cos(x_1)
    t = 0.2
    x = np.array([0.7, 0.3])
    res = feynman_kac_solve(TORUS, None, None, lambda pts: np.cos(pts[:, 0]), t, x, 4000,
                            RandomSource(8), scalar=True)
    assert abs(z(res.value[0], np.exp(-t / 2) * np.cos(0.7), res.stderr[0])) < 4


def test_transport_is_unitary_and_trivial_twist_is_flat():
    K = kernel_for(SPHERE)
    spin = build_spin_rep(2)
    x = np.array([0.0, 0.0, 1.0])
    p = sample_bridge(SPHERE, K, x, x, 0.05, None, RandomSource(9), 100, record=False)
    st = evolve_transport(p, spin, trivial_twist(), SPHERE)
    assert st.valid.all()
    assert np.max(st.unitarity) < 1e-10
    # no twist curvature: M is the identity and R = exp(-t S / 8) with S = 2
    assert np.allclose(st.M, np.eye(2))
    assert np.allclose(st.R, np.exp(-0.05 * 2 / 8))


def test_truncated_supertrace_equals_full():
    K = kernel_for(SPHERE)
    spin = build_spin_rep(2)
    x = np.array([0.0, 0.0, 1.0])
    p = sample_bridge(SPHERE, K, x, x, 0.05, None, RandomSource(10), 200, record=False)
    st = evolve_transport(p, spin, monopole_twist(2), SPHERE)
    full = path_supertrace(st, spin, 1)
    trunc = path_supertrace(st, spin, 1, truncated=True)
    assert np.allclose(full, trunc, atol=1e-10)


def test_exit_time_mean_with_and_without_correction():
    r, h = 0.1, 4e-5
    corr = exit_time(TORUS, np.zeros(2), r, h, RandomSource(11), 3000)
    raw = exit_time(TORUS, np.zeros(2), r, h, RandomSource(11), 3000, monitoring_correction=False)
    se = corr.std(ddof=1) / np.sqrt(corr.size)
    assert abs(z(corr.mean(), r * r / 2, se)) < 4
    # uncorrected monitoring overshoots by about 2 r OVERSHOOT sqrt(h) / 2
    assert raw.mean() - r * r / 2 > 3 * se
    assert OVERSHOOT == pytest.approx(0.5825971579390106)


def test_step_guards():
    with pytest.raises(ValueError):
        sample_path(TORUS, np.zeros(2), 0.1, h=1.0, source=RandomSource(0))
    with pytest.raises(ValueError):
        sample_path(TORUS, np.zeros(2), -0.1, source=RandomSource(0))
    with pytest.raises(NotImplementedError):
        sample_path(Teardrop(2), np.array([1.0, 0.0]), 0.05, source=RandomSource(0))
    with pytest.raises(ValueError):
        exit_time(TORUS, np.zeros(2), 1e-3, 1e-2, RandomSource(0), 3)


def test_path_dump_guard():
    p = sample_path(TORUS, np.zeros(2), 0.01, None, RandomSource(0), 3)
    rows = path_dump_rows(p)
    assert len(rows) == 3 * len(p.times)
    with pytest.raises(ValueError):
        path_dump_rows(p, limit=10)
