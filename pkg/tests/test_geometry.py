import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from transindex.geometry import (CATALOG_NAMES, FlatTorus, Football, RoundSphere, Teardrop, catalog,
                                 fd_gaussian_curvature, magnetic_twist, monopole_twist,
                                 parallel_transport, trivial_twist)

TWO_PI = 2 * np.pi
angle = st.floats(0.05, np.pi - 0.05)
turn = st.floats(0, TWO_PI)


def sphere_point(theta, phi):
    return np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])


@pytest.mark.parametrize("g, area", [
    (FlatTorus(), TWO_PI ** 2), (FlatTorus(2.0, 3.0), 6.0), (RoundSphere(), 4 * np.pi),
    (Football(2), 2 * np.pi), (Football(3), 4 * np.pi / 3)])
def test_quadrature_volume(g, area):
    _, w = g.quadrature(16)
    assert np.sum(w) == pytest.approx(area, rel=1e-12)
    assert g.volume() == pytest.approx(area, rel=1e-10)


@pytest.mark.parametrize("g, chi", [
    (FlatTorus(), 0.0), (RoundSphere(), 2.0), (Football(2), 1.0), (Football(3), 2 / 3),
    (Teardrop(2), 1.5), (Teardrop(3), 4 / 3)])
def test_orbifold_gauss_bonnet(g, chi):
    pts, w = g.quadrature(24)
    assert np.sum(w * g.gaussian_curvature(pts)) == pytest.approx(TWO_PI * chi, abs=1e-8)


def test_teardrop_curvature_matches_metric_fd():
    g = Teardrop(2)
    for psi in (0.4, 1.0, 1.9, 2.4):
        metric = lambda u: np.diag([1.0, g.f(u[0]) ** 2])
        assert fd_gaussian_curvature(metric, np.array([psi, 0.3])) == pytest.approx(
            float(g.gaussian_curvature(np.array([psi, 0.3]))), abs=2e-4)


@settings(max_examples=25, deadline=None)
@given(a=angle, b=turn, c=angle, d=turn)
def test_sphere_distance_symmetric_and_bounded(a, b, c, d):
    g = RoundSphere()
    x, y = sphere_point(a, b)[None], sphere_point(c, d)[None]
    assert g.distance(x, y)[0] == pytest.approx(g.distance(y, x)[0], abs=1e-12)
    assert 0 <= g.distance(x, y)[0] <= np.pi + 1e-12


@settings(max_examples=25, deadline=None)
@given(a=angle, b=turn, c=angle, d=turn)
def test_sphere_exp_log_roundtrip(a, b, c, d):
    g = RoundSphere()
    x, y = sphere_point(a, b)[None], sphere_point(c, d)[None]
    if g.distance(x, y)[0] > np.pi - 1e-3:
        return
    assert np.allclose(g.exp(x, g.log(x, y)), y, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(x=st.tuples(turn, turn), y=st.tuples(turn, turn))
def test_torus_distance_matches_wrapped_norm(x, y):
    g = FlatTorus()
    d = np.abs(np.array(x) - np.array(y))
    d = np.minimum(d, TWO_PI - d)
    assert g.distance(np.array([x]), np.array([y]))[0] == pytest.approx(np.linalg.norm(d), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(a=angle, b=turn, c=angle, d=turn)
def test_football_distance_is_min_over_images(a, b, c, d):
    g = Football(3)
    x, y = sphere_point(a, b), sphere_point(c, d)
    cover = RoundSphere()
    best = min(cover.distance(x[None], (ry)[None])[0]
               for ry in g.image_points(y[None])[:, 0])
    assert g.distance(x[None], y[None])[0] == pytest.approx(best, abs=1e-10)


@pytest.mark.parametrize("g", [FlatTorus(), RoundSphere(), Teardrop(2)])
def test_frames_are_orthonormal(g):
    rng = np.random.default_rng(1)
    x = g.random_points(rng, 6)
    if isinstance(g, RoundSphere):
        x = g.fold(x)[0]
    E = g.frame(x)
    for i in range(2):
        for j in range(2):
            assert np.allclose(g.inner(x, E[..., i], E[..., j]), float(i == j), atol=1e-12)


def test_teardrop_distance_symmetric_and_triangle():
    g = Teardrop(2)
    pts = np.array([[0.5, 0.1], [1.4, 2.0], [2.3, 4.0]])
    d = lambda a, b: float(g.distance(pts[a][None], pts[b][None])[0])
    assert d(0, 1) == pytest.approx(d(1, 0), abs=1e-8)
    assert d(0, 2) <= d(0, 1) + d(1, 2) + 1e-8
    # along a meridian the distance is the difference of psi
    assert float(g.distance(np.array([[0.5, 1.0]]), np.array([[1.5, 1.0]]))[0]) == pytest.approx(1.0, abs=1e-8)


def test_isotropy_orders():
    assert Football(3).isotropy_order(np.array([0.0, 0.0, 1.0])) == 3
    assert Football(3).isotropy_order(sphere_point(1.0, 0.2)) == 1
    g = Teardrop(2)
    assert g.isotropy_order(np.array([g.Lpsi, 0.0])) == 2
    assert g.isotropy_order(np.array([1.0, 0.0])) == 1


@pytest.mark.parametrize("name", ["flat-torus", "hopf", "hopf-p2", "lens-3", "teardrop-2",
                                  "football-2"])
def test_action_preserves_projection(name):
    sp = catalog(name)
    rng = np.random.default_rng(2)
    u = sp.random_X(rng, 5)
    for th in (0.3, 2.0, 5.5):
        assert np.allclose(sp.project(sp.act(th, u)), sp.project(u), atol=1e-9)


@pytest.mark.parametrize("name, p", [("flat-torus", 1), ("hopf", 1), ("hopf-p2", 2), ("lens-3", 1)])
def test_least_isotropy(name, p):
    sp = catalog(name)
    assert sp.p == p
    assert sp.least_isotropy() == p


def test_section_projects_back():
    for name in ("hopf", "teardrop-2", "flat-torus"):
        sp = catalog(name)
        x = sp.base.random_points(np.random.default_rng(3), 5)
        if name == "hopf":
            x = x[x[:, 2] > -0.9]
        assert np.allclose(sp.project(sp.section(x)), x, atol=1e-9)


# independent values: sphere fibrations with weight w have e = -1/w (per quotient);
# on the teardrop the section pull-back climbs from 0 to 1/q
@pytest.mark.parametrize("name, euler", [("flat-torus", 0.0), ("hopf", -1.0), ("hopf-p2", -0.5),
                                         ("lens-3", -3.0), ("teardrop-2", 0.5), ("teardrop-3", 1 / 3)])
def test_euler_numbers(name, euler):
    assert catalog(name).euler_number() == pytest.approx(euler, abs=1e-9)


@pytest.mark.parametrize("name", ["hopf", "teardrop-2"])
def test_d_omega0_closed_form_matches_curl(name):
    sp = catalog(name)
    if name == "hopf":
        x = np.array([sphere_point(1.0, 0.4), sphere_point(2.0, 1.5)])
    else:
        x = np.array([[0.7, 0.3], [1.9, 2.0], [2.3, 5.0]])
    # the sphere curl walks a geodesic square that only closes to O(h)
    tol = 2e-3 if name == "hopf" else 5e-5
    assert np.allclose(sp.d_omega0(x), sp.d_omega0_fd(x), atol=tol)


def test_catalog_names_and_errors():
    assert "hopf" in CATALOG_NAMES
    assert catalog("lens-q", q=5).name == "lens-5"
    assert catalog("football", q=3).base.q == 3
    with pytest.raises(ValueError):
        catalog("klein-bottle")


def test_twist_chern_numbers():
    for k in (-2, 0, 3):
        tw = monopole_twist(k)
        assert tw.chern_number_density() * 4 * np.pi == pytest.approx(k)
    torus = FlatTorus()
    assert magnetic_twist(2, torus).chern_number_density() * torus.area == pytest.approx(2)
    assert trivial_twist(2).rank == 2


def test_torus_transport_is_trivial_holonomy():
    g = FlatTorus()
    loop = np.array([[1.0, 1.0], [1.5, 1.0], [1.5, 1.5], [1.0, 1.5], [1.0, 1.0]])
    assert np.allclose(parallel_transport(g, loop), np.eye(2))


def test_sphere_transport_rotates_by_enclosed_area():
    g = RoundSphere()
    # small latitude-longitude quadrilateral: holonomy angle = enclosed area
    th, ph = np.linspace(0.6, 0.7, 21), np.linspace(0.0, 0.1, 21)
    loop = np.concatenate([
        [sphere_point(0.6, p) for p in ph], [sphere_point(t, 0.1) for t in th[1:]],
        [sphere_point(0.7, p) for p in ph[::-1][1:]], [sphere_point(t, 0.0) for t in th[::-1][1:]]])
    Q = parallel_transport(g, loop)
    area = 0.1 * (np.cos(0.6) - np.cos(0.7))
    assert abs(np.arctan2(Q[1, 0], Q[0, 0])) == pytest.approx(area, rel=1e-2)


def test_sphere_signed_area_of_octant():
    g = RoundSphere()
    a = g.signed_area(np.array([[0.0, 0.0, 1.0]]), np.array([[1.0, 0.0, 0.0]]),
                      np.array([[0.0, 1.0, 0.0]]))
    assert abs(float(a[0])) == pytest.approx(np.pi / 2, abs=1e-12)
