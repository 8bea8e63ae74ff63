"""Model S^1-spaces, their quotient orbifolds and twist bundles.

Points of M are numpy arrays with a trailing coordinate axis:

  circle        angle, shape (..., 1)
  flat torus    (x, y) in the period box, shape (..., 2)
  sphere        vectors of norm R in R^3, shape (..., 3)
  football      unit vectors folded into the wedge 0 <= azimuth < 2pi/q
  teardrop      (psi, phi), psi in [0, L] the distance from the smooth pole

Tangent vectors use the same ambient representation (R^3 tangent vectors on
the sphere, coordinate components on the teardrop).  Orientation: on the
sphere an oriented frame (e1, e2) satisfies e1 x e2 = outward normal.

Curvature: R_{1212} = K (sectional curvature), S = sum_ij R_{ijij} = 2K.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import legendre as _leg
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

TWO_PI = 2.0 * np.pi


# --------------------------------------------------------------------------
# small helpers

def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1.  Returns (s, s', s'')."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)

    def piece(z):
        pos = z > 0
        zz = np.where(pos, z, 1.0)
        v = np.where(pos, np.exp(-1.0 / zz), 0.0)
        v1 = np.where(pos, v / zz ** 2, 0.0)
        v2 = np.where(pos, v * (1.0 / zz ** 4 - 2.0 / zz ** 3), 0.0)
        return v, v1, v2

    a0, a1, a2 = piece(x)
    b0, b1, b2 = piece(1.0 - x)
    b1 = -b1
    s = a0 + b0
    s1 = a1 + b1
    s2 = a2 + b2
    f = a0 / s
    num = a1 * s - a0 * s1
    f1 = num / s ** 2
    f2 = (a2 * s - a0 * s2) / s ** 2 - 2.0 * s1 * num / s ** 3
    return f, f1, f2


@dataclass(frozen=True)
class Bump:
    """Radial cutoff: 1 inside ``inner``, 0 beyond ``outer`` (chart radius)."""
    inner: float
    outer: float

    def __call__(self, r):
        s, _, _ = smooth_step((np.asarray(r, float) - self.inner) / (self.outer - self.inner))
        return 1.0 - s


def _wrap(a):
    """Wrap angles to [-pi, pi)."""
    return (np.asarray(a) + np.pi) % TWO_PI - np.pi


def _rot2(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s], [s, c]])


def _rotz(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def gauss_legendre(a, b, n):
    x, w = _leg.leggauss(n)
    return 0.5 * (b - a) * (x + 1) + a, 0.5 * (b - a) * w


# --------------------------------------------------------------------------
# charts

@dataclass(eq=False)
class OrbifoldChart:
    """Coordinate patch (U~, G, pi) with cutoffs.

    ``to_chart`` maps points of M to one chart representative,
    ``from_chart`` maps chart coordinates to M.  The group acts linearly on
    the chart coordinates by the matrices in ``group``.
    """
    name: str
    center: np.ndarray
    radius: float
    group: Sequence[np.ndarray]
    to_chart: Callable
    from_chart: Callable
    metric: Callable
    closure_distance: Callable
    psi: Bump
    rho: Bump
    near_radius: float

    @property
    def order(self):
        return len(self.group)

    def contains(self, x):
        return np.linalg.norm(self.to_chart(x), axis=-1) < self.radius


def _polar_metric(profile):
    """Metric in polar-normal coordinates u for a rotationally symmetric
    patch with circumference profile f(r) (round: sin r, flat: r)."""
    def metric(u):
        u = np.asarray(u, float)
        r = np.linalg.norm(u, axis=-1)[..., None, None]
        rs = np.where(r < 1e-12, 1.0, r)
        rhat = u[..., :, None] / rs[..., 0]
        P = rhat * np.swapaxes(rhat, -1, -2)
        fr = np.where(r < 1e-12, 1.0, profile(rs) / rs)
        P = np.where(r < 1e-12, 0.0, P)
        eye = np.eye(u.shape[-1])
        return P + fr ** 2 * (eye - P)
    return metric


def _cap_distance(radius):
    """Distance between polar-normal coordinates on a round cap."""
    def dist(u, v):
        p = _cap_point(u, radius)
        q = _cap_point(v, radius)
        c = np.clip(np.sum(p * q, axis=-1) / radius ** 2, -1.0, 1.0)
        return radius * np.arccos(c)
    return dist


def _cap_point(u, radius):
    u = np.asarray(u, float)
    r = np.linalg.norm(u, axis=-1, keepdims=True)
    rs = np.where(r < 1e-15, 1.0, r)
    a = r / radius
    return radius * np.concatenate([np.sin(a) * u / rs, np.cos(a)], axis=-1)


def _flat_distance(u, v):
    return np.linalg.norm(np.asarray(u) - np.asarray(v), axis=-1)


# --------------------------------------------------------------------------
# geometries

class ModelGeometry:
    """Base class; subclasses supply the closed forms."""
    name = "geometry"
    dim = 2
    injectivity_floor = np.pi
    curvature_constant: Optional[float] = None   # set when K is constant

    # -- to be provided ----------------------------------------------------
    def distance(self, x, y):
        raise NotImplementedError

    def exp(self, x, v):
        raise NotImplementedError

    def log(self, x, y):
        raise NotImplementedError

    def frame(self, x):
        raise NotImplementedError

    def gaussian_curvature(self, x):
        raise NotImplementedError

    def quadrature(self, order):
        raise NotImplementedError

    def random_points(self, rng, size):
        raise NotImplementedError

    # -- shared ------------------------------------------------------------
    def fold(self, x):
        """Reduce into the fundamental domain; returns (point, group matrix)."""
        return x, None

    def isotropy_order(self, x):
        return np.ones(np.shape(x)[:-1], dtype=int)

    def is_principal(self, x):
        return self.isotropy_order(x) == 1

    def inner(self, x, v, w):
        return np.sum(np.asarray(v) * np.asarray(w), axis=-1)

    def norm(self, x, v):
        return np.sqrt(np.maximum(self.inner(x, v, v), 0.0))

    def scalar_curvature(self, x):
        return 2.0 * self.gaussian_curvature(x)

    def riemann(self, x):
        """R_{ijkl} in an oriented orthonormal frame, shape (..., n, n, n, n)."""
        K = np.asarray(self.gaussian_curvature(x), float)
        n = self.dim
        d = np.eye(n)
        base = np.einsum('ik,jl->ijkl', d, d) - np.einsum('il,jk->ijkl', d, d)
        return K[..., None, None, None, None] * base

    def volume(self):
        _, w = self.quadrature(64)
        return float(np.sum(w))

    def step(self, x, v, frame):
        """Geodesic step with parallel transport of ``frame``.

        Returns (new point, transported frame, folding matrix or None).
        """
        raise NotImplementedError

    def signed_area(self, base, a, b):
        """Signed area of the geodesic triangle (base, a, b) on the cover."""
        raise NotImplementedError

    def cover_point(self, x):
        return x


class Circle(ModelGeometry):
    """Circle of given circumference; a one-dimensional sanity geometry."""
    dim = 1

    def __init__(self, length=TWO_PI):
        self.length = float(length)
        self.name = "circle"
        self.injectivity_floor = self.length / 2
        self.curvature_constant = 0.0
        self.lattice = np.array([[self.length]])
        self.atlas = []

    def distance(self, x, y):
        d = np.abs(_wrap((np.asarray(x)[..., 0] - np.asarray(y)[..., 0]) * TWO_PI / self.length))
        return d * self.length / TWO_PI

    def fold(self, x):
        return np.mod(x, self.length), None

    def exp(self, x, v):
        return np.mod(np.asarray(x) + v, self.length)

    def frame(self, x):
        return np.ones(np.shape(x)[:-1] + (1, 1))

    def gaussian_curvature(self, x):
        return np.zeros(np.shape(x)[:-1])

    def scalar_curvature(self, x):
        return np.zeros(np.shape(x)[:-1])

    def quadrature(self, order):
        x = (np.arange(order) + 0.5) * self.length / order
        return x[:, None], np.full(order, self.length / order)

    def random_points(self, rng, size):
        return rng.uniform(0, self.length, size=(size, 1))


class FlatTorus(ModelGeometry):
    """Flat rectangular torus R^2 / (L1 Z x L2 Z)."""
    dim = 2

    def __init__(self, L1=TWO_PI, L2=TWO_PI):
        self.L = np.array([float(L1), float(L2)])
        self.name = "flat-torus"
        self.injectivity_floor = float(self.L.min() / 2)
        self.curvature_constant = 0.0
        self.lattice = np.diag(self.L)
        self.atlas = self._build_atlas()

    @property
    def area(self):
        return float(self.L[0] * self.L[1])

    def _build_atlas(self):
        charts = []
        eps = self.injectivity_floor / 4
        rad = 0.95 * self.injectivity_floor
        step = self.L / 3
        for i in range(3):
            for j in range(3):
                c = np.array([(i + 0.5) * step[0], (j + 0.5) * step[1]])
                charts.append(OrbifoldChart(
                    name=f"torus-{i}{j}", center=c, radius=rad,
                    group=[np.eye(2)],
                    to_chart=lambda x, c=c: self.log(c, x),
                    from_chart=lambda u, c=c: self.exp(c, u),
                    metric=_polar_metric(lambda r: r),
                    closure_distance=_flat_distance,
                    psi=Bump(0.7 * rad, 0.9 * rad),
                    rho=Bump(0.55 * rad, 0.68 * rad),
                    near_radius=eps))
        return charts

    def fold(self, x):
        return np.mod(x, self.L), None

    def log(self, x, y):
        d = np.asarray(y) - np.asarray(x)
        return d - self.L * np.round(d / self.L)

    def distance(self, x, y):
        return np.linalg.norm(self.log(x, y), axis=-1)

    def exp(self, x, v):
        return np.mod(np.asarray(x) + v, self.L)

    def step(self, x, v, frame):
        return np.asarray(x) + v, frame, None

    def frame(self, x):
        return np.broadcast_to(np.eye(2), np.shape(x)[:-1] + (2, 2)).copy()

    def gaussian_curvature(self, x):
        return np.zeros(np.shape(x)[:-1])

    def quadrature(self, order):
        n1 = n2 = int(order)
        g1 = (np.arange(n1) + 0.5) * self.L[0] / n1
        g2 = (np.arange(n2) + 0.5) * self.L[1] / n2
        X, Y = np.meshgrid(g1, g2, indexing='ij')
        pts = np.stack([X.ravel(), Y.ravel()], axis=-1)
        return pts, np.full(pts.shape[0], self.area / (n1 * n2))

    def random_points(self, rng, size):
        return rng.uniform(0, 1, size=(size, 2)) * self.L

    def signed_area(self, base, a, b):
        u = np.asarray(a) - base
        w = np.asarray(b) - base
        return 0.5 * (u[..., 0] * w[..., 1] - u[..., 1] * w[..., 0])


class RoundSphere(ModelGeometry):
    """Round 2-sphere of radius R embedded in R^3."""
    dim = 2

    def __init__(self, radius=1.0):
        self.R = float(radius)
        self.name = "sphere"
        self.injectivity_floor = np.pi * self.R
        self.curvature_constant = 1.0 / self.R ** 2
        self.atlas = self._build_atlas()

    # geometry ------------------------------------------------------------
    def _unit(self, x):
        return np.asarray(x, float) / self.R

    def cover_distance(self, x, y):
        c = np.clip(np.sum(self._unit(x) * self._unit(y), axis=-1), -1.0, 1.0)
        # arccos loses accuracy near 0; use atan2 of cross and dot
        cr = np.linalg.norm(np.cross(self._unit(x), self._unit(y)), axis=-1)
        return self.R * np.arctan2(cr, c)

    def distance(self, x, y):
        return self.cover_distance(x, y)

    def exp(self, x, v):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        a = nv / self.R
        safe = np.where(nv < 1e-300, 1.0, nv)
        out = np.cos(a) * x + self.R * np.sin(a) * v / safe
        return self._renorm(out)

    def _renorm(self, p):
        return self.R * p / np.linalg.norm(p, axis=-1, keepdims=True)

    def log(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        xu = self._unit(x)
        w = y - np.sum(y * xu, axis=-1, keepdims=True) * xu
        nw = np.linalg.norm(w, axis=-1, keepdims=True)
        d = self.cover_distance(x, y)[..., None]
        return np.where(nw < 1e-300, 0.0, w / np.where(nw < 1e-300, 1.0, nw) * d)

    def step(self, x, v, frame):
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        nv = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(nv < 1e-300, 1.0, nv)
        u = v / safe
        a = nv / self.R
        xu = self._unit(x)
        newx = self._renorm(np.cos(a) * x + self.R * np.sin(a) * u)
        # transport: component along u rotates in the (x, u) plane
        comp = np.einsum('...d,...dk->...k', u, frame)
        moved = (-np.sin(a) * xu + np.cos(a) * u)
        newf = frame + (moved - u)[..., :, None] * comp[..., None, :]
        newf = np.where(nv[..., None] < 1e-300, frame, newf)
        return newx, newf, None

    def frame(self, x):
        """Oriented orthonormal frame; uses e_z as reference away from the
        poles and e_x near them."""
        xu = self._unit(x)
        ref = np.where(np.abs(xu[..., 2:3]) < 0.9, np.array([0.0, 0.0, 1.0]),
                       np.array([1.0, 0.0, 0.0]))
        e1 = ref - np.sum(ref * xu, axis=-1, keepdims=True) * xu
        e1 = e1 / np.linalg.norm(e1, axis=-1, keepdims=True)
        e2 = np.cross(xu, e1)
        return np.stack([e1, e2], axis=-1)

    def gaussian_curvature(self, x):
        return np.full(np.shape(x)[:-1], 1.0 / self.R ** 2)

    def quadrature(self, order):
        nz = int(order)
        nphi = 2 * nz
        z, wz = _leg.leggauss(nz)
        phi = (np.arange(nphi) + 0.5) * TWO_PI / nphi
        Z, P = np.meshgrid(z, phi, indexing='ij')
        s = np.sqrt(1 - Z ** 2)
        pts = self.R * np.stack([s * np.cos(P), s * np.sin(P), Z], axis=-1).reshape(-1, 3)
        w = (self.R ** 2 * wz[:, None] * np.full(nphi, TWO_PI / nphi)[None, :]).ravel()
        return pts, w

    def random_points(self, rng, size):
        g = rng.normal(size=(size, 3))
        return self.R * g / np.linalg.norm(g, axis=-1, keepdims=True)

    def signed_area(self, base, a, b):
        """Van Oosterom-Strackee signed solid angle times R^2."""
        p = self._unit(base)
        q = self._unit(a)
        r = self._unit(b)
        num = np.sum(p * np.cross(q, r), axis=-1)
        den = 1.0 + np.sum(p * q, axis=-1) + np.sum(q * r, axis=-1) + np.sum(r * p, axis=-1)
        return 2.0 * np.arctan2(num, den) * self.R ** 2

    # charts --------------------------------------------------------------
    def _polar_patch(self, name, center, frame, group, radius, eps):
        R = self.R

        def to_chart(x, c=center, E=frame):
            return np.einsum('...d,dk->...k', self.log(c, self.cover_point(x)), E)

        def from_chart(u, c=center, E=frame):
            return self.exp(np.broadcast_to(c, np.shape(u)[:-1] + (3,)),
                            np.einsum('dk,...k->...d', E, u))

        return OrbifoldChart(
            name=name, center=center, radius=radius, group=group,
            to_chart=to_chart, from_chart=from_chart,
            metric=_polar_metric(lambda r: R * np.sin(r / R)),
            closure_distance=_cap_distance(R),
            psi=Bump(1.1 * R, 1.25 * R), rho=Bump(0.96 * R, 1.05 * R),
            near_radius=eps)

    def _axis_frame(self, c):
        E = self.frame(c[None])[0]
        return E

    def _build_atlas(self):
        charts = []
        eps = self.injectivity_floor / 4
        for k, c in enumerate(np.vstack([np.eye(3), -np.eye(3)])):
            c = self.R * c
            charts.append(self._polar_patch(f"cap-{k}", c, self._axis_frame(c),
                                            [np.eye(2)], 1.3 * self.R, eps))
        return charts


class Football(RoundSphere):
    """Global quotient S^2 / Z_q, rotation about the z axis; cone points of
    order q at both poles."""

    def __init__(self, q=2):
        self.q = int(q)
        if self.q < 2:
            raise ValueError("football needs q >= 2")
        super().__init__(1.0)
        self.name = f"football-{self.q}"
        self.images = [_rotz(TWO_PI * j / self.q) for j in range(self.q)]
        self.atlas = self._build_football_atlas()

    def fold(self, x):
        x = np.asarray(x, float)
        az = np.arctan2(x[..., 1], x[..., 0])
        j = np.floor(np.mod(az, TWO_PI) / (TWO_PI / self.q)).astype(int)
        ang = -j * TWO_PI / self.q
        c, s = np.cos(ang), np.sin(ang)
        out = np.stack([c * x[..., 0] - s * x[..., 1], s * x[..., 0] + c * x[..., 1], x[..., 2]], axis=-1)
        G = np.zeros(np.shape(ang) + (3, 3))
        G[..., 0, 0] = c
        G[..., 0, 1] = -s
        G[..., 1, 0] = s
        G[..., 1, 1] = c
        G[..., 2, 2] = 1.0
        return out, G

    def image_points(self, y):
        """All q cover images of y, stacked on a new leading axis."""
        return np.stack([np.einsum('ij,...j->...i', g, y) for g in self.images])

    def distance(self, x, y):
        return np.min(self.cover_distance(np.asarray(x)[None], self.image_points(y)), axis=0)

    def exp(self, x, v):
        return self.fold(super().exp(x, v))[0]

    def log(self, x, y):
        imgs = self.image_points(y)
        d = self.cover_distance(np.asarray(x)[None], imgs)
        k = np.argmin(d, axis=0)
        best = np.take_along_axis(imgs, k[None, ..., None], axis=0)[0]
        return super().log(x, best)

    def step(self, x, v, frame):
        newx, newf, _ = super().step(x, v, frame)
        folded, G = self.fold(newx)
        return folded, np.einsum('...ij,...jk->...ik', G, newf), G

    def isotropy_order(self, x):
        xu = np.asarray(x, float)
        pole = np.hypot(xu[..., 0], xu[..., 1]) < 1e-9
        return np.where(pole, self.q, 1)

    def quadrature(self, order):
        pts, w = super().quadrature(order)
        return self.fold(pts)[0], w / self.q

    def random_points(self, rng, size):
        return self.fold(super().random_points(rng, size))[0]

    def _build_football_atlas(self):
        charts = []
        eps = self.injectivity_floor / 4
        rot = [_rot2(TWO_PI * j / self.q) for j in range(self.q)]
        for k, c in enumerate([np.array([0, 0, 1.0]), np.array([0, 0, -1.0])]):
            charts.append(self._polar_patch(f"cone-{k}", c, self._axis_frame(c), rot, 1.3, eps))
        wedge = TWO_PI / self.q
        m = int(np.ceil(wedge / (np.pi / 4)))
        for j in range(m):
            a = j * wedge / m
            c = np.array([np.cos(a), np.sin(a), 0.0])
            charts.append(self._polar_patch(f"band-{j}", c, self._axis_frame(c), [np.eye(2)], 1.3, eps))
        return charts


class SurfaceOfRevolution(ModelGeometry):
    """Metric d psi^2 + f(psi)^2 d phi^2 on [0, L] x R/2piZ.

    ``profile(psi)`` returns (f, f', f'').  f vanishes at both ends; the end
    slopes fix the cone angles.  Geodesic distances use the Clairaut
    integral with a root search over the Clairaut constant.
    """
    dim = 2

    def __init__(self, profile, length, name="revolution", breaks=()):
        self.profile = profile
        self.Lpsi = float(length)
        self.name = name
        self.breaks = tuple(float(b) for b in breaks)
        grid = np.linspace(0, self.Lpsi, 4001)
        f = self.profile(grid)[0]
        i = int(np.argmax(f))
        self.psi_max = brentq(lambda s: self.profile(s)[1], grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)])
        self.f_max = float(self.profile(self.psi_max)[0])
        self._gl_u, self._gl_w = gauss_legendre(0.0, 1.0, 96)

    # basic pieces --------------------------------------------------------
    def f(self, psi):
        return self.profile(psi)[0]

    def gaussian_curvature(self, x):
        psi = np.asarray(x, float)[..., 0]
        f, _, f2 = self.profile(psi)
        fs = np.where(f < 1e-12, 1.0, f)
        K = -f2 / fs
        # limits at the poles from the profile's Taylor data
        K0 = self._pole_curvature(0.0)
        KL = self._pole_curvature(self.Lpsi)
        return np.where(f < 1e-12, np.where(psi < self.Lpsi / 2, K0, KL), K)

    def _pole_curvature(self, psi0):
        h = 1e-3
        s = psi0 + (h if psi0 == 0.0 else -h)
        f, _, f2 = self.profile(s)
        return float(-f2 / f)

    def inner(self, x, v, w):
        psi = np.asarray(x, float)[..., 0]
        f = self.f(psi)
        return v[..., 0] * w[..., 0] + f ** 2 * v[..., 1] * w[..., 1]

    def frame(self, x):
        psi = np.asarray(x, float)[..., 0]
        f = self.f(psi)
        E = np.zeros(np.shape(psi) + (2, 2))
        E[..., 0, 0] = 1.0
        E[..., 1, 1] = 1.0 / np.where(f < 1e-12, np.nan, f)
        return E

    def quadrature(self, order):
        """Gauss-Legendre panels in psi (split at the profile's blend
        points, blends subdivided) times a uniform grid in phi."""
        edges = [0.0]
        for a, b in zip(self.breaks[0::2], self.breaks[1::2]):
            edges += list(np.linspace(a, b, 5))
        edges.append(self.Lpsi)
        parts = [gauss_legendre(lo, hi, int(order)) for lo, hi in zip(edges[:-1], edges[1:])]
        psi = np.concatenate([p[0] for p in parts])
        wpsi = np.concatenate([p[1] for p in parts])
        nphi = 2 * int(order)
        phi = (np.arange(nphi) + 0.5) * TWO_PI / nphi
        P, F = np.meshgrid(psi, phi, indexing='ij')
        pts = np.stack([P.ravel(), F.ravel()], axis=-1)
        w = (wpsi[:, None] * self.f(psi)[:, None] * np.full(nphi, TWO_PI / nphi)[None, :]).ravel()
        return pts, w

    def random_points(self, rng, size):
        out = []
        while sum(len(o) for o in out) < size:
            psi = rng.uniform(0, self.Lpsi, size=4 * size)
            keep = rng.uniform(0, self.f_max, size=psi.size) < self.f(psi)
            out.append(psi[keep])
        psi = np.concatenate(out)[:size]
        return np.stack([psi, rng.uniform(0, TWO_PI, size=size)], axis=-1)

    # geodesics -----------------------------------------------------------
    def _band_edge(self, c, upper):
        if upper:
            return brentq(lambda s: self.f(s) - c, self.psi_max, self.Lpsi, xtol=1e-15)
        return brentq(lambda s: self.f(s) - c, 0.0, self.psi_max, xtol=1e-15)

    def _to_turn(self, psi_s, psi_t, c):
        """(dphi, length) from psi_s to a turning point psi_t where f = c."""
        u = self._gl_u
        delta = psi_s - psi_t
        psi = psi_t + delta * u ** 2
        f = self.f(psi)
        ft, f1t, f2t = self.profile(psi_t)
        # f(psi) - f(psi_t) without cancellation near the turning point
        s = delta * u ** 2
        diff = np.where(np.abs(s) < 1e-4, f1t * s + 0.5 * f2t * s * s, f - ft)
        root = np.sqrt(np.maximum(np.abs(diff) * (f + ft), 1e-300))
        jac = 2.0 * np.abs(delta) * u
        return (np.sum(self._gl_w * ft / (f * root) * jac),
                np.sum(self._gl_w * f / root * jac))

    def _plain(self, a, b, c):
        """(dphi, length) between psi = a < b with f > c throughout."""
        if b - a < 1e-15:
            return 0.0, 0.0
        fa, fb = self.f(a), self.f(b)
        # cluster nodes at the endpoint where f is closest to c
        u = self._gl_u
        if fa <= fb:
            psi = a + (b - a) * u ** 2
            jac = 2.0 * (b - a) * u
        else:
            psi = b - (b - a) * u ** 2
            jac = 2.0 * (b - a) * u
        f = self.f(psi)
        root = np.sqrt(np.maximum(f ** 2 - c ** 2, 1e-300))
        return (np.sum(self._gl_w * c / (f * root) * jac),
                np.sum(self._gl_w * f / root * jac))

    def _route(self, kind, p1, p2, c):
        lo, hi = min(p1, p2), max(p1, p2)
        if kind == "direct":
            return self._plain(lo, hi, c)
        if kind == "upper":
            b = max(self._band_edge(c, True), hi)
        else:
            b = min(self._band_edge(c, False), lo)
        a1 = self._to_turn(p1, b, c)
        a2 = self._to_turn(p2, b, c)
        return a1[0] + a2[0], a1[1] + a2[1]

    def _route_cmax(self, kind, p1, p2):
        lo, hi = min(p1, p2), max(p1, p2)
        if kind == "direct":
            g = np.linspace(lo, hi, 201)
            return min(float(np.min(self.f(g))), self.f(lo), self.f(hi))
        return min(self.f(p1), self.f(p2))

    def _geodesics(self, x, y):
        """Candidate geodesics (length, c, kind, direction sign)."""
        p1, f1 = float(x[0]), None
        p2 = float(y[0])
        dphi = float(_wrap(y[1] - x[1]))
        out = []
        # broken paths through the poles are always admissible upper bounds
        out.append((p1 + p2, 0.0, "pole", 1.0))
        out.append((2 * self.Lpsi - p1 - p2, 0.0, "tip", 1.0))
        if min(self.f(p1), self.f(p2)) < 1e-12:
            return out
        if abs(dphi) < 1e-14:
            out.append((abs(p1 - p2), 0.0, "direct", 1.0))
        sgn = 1.0 if dphi >= 0 else -1.0
        targets = [(abs(dphi), sgn), (TWO_PI - abs(dphi), -sgn)]
        for kind in ("direct", "upper", "lower"):
            cmax = self._route_cmax(kind, p1, p2)
            if kind == "upper" and max(p1, p2) > self.Lpsi:
                continue
            cs = cmax * (1 - np.cos(np.linspace(0, np.pi / 2, 48)) ** 1)[1:]
            cs = np.concatenate([cs[:-1], [cmax * (1 - 1e-9)]])
            vals = np.array([self._route(kind, p1, p2, c)[0] for c in cs])
            for tgt, s in targets:
                g = vals - tgt
                for i in range(len(cs) - 1):
                    if g[i] == 0.0 or g[i] * g[i + 1] < 0:
                        try:
                            c = brentq(lambda cc: self._route(kind, p1, p2, cc)[0] - tgt,
                                       cs[i], cs[i + 1], xtol=1e-15, rtol=1e-15)
                        except ValueError:
                            continue
                        out.append((self._route(kind, p1, p2, c)[1], c, kind, s))
        return out

    def distance(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
        xb = np.broadcast_to(x, shape + (2,)).reshape(-1, 2)
        yb = np.broadcast_to(y, shape + (2,)).reshape(-1, 2)
        out = np.array([min(g[0] for g in self._geodesics(a, b)) for a, b in zip(xb, yb)])
        return out.reshape(shape)

    def _rhs(self, s, z):
        psi, phi, th = z
        f, f1, _ = self.profile(psi)
        return [np.cos(th), np.sin(th) / f, -f1 * np.sin(th) / f]

    def exp(self, x, v):
        """Geodesic ODE in (psi, phi, heading); not valid through a pole."""
        x = np.asarray(x, float)
        v = np.asarray(v, float)
        shape = np.broadcast_shapes(x.shape, v.shape)[:-1]
        xb = np.broadcast_to(x, shape + (2,)).reshape(-1, 2)
        vb = np.broadcast_to(v, shape + (2,)).reshape(-1, 2)
        out = np.empty_like(xb)
        for i, (p, w) in enumerate(zip(xb, vb)):
            f = self.f(p[0])
            a, b = w[0], f * w[1]
            ln = np.hypot(a, b)
            if ln < 1e-300:
                out[i] = p
                continue
            th = np.arctan2(b, a)
            sol = solve_ivp(self._rhs, (0, ln), [p[0], p[1], th], method="DOP853",
                            rtol=1e-13, atol=1e-14)
            out[i] = [sol.y[0, -1], np.mod(sol.y[1, -1], TWO_PI)]
        return out.reshape(shape + (2,))

    def log(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        shape = np.broadcast_shapes(x.shape, y.shape)[:-1]
        xb = np.broadcast_to(x, shape + (2,)).reshape(-1, 2)
        yb = np.broadcast_to(y, shape + (2,)).reshape(-1, 2)
        out = np.zeros_like(xb)
        for i, (a, b) in enumerate(zip(xb, yb)):
            best = min(self._geodesics(a, b), key=lambda g: g[0])
            ln, c, kind, s = best
            f = self.f(a[0])
            if kind in ("pole", "tip") or f < 1e-12:
                up = kind == "tip" or (kind == "direct" and b[0] > a[0])
                out[i] = [ln if up else -ln, 0.0]
                if kind == "direct":
                    out[i] = [b[0] - a[0], 0.0]
                continue
            sin_t = c / f
            cos_t = np.sqrt(max(1 - sin_t ** 2, 0.0))
            if kind == "upper" or (kind == "direct" and b[0] > a[0]):
                sign_psi = 1.0
            elif kind == "lower" or (kind == "direct" and b[0] < a[0]):
                sign_psi = -1.0
            else:
                sign_psi = 0.0
            out[i] = [ln * sign_psi * cos_t, ln * s * sin_t / f]
        return out.reshape(shape + (2,))

    def geodesic_point(self, x, y, frac):
        """Point at fraction ``frac`` along a minimizing geodesic."""
        v = self.log(x, y)
        return self.exp(x, frac * v)


def teardrop_profile(q, neck=(1.7, 2.2), length=2.6):
    """Round cap near the smooth pole, cone of angle 2pi/q (rounded at the
    tip, K = 1 there) near the other end, joined by a smooth blend."""
    a, b = neck

    def profile(psi):
        psi = np.asarray(psi, float)
        s, s1, s2 = smooth_step((psi - a) / (b - a))
        k = 1.0 / (b - a)
        s1 = s1 * k
        s2 = s2 * k * k
        g, g1, g2 = np.sin(psi), np.cos(psi), -np.sin(psi)
        r = length - psi
        h, h1, h2 = np.sin(r) / q, -np.cos(r) / q, -np.sin(r) / q
        f = (1 - s) * g + s * h
        f1 = (1 - s) * g1 + s * h1 + s1 * (h - g)
        f2 = (1 - s) * g2 + s * h2 + 2 * s1 * (h1 - g1) + s2 * (h - g)
        return f, f1, f2
    return profile


class Teardrop(SurfaceOfRevolution):
    """Teardrop orbifold: one cone point of order q at psi = L."""

    def __init__(self, q=2, neck=(1.7, 2.2), length=2.6):
        self.q = int(q)
        super().__init__(teardrop_profile(self.q, neck, length), length, f"teardrop-{self.q}",
                         breaks=neck)
        self.neck = neck
        self.cone_cap = length - neck[1]          # round region around the tip
        self.injectivity_floor = 2 * 0.95 * self.cone_cap
        self.atlas = self._build_atlas()

    def isotropy_order(self, x):
        psi = np.asarray(x, float)[..., 0]
        return np.where(np.abs(psi - self.Lpsi) < 1e-9, self.q, 1)

    def _build_atlas(self):
        q, L = self.q, self.Lpsi
        eps = self.injectivity_floor / 4
        charts = []

        def pole_to(x):
            x = np.asarray(x, float)
            return np.stack([x[..., 0] * np.cos(x[..., 1]), x[..., 0] * np.sin(x[..., 1])], axis=-1)

        def pole_from(u):
            u = np.asarray(u, float)
            return np.stack([np.linalg.norm(u, axis=-1), np.mod(np.arctan2(u[..., 1], u[..., 0]), TWO_PI)], axis=-1)

        r_pole = 1.2
        charts.append(OrbifoldChart(
            name="pole", center=np.array([0.0, 0.0]), radius=r_pole, group=[np.eye(2)],
            to_chart=pole_to, from_chart=pole_from,
            metric=_polar_metric(lambda r: self.f(r)),
            closure_distance=_cap_distance(1.0),
            psi=Bump(0.9, 1.1), rho=Bump(0.8, 0.95), near_radius=eps))

        def cone_to(x):
            x = np.asarray(x, float)
            rho = L - x[..., 0]
            a = np.mod(x[..., 1], TWO_PI) / q
            return np.stack([rho * np.cos(a), rho * np.sin(a)], axis=-1)

        def cone_from(u):
            u = np.asarray(u, float)
            rho = np.linalg.norm(u, axis=-1)
            return np.stack([L - rho, np.mod(q * np.arctan2(u[..., 1], u[..., 0]), TWO_PI)], axis=-1)

        r_cone = 0.95 * self.cone_cap
        charts.append(OrbifoldChart(
            name="cone", center=np.array([L, 0.0]), radius=r_cone,
            group=[_rot2(TWO_PI * j / q) for j in range(q)],
            to_chart=cone_to, from_chart=cone_from,
            metric=_polar_metric(lambda r: q * self.f(L - r)),
            closure_distance=_cap_distance(1.0),
            psi=Bump(0.75 * r_cone, 0.9 * r_cone), rho=Bump(0.6 * r_cone, 0.72 * r_cone),
            near_radius=eps))

        psi_c = 1.6
        for j in range(8):
            phic = j * np.pi / 4

            def band_to(x, phic=phic, psic=psi_c):
                x = np.asarray(x, float)
                return np.stack([x[..., 0] - psic, _wrap(x[..., 1] - phic)], axis=-1)

            def band_from(u, phic=phic, psic=psi_c):
                u = np.asarray(u, float)
                return np.stack([u[..., 0] + psic, np.mod(u[..., 1] + phic, TWO_PI)], axis=-1)

            def band_metric(u, psic=psi_c):
                u = np.asarray(u, float)
                f = self.f(u[..., 0] + psic)
                g = np.zeros(np.shape(u)[:-1] + (2, 2))
                g[..., 0, 0] = 1.0
                g[..., 1, 1] = f ** 2
                return g

            def band_dist(u, v, phic=phic, psic=psi_c):
                return self.distance(band_from(u, phic, psic), band_from(v, phic, psic))

            charts.append(OrbifoldChart(
                name=f"band-{j}", center=np.array([psi_c, phic]), radius=1.1,
                group=[np.eye(2)], to_chart=band_to, from_chart=band_from,
                metric=band_metric, closure_distance=band_dist,
                psi=Bump(1.0, 1.1), rho=Bump(0.9, 1.0),
                near_radius=eps))
        return charts


# --------------------------------------------------------------------------
# chart-level operations

def partition_of_unity(geometry, x):
    """rho_alpha(x) for every chart of the atlas, shape (n_charts, ...)."""
    raw = []
    for ch in geometry.atlas:
        r = np.linalg.norm(ch.to_chart(x), axis=-1)
        raw.append(ch.rho(r))
    raw = np.array(raw)
    tot = raw.sum(axis=0)
    if np.any(tot <= 0):
        raise ValueError("atlas does not cover the sampled points")
    return raw / tot


def orbifold_distance(x, y, chart):
    """min over the chart group of the chart distance; returns (d, index of gamma_0)."""
    xt = chart.to_chart(x)
    yt = chart.to_chart(y)
    if np.any(np.linalg.norm(xt, axis=-1) > chart.radius) or np.any(np.linalg.norm(yt, axis=-1) > chart.radius):
        raise ValueError(f"point outside chart {chart.name}")
    ds = np.array([chart.closure_distance(xt, np.einsum('ij,...j->...i', g, yt)) for g in chart.group])
    k = np.argmin(ds, axis=0)
    return np.take_along_axis(ds, k[None], axis=0)[0], k


def fd_gaussian_curvature(metric, u, h=1e-3):
    """Gaussian curvature from a 2x2 coordinate metric by the Brioschi
    formula with fourth-order central differences."""
    u = np.asarray(u, float)

    def g(a, b):
        return metric(u + np.array([a, b]))

    def d1(i):
        e = np.zeros(2)
        e[i] = h
        return (-g(*(2 * e)) + 8 * g(*e) - 8 * g(*(-e)) + g(*(-2 * e))) / (12 * h)

    def d2(i):
        e = np.zeros(2)
        e[i] = h
        return (-g(*(2 * e)) + 16 * g(*e) - 30 * g(0, 0) + 16 * g(*(-e)) - g(*(-2 * e))) / (12 * h * h)

    def dmix():
        k = h
        tot = 0
        for a, wa in ((2, -1), (1, 8), (-1, -8), (-2, 1)):
            for b, wb in ((2, -1), (1, 8), (-1, -8), (-2, 1)):
                tot = tot + wa * wb * g(a * k, b * k)
        return tot / (144 * k * k)

    G0 = g(0, 0)
    E, F, Gm = G0[0, 0], G0[0, 1], G0[1, 1]
    gu, gv = d1(0), d1(1)
    guu, gvv, guv = d2(0), d2(1), dmix()
    Eu, Ev = gu[0, 0], gv[0, 0]
    Fu, Fv = gu[0, 1], gv[0, 1]
    Gu, Gv = gu[1, 1], gv[1, 1]
    Evv, Guu, Fuv = gvv[0, 0], guu[1, 1], guv[0, 1]
    A = np.array([[-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev],
                  [Fv - 0.5 * Gu, E, F],
                  [0.5 * Gv, F, Gm]])
    B = np.array([[0.0, 0.5 * Ev, 0.5 * Gu],
                  [0.5 * Ev, E, F],
                  [0.5 * Gu, F, Gm]])
    return (np.linalg.det(A) - np.linalg.det(B)) / (E * Gm - F * F) ** 2


def scalar_curvature(space, x):
    geom = space.base if isinstance(space, SOneSpace) else space
    return geom.scalar_curvature(x)


# --------------------------------------------------------------------------
# twist bundles

@dataclass(eq=False)
class TwistBundle:
    """Hermitian bundle with curvature F = F0 * vol_M (F0 constant, anti-Hermitian).

    Transport along a geodesic segment a -> b is written in the radial gauge
    centred at ``base``: exp(-F0 * area(base, a, b)).
    """
    name: str
    F0: np.ndarray
    lift_weight: int = 0
    chart_connection: Optional[Callable] = None

    @property
    def rank(self):
        return self.F0.shape[0]

    def curvature(self, x, n=2):
        """L(e_i, e_j) in an oriented orthonormal frame, shape (..., n, n, r, r)."""
        shape = np.shape(x)[:-1]
        out = np.zeros(shape + (n, n, self.rank, self.rank), dtype=complex)
        if n >= 2:
            out[..., 0, 1, :, :] = self.F0
            out[..., 1, 0, :, :] = -self.F0
        return out

    def segment_transport(self, geometry, base, a, b):
        area = geometry.signed_area(base, a, b)
        return _expm_constant(-self.F0, area)

    def chern_number_density(self):
        """(i/2pi) tr F0 : the ch_1 coefficient against vol_M."""
        return float(np.real(1j / TWO_PI * np.trace(self.F0)))


def _expm_constant(F0, s):
    """exp(F0 * s) for a batch of scalars s (F0 normal)."""
    w, V = np.linalg.eig(F0)
    s = np.asarray(s, float)
    e = np.exp(np.multiply.outer(s, w))
    return np.einsum('ij,...j,jk->...ik', V, e, np.linalg.inv(V))


def trivial_twist(rank=1):
    return TwistBundle("trivial", np.zeros((rank, rank), complex))


def monopole_twist(k, area=4 * np.pi):
    """Line bundle of degree k over a closed surface of the given area with
    constant curvature F = i f vol, (i/2pi) * f * i * area = k."""
    f = -TWO_PI * k / area
    sphere_gauge = np.isclose(area, 4 * np.pi)

    def north_connection(u, f=f):
        # polar-normal coordinates about the north pole of the unit sphere:
        # A = i f (1 - cos r) d(alpha)
        u = np.asarray(u, float)
        r2 = np.sum(u * u, axis=-1)
        r = np.sqrt(r2)
        coef = np.where(r2 < 1e-16, 0.5, (1 - np.cos(r)) / np.where(r2 < 1e-16, 1.0, r2))
        return 1j * f * coef[..., None] * np.stack([-u[..., 1], u[..., 0]], axis=-1)

    def landau(u, f=f):
        u = np.asarray(u, float)
        return 1j * f * np.stack([np.zeros_like(u[..., 0]), u[..., 0]], axis=-1)

    return TwistBundle(f"O({k})", np.array([[1j * f]]), lift_weight=0,
                       chart_connection=north_connection if sphere_gauge else landau)


def magnetic_twist(c, torus):
    """Constant magnetic field on a flat torus with Chern number c."""
    return monopole_twist(c, area=torus.area)


# --------------------------------------------------------------------------
# S^1-spaces

@dataclass(eq=False)
class SOneSpace:
    """X with a locally free circle action and quotient M = X/S^1.

    ``kind`` selects the model of X:
      "s3"      u in C^2 unit sphere, action (e^{i w1 t} z1, e^{i w2 t} z2),
                optionally divided by the diagonal Z_quot
      "product" u = (point of M, s), action on s (M x S^1 or its Z_q quotient)
    """
    name: str
    base: ModelGeometry
    kind: str
    weights: tuple = (1, 1)
    quot: int = 1
    declared_p: int = 1
    spin_structure: str = ""
    params: dict = field(default_factory=dict)

    # --- X-level model ----------------------------------------------------
    def act(self, theta, u):
        theta = np.asarray(theta, float)
        if self.kind == "s3":
            w = np.asarray(self.weights, float) / self.quot
            ph = np.exp(1j * theta[..., None] * w)
            return u * ph
        out = np.array(u, dtype=float, copy=True)
        out[..., -1] = np.mod(out[..., -1] + theta, TWO_PI)
        return out

    def orbit_field(self, u):
        if self.kind == "s3":
            w = np.asarray(self.weights, float) / self.quot
            return 1j * w * u
        T = np.zeros_like(np.asarray(u, float))
        T[..., -1] = 1.0
        return T

    def omega0(self, u, v):
        """<omega_0, v>: the component of v along the orbit field."""
        T = self.orbit_field(u)
        if self.kind == "s3":
            num = np.real(np.sum(np.conj(T) * v, axis=-1))
            return num / np.real(np.sum(np.conj(T) * T, axis=-1))
        return np.asarray(v)[..., -1]

    def horizontal_basis(self, u):
        """Vectors at u orthogonal to the orbit and projecting to an
        oriented orthonormal frame of M (numerically, via the section)."""
        if self.kind == "product":
            x = u[..., :-1]
            E = self.base.frame(x)
            z = np.zeros(E.shape[:-2] + (1, E.shape[-1]))
            return np.concatenate([E, z], axis=-2)
        T = self.orbit_field(u)
        Tn = T / np.sqrt(np.sum(np.abs(T) ** 2, axis=-1, keepdims=True))
        out = []
        h = 1e-6
        x = self.project(u)
        E = self.base.frame(x)
        for k in range(self.base.dim):
            y1 = self.base.exp(x, h * E[..., k])
            y0 = self.base.exp(x, -h * E[..., k])
            v = (self._align(u, self.section(y1)) - self._align(u, self.section(y0))) / (2 * h)
            v = v - np.real(np.sum(np.conj(Tn) * v, axis=-1, keepdims=True)) * Tn
            out.append(v)
        return np.stack(out, axis=-1)

    def _align(self, u, w):
        """Move w along its orbit to the representative closest to u."""
        if self.kind != "s3":
            return w
        thetas = np.linspace(0, TWO_PI * self.quot, 721)
        cand = self.act(thetas[:, None] * np.ones(np.shape(w)[:-1])[None], w[None])
        i = np.argmin(np.sum(np.abs(cand - u[None]) ** 2, axis=-1), axis=0)
        th0 = thetas[i]
        res = lambda th: np.sum(np.abs(self.act(th, w) - u) ** 2, axis=-1)
        for _ in range(40):
            d = 1e-7
            g = (res(th0 + d) - res(th0 - d)) / (2 * d)
            hh = (res(th0 + d) - 2 * res(th0) + res(th0 - d)) / d ** 2
            th0 = th0 - g / np.where(np.abs(hh) < 1e-300, 1.0, hh)
        return self.act(th0, w)

    def project(self, u):
        if self.kind == "product":
            return self.base.fold(np.asarray(u, float)[..., :-1])[0]
        z1, z2 = u[..., 0], u[..., 1]
        if isinstance(self.base, SurfaceOfRevolution):
            q = self.weights[1]
            psi = self.base.Lpsi * (2 / np.pi) * np.arcsin(np.clip(np.abs(z2), 0, 1))
            phi = np.mod(np.angle(z2) - q * np.angle(z1), TWO_PI)
            return np.stack([psi, phi], axis=-1)
        w = z1 * np.conj(z2)
        x = np.stack([2 * w.real, 2 * w.imag, np.abs(z1) ** 2 - np.abs(z2) ** 2], axis=-1)
        return self.base.fold(x)[0]

    def section(self, x):
        """A local section M -> X (smooth away from one point)."""
        x = np.asarray(x, float)
        if self.kind == "product":
            return np.concatenate([x, np.zeros(x.shape[:-1] + (1,))], axis=-1)
        if isinstance(self.base, SurfaceOfRevolution):
            a = np.pi * x[..., 0] / (2 * self.base.Lpsi)
            return np.stack([np.cos(a) + 0j, np.sin(a) * np.exp(1j * x[..., 1])], axis=-1)
        z1 = np.sqrt(np.clip((1 + x[..., 2]) / 2, 0, None))
        z1s = np.where(z1 < 1e-300, 1.0, z1)
        z2 = (x[..., 0] - 1j * x[..., 1]) / (2 * z1s)
        return np.stack([z1 + 0j, z2], axis=-1)

    def isotropy_order(self, u):
        """|H_u| found by solving sigma(theta) u = u for theta in [0, 2pi)."""
        u = np.asarray(u)
        if self.kind == "product":
            return self.base.isotropy_order(self.project(u))
        cands = set()
        w = np.asarray(self.weights, float) / self.quot
        for k, wk in enumerate(w):
            if np.all(np.abs(u[..., k]) > 1e-12):
                pass
        # candidate angles: multiples of 2pi/(integer weights * quot)
        M = int(np.lcm.reduce([int(round(abs(x) * self.quot)) for x in w] + [self.quot]))
        thetas = TWO_PI * np.arange(M * self.quot + 1) / (M * self.quot) * 1.0
        thetas = thetas[thetas < TWO_PI - 1e-12]
        flat = u.reshape(-1, u.shape[-1])
        counts = np.zeros(flat.shape[0], dtype=int)
        for th in thetas:
            moved = self.act(th, flat)
            same = self._same_point(moved, flat)
            counts += same
        return counts.reshape(u.shape[:-1])

    def _same_point(self, a, b):
        if self.kind != "s3":
            return np.all(np.abs(a - b) < 1e-9, axis=-1)
        if self.quot == 1:
            return np.all(np.abs(a - b) < 1e-9, axis=-1)
        res = np.zeros(a.shape[:-1], dtype=bool)
        for j in range(self.quot):
            res |= np.all(np.abs(a * np.exp(TWO_PI * 1j * j / self.quot) - b) < 1e-9, axis=-1)
        return res

    def fiber_period(self, u):
        return TWO_PI / self.isotropy_order(u)

    @property
    def p(self):
        return self.declared_p

    def random_X(self, rng, size):
        if self.kind == "product":
            x = self.base.random_points(rng, size)
            return np.concatenate([x, rng.uniform(0, TWO_PI, (size, 1))], axis=-1)
        g = rng.normal(size=(size, 4))
        g /= np.linalg.norm(g, axis=-1, keepdims=True)
        return g[:, :2] + 1j * g[:, 2:]

    def least_isotropy(self, rng=None, samples=200):
        rng = np.random.default_rng(0) if rng is None else rng
        return int(np.min(self.isotropy_order(self.random_X(rng, samples))))

    # --- d omega_0 on M ----------------------------------------------------
    def d_omega0(self, x):
        """Coefficient of d omega_0 against the oriented area form of M."""
        if self.kind == "product":
            return np.zeros(np.shape(x)[:-1])
        if isinstance(self.base, RoundSphere):
            # omega_0 = alpha / (weight), d alpha = -(1/2) vol on the unit sphere
            w = self.weights[0] / self.quot
            return np.full(np.shape(x)[:-1], -0.5 / w)
        if isinstance(self.base, SurfaceOfRevolution) and self.kind == "s3":
            # section pull-back is g(psi) dphi, g = q s^2 / (c^2 + q^2 s^2)
            q = self.weights[1]
            psi = np.asarray(x, float)[..., 0]
            k = np.pi / (2 * self.base.Lpsi)
            c, s = np.cos(k * psi), np.sin(k * psi)
            den = c * c + q * q * s * s
            dg = q * 2 * s * c * k * (den - s * s * (q * q - 1)) / den ** 2
            return dg / self.base.f(psi)
        return self.d_omega0_fd(x)

    def d_omega0_fd(self, x, h=1e-4):
        """Finite-difference curl of the section pull-back of omega_0."""
        x = np.asarray(x, float)
        if isinstance(self.base, SurfaceOfRevolution):
            return self._d_omega0_coords(x, h)
        E = self.base.frame(x)
        e1, e2 = E[..., 0], E[..., 1]

        def pull(y, v):
            s0 = self.section(self.base.exp(y, -1e-6 * v))
            s1 = self.section(self.base.exp(y, 1e-6 * v))
            return self.omega0(self.section(y), (s1 - s0) / 2e-6)

        # circulation around a small square, divided by its area
        pts = [x, self.base.exp(x, h * e1)]
        p2 = self.base.exp(pts[1], h * e2)
        p3 = self.base.exp(x, h * e2)
        loop = [x, pts[1], p2, p3, x]
        circ = 0.0
        for a, b in zip(loop[:-1], loop[1:]):
            mid = self.base.exp(a, 0.5 * self.base.log(a, b))
            v = self.base.log(a, b)
            circ = circ + pull(mid, v)
        return circ / h ** 2

    def _d_omega0_coords(self, x, h):
        # (d_psi a_phi - d_phi a_psi) / f for the pull-back a of omega_0
        def comp(y, k):
            e = np.zeros(2)
            e[k] = 1e-6
            ds = (self.section(y + e) - self.section(y - e)) / 2e-6
            return self.omega0(self.section(y), ds)

        ex, ey = np.array([h, 0.0]), np.array([0.0, h])
        curl = ((comp(x + ex, 1) - comp(x - ex, 1)) - (comp(x + ey, 0) - comp(x - ey, 0))) / (2 * h)
        return curl / self.base.f(x[..., 0])

    def euler_number(self, order=48):
        pts, w = self.base.quadrature(order)
        return float(np.sum(w * self.d_omega0(pts)) / TWO_PI)


def catalog(name, **params):
    """Build a catalog S^1-space.

    names: flat-torus (L1, L2), hopf, hopf-p2, lens-q (q), teardrop-q (q),
    football-q (q).  A trailing integer in the name sets q, e.g. "lens-3".
    """
    base_name, q = _split_q(name, params)
    if base_name == "flat-torus":
        geom = FlatTorus(params.get("L1", TWO_PI), params.get("L2", TWO_PI))
        return SOneSpace("flat-torus", geom, "product", declared_p=1,
                         spin_structure="trivial (product) spin structure on T^2",
                         params={"L1": geom.L[0], "L2": geom.L[1]})
    if base_name == "hopf":
        return SOneSpace("hopf", RoundSphere(1.0), "s3", (1, 1), 1, 1,
                         spin_structure="unique spin structure on S^2; horizontal lift on S^3",
                         params={})
    if base_name == "hopf-p2":
        return SOneSpace("hopf-p2", RoundSphere(1.0), "s3", (2, 2), 1, 2,
                         spin_structure="as hopf", params={})
    if base_name == "lens":
        return SOneSpace(f"lens-{q}", RoundSphere(1.0), "s3", (1, 1), q, 1,
                         spin_structure="pulled back from S^2", params={"q": q})
    if base_name == "teardrop":
        return SOneSpace(f"teardrop-{q}", Teardrop(q), "s3", (1, q), 1, 1,
                         spin_structure="not used (scalar kernel only)", params={"q": q})
    if base_name == "football":
        return SOneSpace(f"football-{q}", Football(q), "product", declared_p=1,
                         spin_structure="not used (scalar kernel only)", params={"q": q})
    raise ValueError(f"unknown catalog space {name!r}; choose from flat-torus, hopf, "
                     "hopf-p2, lens-q, teardrop-q, football-q")


def _split_q(name, params):
    name = str(name)
    for stem in ("lens", "teardrop", "football"):
        if name == stem or name == f"{stem}-q":
            return stem, int(params.get("q", 2))
        if name.startswith(stem + "-"):
            tail = name[len(stem) + 1:]
            if tail.isdigit():
                return stem, int(tail)
    return name, None


CATALOG_NAMES = ("flat-torus", "hopf", "hopf-p2", "lens-q", "teardrop-q", "football-q")


# --------------------------------------------------------------------------
# transport and characteristic forms

def parallel_transport(geometry, points, bundle=None, frame0=None):
    """Transport along a discrete path of geodesic segments.

    Tangent case (bundle None): returns the holonomy-type map Q with
    transported frame = frame0 @ Q, so Q = frame0^T frame_end for a loop.
    Twist case: product of segment maps in the radial gauge at points[0].
    """
    pts = np.asarray(points, float)
    steps = [geometry.log(a, b) for a, b in zip(pts[:-1], pts[1:])]
    if any(np.linalg.norm(s) >= geometry.injectivity_floor for s in steps):
        raise ValueError("path step exceeds the injectivity floor")
    if bundle is not None:
        out = np.eye(bundle.rank, dtype=complex)
        cover = [pts[0]]
        for s in steps:
            cover.append(_cover_step(geometry, cover[-1], s))
        for a, b in zip(cover[:-1], cover[1:]):
            out = bundle.segment_transport(geometry, cover[0], a, b) @ out
        return out
    F = geometry.frame(pts[0][None])[0] if frame0 is None else frame0
    F0 = F.copy()
    x = pts[0]
    for a, b in zip(pts[:-1], pts[1:]):
        v = geometry.log(x, b)
        x, F, _ = geometry.step(x[None], v[None], F[None])
        x, F = x[0], F[0]
    return _frame_coords(geometry, x, F0, F)


def _cover_step(geometry, a, v):
    if isinstance(geometry, FlatTorus):
        return a + v
    if isinstance(geometry, RoundSphere):
        return RoundSphere.exp(geometry, a, v)
    return geometry.exp(a, v)


def _frame_coords(geometry, x, F0, F):
    if isinstance(geometry, SurfaceOfRevolution):
        G = np.diag([1.0, geometry.f(x[0]) ** 2])
        return F0.T @ G @ F
    return F0.T @ F


def chern_weil_forms(space, twist):
    return ChernWeil(space, twist)


class Form:
    """Element of the exterior algebra at a point: {sorted index tuple: coeff}."""

    def __init__(self, terms=None):
        self.terms = {k: v for k, v in (terms or {}).items() if v != 0}

    def __add__(self, other):
        t = dict(self.terms)
        for k, v in other.terms.items():
            t[k] = t.get(k, 0) + v
        return Form(t)

    def scale(self, c):
        return Form({k: c * v for k, v in self.terms.items()})

    def wedge(self, other):
        t = {}
        for a, va in self.terms.items():
            for b, vb in other.terms.items():
                if set(a) & set(b):
                    continue
                idx = a + b
                perm = np.argsort(idx, kind="stable")
                sign = _perm_sign(perm)
                key = tuple(sorted(idx))
                t[key] = t.get(key, 0) + sign * va * vb
        return Form(t)

    def degree_part(self, d):
        return Form({k: v for k, v in self.terms.items() if len(k) == d})

    def top(self, n):
        return self.terms.get(tuple(range(n)), 0)


def _perm_sign(p):
    p = list(p)
    s = 1
    for i in range(len(p)):
        while p[i] != i:
            j = p[i]
            p[i], p[j] = p[j], p[i]
            s = -s
    return s


class ChernWeil:
    """Chern-Weil forms evaluated pointwise from curvature data."""

    def __init__(self, space, twist):
        self.space = space
        self.twist = twist
        self.n = space.base.dim
        if self.n > 4:
            raise ValueError("only n <= 4 is supported")

    def _two_forms(self, comps):
        """matrix of 2-forms from components C[i, j, ...] (antisymmetric in ij)."""
        n = self.n
        out = {}
        for i in range(n):
            for j in range(i + 1, n):
                out[(i, j)] = comps[i, j]
        return out

    def ahat(self, x):
        Rm = self.space.base.riemann(np.asarray(x)[None])[0]
        n = self.n
        # Omega_ab = sum_{i<j} R_{abij} e^i ^ e^j
        omega = [[Form({(i, j): Rm[a, b, i, j] for i in range(n) for j in range(i + 1, n)})
                  for b in range(n)] for a in range(n)]
        tr2 = Form()
        for a in range(n):
            for b in range(n):
                tr2 = tr2 + omega[a][b].wedge(omega[b][a])
        p1 = tr2.scale(-1.0 / (8 * np.pi ** 2))
        return Form({(): 1.0}) + p1.scale(-1.0 / 24.0)

    def ch(self, x):
        L = self.twist.curvature(np.asarray(x)[None], self.n)[0]   # (n, n, r, r)
        r = self.twist.rank
        n = self.n
        Fm = [[Form({(i, j): L[i, j, a, b] for i in range(n) for j in range(i + 1, n)})
               for b in range(r)] for a in range(r)]
        tr1 = Form()
        for a in range(r):
            tr1 = tr1 + Fm[a][a]
        tr2 = Form()
        for a in range(r):
            for b in range(r):
                tr2 = tr2 + Fm[a][b].wedge(Fm[b][a])
        c = 1j / TWO_PI
        return Form({(): float(r)}) + tr1.scale(c) + tr2.scale(0.5 * c * c)

    def integrand(self, x, m=0):
        """Top-degree coefficient of Ahat ^ ch ^ exp(-m d omega_0 / 2pi) on M."""
        form = self.ahat(x).wedge(self.ch(x))
        if m:
            dw = self.space.d_omega0(np.asarray(x)[None])[0]
            e = Form({(): 1.0}) + Form({(0, 1): -m * dw / TWO_PI})
            form = form.wedge(e)
        return form.top(self.n)
