"""Scalar heat kernels for the generator (1/2) Laplacian on the model orbifolds.

Kernels are built from a Gaussian parametrix H = eta * (2 pi t)^{-n/2}
exp(-d^2/2t)(u0 + t u1), summed over group images, and corrected by the
alternating series  p = H - H#R + H#R#R - ...  with R = (d/dt - L/2) H.
"""
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import chebyshev as _cheb
from numpy.polynomial import legendre as _leg
from scipy.interpolate import CubicSpline, RectBivariateSpline
from scipy.linalg import eigh_tridiagonal

from .geometry import (Circle, FlatTorus, Football, RoundSphere, SurfaceOfRevolution,
                       Teardrop, TWO_PI, gauss_legendre, smooth_step, _wrap)

KERNEL_FLOOR = 1e-300


# --------------------------------------------------------------------------
# sphere coefficient functions (unit sphere, zonal in the distance d)

def _g_parts(d):
    """g = u0'/u0 = (1/d - cot d)/2 and g'."""
    d = np.asarray(d, float)
    small = d < 1e-3
    ds = np.where(small, 1.0, d)
    g = np.where(small, d / 6 + d ** 3 / 90, 0.5 * (1 / ds - np.cos(ds) / np.sin(ds)))
    gp = np.where(small, 1 / 6 + d ** 2 / 30, 0.5 * (-1 / ds ** 2 + 1 / np.sin(ds) ** 2))
    return g, gp


def sphere_u0(d):
    """Leading coefficient (d / sin d)^{1/2}; equals 1 on the diagonal."""
    d = np.asarray(d, float)
    tiny = d < 1e-8
    s = np.where(tiny, 1.0, np.sin(d) / np.where(tiny, 1.0, d))
    return s ** -0.5


def _cot_times(fp, fpp, d):
    """cot(d) f'(d) with its limit f''(0) at the origin."""
    small = d < 1e-4
    return np.where(small, fpp, np.cos(d) / np.sin(np.where(small, 1.0, d)) * fp)


def _transport_source(d):
    """Laplacian of u0 divided by u0."""
    g, gp = _g_parts(d)
    d = np.asarray(d, float)
    cg = np.where(d < 1e-3, 1 / 6 - 2 * d ** 2 / 45,
                  np.cos(d) / np.sin(np.where(d < 1e-3, 1.0, d)) * g)
    return gp + g * g + cg


class _SphereU1:
    """u1 = u0 * V/2 with V(d) = (1/d) int_0^d (Lap u0 / u0), fitted by an
    even Chebyshev series on [-dmax, dmax]."""

    def __init__(self, dmax=np.pi - 0.15, degree=80):
        self.dmax = dmax
        x, w = _leg.leggauss(40)
        nodes = np.cos(np.pi * (np.arange(degree) + 0.5) / degree) * dmax
        vals = np.empty(degree)
        for i, di in enumerate(np.abs(nodes)):
            r = 0.5 * di * (x + 1)
            vals[i] = 0.5 * np.sum(w * _transport_source(r))
        self.coef = [_cheb.chebfit(nodes / dmax, vals, degree - 1)]
        for _ in range(2):
            self.coef.append(_cheb.chebder(self.coef[-1]))
        grid = np.linspace(0, dmax, 4001)
        self._grid = grid
        self._table = 0.5 * sphere_u0(grid) * _cheb.chebval(grid / dmax, self.coef[0])

    def V(self, d, der=0):
        return _cheb.chebval(np.asarray(d) / self.dmax, self.coef[der]) / self.dmax ** der

    def fast(self, d):
        """u1 by table lookup (cutoff keeps d below dmax)."""
        return np.interp(d, self._grid, self._table)

    def parts(self, d):
        g, gp = _g_parts(d)
        u0 = sphere_u0(d)
        u0p = u0 * g
        u0pp = u0 * (gp + g * g)
        v, vp, vpp = self.V(d), self.V(d, 1), self.V(d, 2)
        u1 = 0.5 * u0 * v
        u1p = 0.5 * (u0p * v + u0 * vp)
        u1pp = 0.5 * (u0pp * v + 2 * u0p * vp + u0 * vpp)
        return u0, u0p, u1, u1p, u1pp


_U1_CACHE = {}


def _sphere_u1():
    if "u1" not in _U1_CACHE:
        _U1_CACHE["u1"] = _SphereU1()
    return _U1_CACHE["u1"]


# --------------------------------------------------------------------------
# parametrix

@dataclass(eq=False)
class Parametrix:
    """Gaussian parametrix of order ``order`` on a model geometry.

    ``cutoff`` = (r_in, r_out): eta is 1 below r_in and 0 beyond r_out
    (only used on the sphere, where the closure is compact).
    """
    geometry: object
    order: int = 1
    cutoff: tuple = (np.pi - 0.7, np.pi - 0.25)
    atlas: bool = False

    def __post_init__(self):
        if self.order not in (0, 1):
            raise ValueError("parametrix order must be 0 or 1")
        if isinstance(self.geometry, RoundSphere) and not np.isclose(self.geometry.R, 1.0) \
                and not self.atlas:
            raise ValueError("zonal sphere parametrix is built on the unit sphere")

    # --- cutoff on the sphere ----------------------------------------------
    def eta(self, d):
        r_in, r_out = self.cutoff
        k = 1.0 / (r_out - r_in)
        b, b1, b2 = smooth_step((np.asarray(d, float) - r_in) * k)
        return 1 - b, -b1 * k, -b2 * k * k

    # --- zonal pieces (sphere) ---------------------------------------------
    def zonal(self, t, d):
        """eta * K on the unit sphere as a function of distance."""
        t = np.asarray(t, float)
        d = np.asarray(d, float)
        G = np.exp(-d * d / (2 * t)) / (TWO_PI * t)
        u = sphere_u0(d)
        if self.order == 1:
            u = u + t * _sphere_u1().fast(np.minimum(d, self.cutoff[1]))
        return self.eta(d)[0] * G * u

    def zonal_residual(self, t, d):
        """(d/dt - Lap/2) of the zonal parametrix, together with the parametrix."""
        t = np.asarray(t, float)
        d = np.asarray(d, float)
        u0, u0p, u1, u1p, u1pp = _sphere_u1().parts(d)
        if self.order == 0:
            u1 = u1p = u1pp = np.zeros_like(u0)
        e, e1, e2 = self.eta(d)
        G = np.exp(-d * d / (2 * t)) / (TWO_PI * t)
        K = G * (u0 + t * u1)
        Kp = G * (-(d / t) * (u0 + t * u1) + u0p + t * u1p)
        lap_eta = e2 + _cot_times(e1, e2, d)
        if self.order == 1:
            lap_u1 = u1pp + _cot_times(u1p, u1pp, d)
            inner = -0.5 * t * G * lap_u1
        else:
            g, gp = _g_parts(d)
            # Lap u0 = u0 * source; order-0 residual keeps the full term
            inner = -0.5 * G * u0 * _transport_source(d)
        R = e * inner - 0.5 * K * lap_eta - e1 * Kp
        return e * K, R


def _check_t(t):
    if np.any(np.asarray(t) <= 0):
        raise ValueError("kernel time must be positive")


def _lattice_images(L, t, cutoff=1e-16):
    """Integer image ranges that keep exp(-(kL)^2/2t) above ``cutoff`` times
    the leading term, allowing for one period of offset."""
    tmax = float(np.max(t))
    reach = np.sqrt(2 * tmax * np.log(1 / cutoff))
    return np.arange(-int(np.ceil(reach / L)) - 1, int(np.ceil(reach / L)) + 2)


def flat_image_sum(L, t, diff):
    """Sum over lattice images of the Gaussian in each coordinate.

    ``L`` periods (n,), ``diff`` displacements (..., n).
    """
    t = np.asarray(t, float)
    out = np.ones(np.broadcast_shapes(t.shape, np.shape(diff)[:-1]))
    for i, Li in enumerate(np.atleast_1d(L)):
        ks = _lattice_images(Li, t)
        dd = _wrap(np.asarray(diff)[..., i] * TWO_PI / Li) * Li / TWO_PI
        s = 0.0
        for k in ks:
            s = s + np.exp(-(dd + k * Li) ** 2 / (2 * t))
        out = out * s / np.sqrt(TWO_PI * t)
    return out


def parametrix_eval(param, t, x, y):
    """Evaluate the parametrix H(t, x, y)."""
    _check_t(t)
    g = param.geometry
    t = np.asarray(t, float)
    if param.atlas:
        return _atlas_parametrix(param, t, x, y)
    if isinstance(g, Circle):
        return flat_image_sum([g.length], t, np.asarray(y) - np.asarray(x))
    if isinstance(g, FlatTorus):
        return flat_image_sum(g.L, t, np.asarray(y) - np.asarray(x))
    if isinstance(g, Football):
        imgs = g.image_points(y)
        d = g.cover_distance(np.asarray(x)[None], imgs)
        return np.sum(param.zonal(t[None], d), axis=0)
    if isinstance(g, RoundSphere):
        return param.zonal(t, g.cover_distance(x, y))
    raise NotImplementedError(
        f"no closed-closure parametrix for {g.name}; use Parametrix(atlas=True)")


def _atlas_parametrix(param, t, x, y):
    """Patched parametrix sum_alpha psi_alpha(x) rho_alpha(y) H_alpha with
    chart-local Gaussians summed over the chart group."""
    g = param.geometry
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    shape = np.broadcast_shapes(np.shape(t), x.shape[:-1], y.shape[:-1])
    total = np.zeros(shape)
    rho_raw = []
    for ch in g.atlas:
        rho_raw.append(ch.rho(np.linalg.norm(ch.to_chart(y), axis=-1)))
    rho_raw = np.array(rho_raw)
    rho = rho_raw / rho_raw.sum(axis=0)
    n = g.dim
    for k, ch in enumerate(g.atlas):
        xt = ch.to_chart(x)
        yt = ch.to_chart(y)
        wx = ch.psi(np.linalg.norm(xt, axis=-1))
        w = wx * rho[k]
        if not np.any(w > 0):
            continue
        acc = 0.0
        for gm in ch.group:
            d = ch.closure_distance(xt, np.einsum('ij,...j->...i', gm, yt))
            G = np.exp(-d * d / (2 * t)) / (TWO_PI * t) ** (n / 2)
            u0, u1 = _chart_coefficients(g, ch, d)
            acc = acc + G * (u0 + (t * u1 if param.order == 1 else 0.0))
        total = total + np.where(w > 0, w * acc, 0.0)
    return total


def _chart_coefficients(geometry, chart, d):
    """Heat coefficients for a chart whose closure is round, flat or a band."""
    if isinstance(geometry, FlatTorus):
        return np.ones_like(d), np.zeros_like(d)
    if isinstance(geometry, RoundSphere):
        R = geometry.R
        return sphere_u0(d / R), _sphere_u1().fast(d / R) / R ** 2
    if chart.name in ("pole", "cone"):
        return sphere_u0(d), _sphere_u1().fast(d)
    # band charts: leading-order Van Vleck factor is 1 + O(d^2)
    return np.ones_like(d), np.zeros_like(d)


# --------------------------------------------------------------------------
# sharp convolution

@dataclass
class SharpResult:
    value: np.ndarray
    error: np.ndarray
    converged: bool


def sharp_convolve(A, B, t, x, y, geometry, n_time=24, space_order=24, tol=1e-8):
    """(A#B)(t,x,y) = int_0^t int_M A(t-s,x,z) B(s,z,y) dz ds.

    Time uses s = t sin^2(theta) with Gauss-Legendre in theta; space uses
    the geometry's product rule.  The error estimate compares with a rule
    of half the time and space orders.
    """
    def rule(nt, ns):
        th, wth = gauss_legendre(0.0, np.pi / 2, nt)
        z, wz = geometry.quadrature(ns)
        tt = np.asarray(t, float)
        s = tt[..., None] * np.sin(th) ** 2                       # (..., nt)
        jac = tt[..., None] * 2 * np.sin(th) * np.cos(th) * wth   # (..., nt)
        xx = np.asarray(x, float)[..., None, None, :]
        yy = np.asarray(y, float)[..., None, None, :]
        zz = z[None, :, :]
        a = A((tt[..., None] - s)[..., :, None], xx, zz)
        b = B(s[..., :, None], zz, yy)
        return np.einsum('...k,...kj,j->...', jac, a * b, wz)

    fine = rule(n_time, space_order)
    coarse = rule(max(n_time // 2, 2), max(space_order // 2, 2))
    err = np.abs(fine - coarse)
    scale = np.maximum(np.abs(fine), 1e-300)
    ok = bool(np.all(err <= tol * np.maximum(scale, 1.0)))
    if not ok:
        warnings.warn("sharp_convolve: quadrature budget did not reach the requested tolerance",
                      RuntimeWarning, stacklevel=2)
    return SharpResult(fine, err, ok)


# --------------------------------------------------------------------------
# kernel fields

class KernelField:
    """Evaluable heat kernel p_M(t, x, y) on a model geometry."""
    geometry = None
    order = 1
    depth = 0
    t_range = (0.0, np.inf)
    diagnostics: dict

    def __call__(self, t, x, y):
        _check_t(t)
        return self.evaluate(np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))

    def evaluate(self, t, x, y):
        raise NotImplementedError

    def log_gradient(self, t, x, y):
        raise NotImplementedError

    def drift_field(self, t):
        """(x, y) -> (p(t,x,y), grad_x ln p(t,x,y)) at one fixed time; kernels
        may override this with something cheaper for large batches."""
        return lambda x, y: (self(t, x, y), self.log_gradient(t, x, y))

    def apply(self, t, f, x, order=48):
        """(P(t) f)(x) by quadrature over M."""
        z, w = self.geometry.quadrature(order)
        x = np.asarray(x, float)
        vals = self(t, x[..., None, :], z)
        return np.sum(vals * (w * f(z)), axis=-1)


class FlatKernel(KernelField):
    """Lattice image sum on a circle or flat torus (exact)."""

    def __init__(self, geometry, depth=0):
        self.geometry = geometry
        self.depth = depth
        self.L = np.array([geometry.length]) if isinstance(geometry, Circle) else geometry.L
        self.diagnostics = {"last_correction": 0.0, "route": "lattice image sum"}

    def evaluate(self, t, x, y):
        return flat_image_sum(self.L, t, y - x)

    def log_gradient(self, t, x, y):
        t = np.asarray(t, float)
        diff = np.asarray(y, float) - np.asarray(x, float)
        out = []
        for i, Li in enumerate(self.L):
            ks = _lattice_images(Li, t)
            dd = _wrap(diff[..., i] * TWO_PI / Li) * Li / TWO_PI
            num = 0.0
            den = 0.0
            for k in ks:
                e = np.exp(-(dd + k * Li) ** 2 / (2 * t))
                num = num + e * (dd + k * Li) / t
                den = den + e
            out.append(num / np.maximum(den, KERNEL_FLOOR))
        return np.stack(out, axis=-1)


class ZonalSphereKernel(KernelField):
    """Unit-sphere kernel H - H#R + H#R#R..., the corrections tabulated on a
    (log t, d) grid from their Legendre coefficients."""

    def __init__(self, param, depth=2, L=220, t_table=(2e-4, 1.0, 160), n_theta=32,
                 d_nodes=600):
        self.param = param
        self.geometry = param.geometry
        self.order = param.order
        self.depth = int(depth)
        self.L = L
        t_tab = np.geomspace(*t_table)
        self.t_range = (0.0, t_tab[-1])
        coeffs = _zonal_series(param, self.depth, L, t_tab, n_theta)
        # reconstruct sum_k (-1)^k C_k on a d grid
        d_grid = np.concatenate([np.linspace(0, 0.1, 60, endpoint=False),
                                 np.linspace(0.1, np.pi, d_nodes)])
        P = _legendre_table(L, np.cos(d_grid))
        ls = np.arange(L + 1)
        scale = (2 * ls + 1) / (4 * np.pi)
        corr = np.zeros((t_tab.size, d_grid.size))
        sizes = []
        for k, c in enumerate(coeffs, start=1):
            term = (c * scale) @ P
            corr += (-1) ** k * term
            sizes.append(float(np.max(np.abs(term[t_tab >= 0.05]))))
        self.t_table = t_tab
        self.d_grid = d_grid
        self.correction = corr
        self._spline = RectBivariateSpline(np.log(t_tab), d_grid, corr, kx=3, ky=3)
        self.diagnostics = {"route": "Funk-Hecke series", "depth": self.depth,
                            "legendre_degree": L, "correction_sizes": sizes,
                            "last_correction": sizes[-1] if sizes else 0.0}
        for a, b in zip(sizes[:-1], sizes[1:]):
            if b >= a:
                warnings.warn("successive approximation: corrections are not decreasing",
                              RuntimeWarning, stacklevel=2)

    def radial(self, t, d):
        t = np.asarray(t, float)
        d = np.asarray(d, float)
        if np.any(t > self.t_range[1] * (1 + 1e-12)):
            raise ValueError(f"sphere kernel is tabulated for t <= {self.t_range[1]}")
        t_b, d_b = np.broadcast_arrays(t, d)
        h = self.param.zonal(t_b, d_b)
        if self.depth == 0:
            return h
        lt = np.log(np.maximum(t_b, self.t_table[0]))
        c = self._spline.ev(lt.ravel(), np.clip(d_b, 0, np.pi).ravel()).reshape(t_b.shape)
        c = np.where(t_b < self.t_table[0], 0.0, c)
        return h + c

    def evaluate(self, t, x, y):
        return self.radial(t, self.geometry.cover_distance(x, y))

    def radial_log_derivative_over_d(self, t, d):
        """(d/dd ln p) / d, finite differences in d."""
        t = np.asarray(t, float)
        d = np.asarray(d, float)
        hh = 1e-5
        dc = np.maximum(d, 2 * hh)
        lp = np.log(np.maximum(self.radial(t, dc + hh), KERNEL_FLOOR))
        lm = np.log(np.maximum(self.radial(t, dc - hh), KERNEL_FLOOR))
        return (lp - lm) / (2 * hh) / dc

    def log_gradient(self, t, x, y):
        g = self.geometry
        v = g.log(x, y)
        d = np.linalg.norm(v, axis=-1)
        return -self.radial_log_derivative_over_d(t, d)[..., None] * v

    def drift_field(self, t, nodes=2048):
        """ln p at time t as a cubic spline in d^2 (smooth at d = 0); the
        gradient of ln p is then -2 g'(d^2) log_x(y)."""
        _check_t(t)
        u = np.pi ** 2 * np.linspace(0.0, 1.0, nodes) ** 2
        lp = np.log(np.maximum(self.radial(float(t), np.sqrt(u)), KERNEL_FLOOR))
        spl = CubicSpline(u, lp)
        dspl = spl.derivative()
        g = self.geometry

        def field(x, y):
            v = g.log(x, y)
            d2 = np.sum(v * v, axis=-1)
            return np.exp(spl(d2)), -2.0 * dspl(d2)[..., None] * v

        return field


def _legendre_table(L, c):
    P = np.empty((L + 1,) + np.shape(c))
    P[0] = 1.0
    if L >= 1:
        P[1] = c
    for l in range(1, L):
        P[l + 1] = ((2 * l + 1) * c * P[l] - l * P[l - 1]) / (l + 1)
    return P


def _zonal_series(param, depth, L, t_tab, n_theta):
    """Legendre coefficients of C_k = H # R^{#k}, k = 1..depth, on t_tab."""
    if depth == 0:
        return []
    r_out = param.cutoff[1]
    edges = np.unique(np.concatenate([[0.0], np.geomspace(1e-3, 0.1, 6),
                                      np.arange(0.1, r_out, 0.08), [r_out]]))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        z, w = gauss_legendre(a, b, 24)
        nodes.append(z)
        weights.append(w)
    dn = np.concatenate(nodes)
    dw = np.concatenate(weights)
    P = _legendre_table(L, np.cos(dn))
    proj = TWO_PI * P * (np.sin(dn) * dw)[None, :]            # Funk-Hecke weights

    th, wth = gauss_legendre(0.0, np.pi / 2, n_theta)
    S = t_tab[:, None] * np.sin(th) ** 2
    TAU = t_tab[:, None] - S
    jac = 2 * t_tab[:, None] * np.sin(th) * np.cos(th) * wth
    nt = t_tab.size
    hS = param.zonal_residual(TAU.reshape(-1, 1), dn[None, :])[0] @ proj.T
    rS = param.zonal_residual(S.reshape(-1, 1), dn[None, :])[1] @ proj.T
    hS = hS.reshape(nt, n_theta, L + 1)
    rS = rS.reshape(nt, n_theta, L + 1)
    out = [np.einsum('tk,tkl,tkl->tl', jac, hS, rS)]
    lt = np.log(t_tab)
    tau = TAU.reshape(-1)
    for _ in range(depth - 1):
        spl = CubicSpline(lt, out[-1], axis=0)
        prev = np.where((tau > t_tab[0])[:, None], spl(np.log(np.maximum(tau, t_tab[0]))), 0.0)
        prev = prev.reshape(nt, n_theta, L + 1)
        out.append(np.einsum('tk,tkl,tkl->tl', jac, prev, rS))
    return out


class ImageSumKernel(KernelField):
    """Kernel of a global quotient S^2/Z_q as the sum over cover images."""

    def __init__(self, base_kernel, geometry):
        self.base = base_kernel
        self.geometry = geometry
        self.depth = base_kernel.depth
        self.order = base_kernel.order
        self.t_range = base_kernel.t_range
        self.diagnostics = dict(base_kernel.diagnostics, route="image sum over the cover")

    def evaluate(self, t, x, y):
        imgs = self.geometry.image_points(y)
        d = self.geometry.cover_distance(x[None], imgs)
        return np.sum(self.base.radial(t[None] if np.ndim(t) else t, d), axis=0)

    def log_gradient(self, t, x, y):
        imgs = self.geometry.image_points(y)
        xb = np.broadcast_to(x, imgs.shape)
        v = RoundSphere.log(self.geometry, xb, imgs)
        d = np.linalg.norm(v, axis=-1)
        tb = np.asarray(t, float)[None] if np.ndim(t) else t
        p = self.base.radial(tb, d)
        gr = -self.base.radial_log_derivative_over_d(tb, d)[..., None] * v
        return np.sum(p[..., None] * gr, axis=0) / np.maximum(np.sum(p, axis=0), KERNEL_FLOOR)[..., None]


class RevolutionKernel(KernelField):
    """Reference kernel on a surface of revolution: Fourier modes in phi and
    a finite-volume radial eigenproblem per mode, Richardson-extrapolated
    from ``cells`` and ``2 * cells``."""

    def __init__(self, geometry, cells=600, m_max=120, t_min=0.05):
        self.geometry = geometry
        self.depth = 0
        self.order = 0
        self.t_range = (t_min, np.inf)
        lam_max = 80.0 / t_min
        self.levels = [self._modes(cells, m_max, lam_max),
                       self._modes(2 * cells, m_max, lam_max)]
        self.diagnostics = {"route": "separated spectral reference", "cells": cells,
                            "m_max": m_max, "t_min": t_min,
                            "modes": [sum(lam.size for lam, _ in lv) for lv in self.levels]}

    def _modes(self, cells, m_max, lam_max):
        L = self.geometry.Lpsi
        h = L / cells
        centers = (np.arange(cells) + 0.5) * h
        faces = np.arange(cells + 1) * h
        fc = self.geometry.f(centers)
        ff = self.geometry.f(faces)
        ff[0] = ff[-1] = 0.0
        W = fc * h
        sd = 1 / np.sqrt(W)
        out = []
        for m in range(m_max + 1):
            diag = (ff[:-1] + ff[1:]) / h + m * m / fc ** 2 * W
            off = -ff[1:-1] / h
            lam, Y = eigh_tridiagonal(diag * sd * sd, off * sd[:-1] * sd[1:],
                                      select='v', select_range=(-1.0, lam_max))
            if lam.size == 0:
                break
            g = Y * sd[:, None]                       # sum W g^2 = 1
            out.append((lam, CubicSpline(centers, g, axis=0)))
        return out

    @staticmethod
    def _sum(modes, t, x, y):
        out = np.zeros(t.shape)
        for m, (lam, spl) in enumerate(modes):
            s = np.sum(np.exp(-np.multiply.outer(t, lam) / 2) * spl(x[:, 0]) * spl(y[:, 0]), axis=-1)
            c = 1.0 if m == 0 else 2 * np.cos(m * (x[:, 1] - y[:, 1]))
            out += c * s / TWO_PI
        return out

    def evaluate(self, t, x, y):
        if np.any(t < self.t_range[0] * (1 - 1e-12)):
            raise ValueError(f"reference kernel is resolved for t >= {self.t_range[0]}")
        t, x, y = np.broadcast_arrays(t[..., None], x, y)
        t = t[..., 0]
        shape = t.shape
        tf, xf, yf = t.ravel(), x.reshape(-1, 2), y.reshape(-1, 2)
        coarse = self._sum(self.levels[0], tf, xf, yf)
        fine = self._sum(self.levels[1], tf, xf, yf)
        return ((4 * fine - coarse) / 3).reshape(shape)

    def log_gradient(self, t, x, y):
        return coordinate_log_gradient(self, t, x, y)


def coordinate_log_gradient(kernel, t, x, y, h=1e-5):
    """Central differences of ln p in (psi, phi), raised by the metric."""
    x = np.asarray(x, float)
    g = kernel.geometry
    comps = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        lp = np.log(np.maximum(kernel(t, x + e, y), KERNEL_FLOOR))
        lm = np.log(np.maximum(kernel(t, x - e, y), KERNEL_FLOOR))
        comps.append((lp - lm) / (2 * h))
    f = g.f(x[..., 0])
    return np.stack([comps[0], comps[1] / f ** 2], axis=-1)


# --------------------------------------------------------------------------
# builders

def successive_approximation(param, depth=2, **kw):
    """KernelField p = H - H#R + ... truncated after ``depth`` corrections."""
    if depth < 0:
        raise ValueError("depth must be >= 0")
    g = param.geometry
    if isinstance(g, (Circle, FlatTorus)):
        # the lattice parametrix solves the heat equation exactly: R = 0
        return FlatKernel(g, depth)
    if isinstance(g, Football):
        base = ZonalSphereKernel(Parametrix(RoundSphere(1.0), param.order, param.cutoff),
                                 depth, **kw)
        return ImageSumKernel(base, g)
    if isinstance(g, RoundSphere):
        return ZonalSphereKernel(param, depth, **kw)
    raise NotImplementedError(
        f"no closed-closure series for {g.name}; use reference_kernel")


def reference_kernel(geometry, **kw):
    if isinstance(geometry, SurfaceOfRevolution):
        return RevolutionKernel(geometry, **kw)
    return successive_approximation(Parametrix(geometry), **kw)


def kernel_for(geometry, **kw):
    """Default kernel for a catalog base geometry."""
    if isinstance(geometry, SurfaceOfRevolution):
        return RevolutionKernel(geometry, **kw)
    return successive_approximation(Parametrix(geometry), **kw)


# --------------------------------------------------------------------------
# lift to X

@dataclass(eq=False)
class LiftedKernel:
    kernel: KernelField
    space: object

    def __call__(self, t, u, v):
        sp = self.space
        return self.kernel(t, sp.project(u), sp.project(v)) / TWO_PI


def lift_to_X(kernel, space):
    """p_X(t,u,v) = p_M(t, pi u, pi v) / 2pi."""
    return LiftedKernel(kernel, space)


# --------------------------------------------------------------------------
# bounds

@dataclass
class BoundsReport:
    n: int
    C1: float
    C2: float
    near_violations: int
    far_violations: int
    checked: int
    diagonal_ratio: Optional[float] = None
    chain_lower: list = field(default_factory=list)
    hinge_min: float = 0.0
    details: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.near_violations == 0 and self.far_violations == 0

    def to_dict(self):
        return {"n": self.n, "C1": self.C1, "C2": self.C2,
                "near_violations": self.near_violations,
                "far_violations": self.far_violations, "checked": self.checked,
                "diagonal_ratio": self.diagonal_ratio, "hinge_min": self.hinge_min,
                "chain_lower": self.chain_lower}


def gaussian_ratio(kernel, t, x, y, d=None):
    """p_M(t,x,y) t^{n/2} exp(d^2/2t)."""
    g = kernel.geometry
    if d is None:
        d = g.distance(x, y)
    n = g.dim
    return kernel(t, x, y) * np.asarray(t) ** (n / 2) * np.exp(np.asarray(d) ** 2 / (2 * np.asarray(t)))


def verify_bounds(kernel, geometry, t_grid, pairs, validation_pairs=None, slack=1.5,
                  far_threshold=None, chain_order=24):
    """Fit C1 <= p t^{n/2} e^{d^2/2t} <= C2 on ``pairs`` and validate.

    Pairs with d > far_threshold are "distant": their lower bound is also
    certified through the semigroup chain p(t,x,y) >= int_B p(t/2,x,z) p(t/2,z,y)
    over a ball B about a midpoint of x and y, where the hinged energy
    2d(x,z)^2 + 2d(z,y)^2 - d(x,y)^2 is small.
    """
    t_grid = np.asarray(t_grid, float)
    if np.any(t_grid <= 0) or np.any(t_grid >= 1):
        raise ValueError("t-grid must lie in (0, 1)")
    X, Y = (np.asarray(a, float) for a in pairs)
    d = geometry.distance(X, Y)
    ratios = np.array([gaussian_ratio(kernel, t, X, Y, d) for t in t_grid])
    C1 = float(np.min(ratios)) / slack
    C2 = float(np.max(ratios)) * slack
    n = geometry.dim
    near_v = far_v = 0
    checked = ratios.size
    if far_threshold is None:
        far_threshold = geometry.injectivity_floor / 2
    if validation_pairs is not None:
        Xv, Yv = (np.asarray(a, float) for a in validation_pairs)
        dv = geometry.distance(Xv, Yv)
        rv = np.array([gaussian_ratio(kernel, t, Xv, Yv, dv) for t in t_grid])
        bad = (rv < C1) | (rv > C2)
        near = dv <= far_threshold
        near_v = int(np.sum(bad[:, near]))
        far_v = int(np.sum(bad[:, ~near]))
        checked += rv.size
    # upper bound without the Gaussian factor
    up = np.array([kernel(t, X, Y) * t ** (n / 2) for t in t_grid])
    if np.any(up > C2 * 1.0000001):
        near_v += int(np.sum(up > C2))
    chain = []
    hinge_min = np.inf
    far_idx = np.where(d > far_threshold)[0][:4]
    for i in far_idx:
        for t in t_grid[:2]:
            lb, hmin = _chain_lower(kernel, geometry, t, X[i], Y[i], chain_order)
            err = 0.0
            if not isinstance(geometry, SurfaceOfRevolution):
                # quadrature error of the chain integral from a doubled rule
                fine, _ = _chain_lower(kernel, geometry, t, X[i], Y[i], 2 * chain_order)
                err, lb = abs(fine - lb), fine
            hinge_min = min(hinge_min, hmin)
            val = float(kernel(t, X[i], Y[i]))
            good = val >= lb * (1 - 1e-6) - err
            chain.append({"t": float(t), "d": float(d[i]), "p": val, "chain": lb,
                          "quadrature_error": err, "ok": bool(good)})
            if not good:
                far_v += 1
    diag = None
    return BoundsReport(n, C1, C2, near_v, far_v, checked, diag, chain,
                        float(hinge_min if np.isfinite(hinge_min) else 0.0),
                        {"far_threshold": far_threshold, "slack": slack})


def _midpoint(geometry, x, y):
    if isinstance(geometry, SurfaceOfRevolution):
        return geometry.geodesic_point(x, y, 0.5)
    v = geometry.log(x, y)
    return geometry.exp(x, 0.5 * v)


def _chain_lower(kernel, geometry, t, x, y, order):
    """Lower bound int_B p(t/2,x,z) p(t/2,z,y) dz and the minimum of the
    hinged energy over the quadrature nodes (must be >= 0)."""
    w = _midpoint(geometry, x, y)
    z, wz = geometry.quadrature(order)
    dxy = float(geometry.distance(x, y))
    if isinstance(geometry, SurfaceOfRevolution):
        dz = np.abs(z[:, 0] - w[0]) + geometry.f(w[0]) * np.abs(_wrap(z[:, 1] - w[1]))
        ball = dz < 0.25 * dxy
        zb = z[ball]
        dxz = geometry.distance(np.broadcast_to(x, zb.shape), zb)
        dzy = geometry.distance(zb, np.broadcast_to(y, zb.shape))
    else:
        ball = geometry.distance(np.broadcast_to(w, z.shape), z) < 0.25 * dxy
        zb = z[ball]
        dxz = geometry.distance(np.broadcast_to(x, zb.shape), zb)
        dzy = geometry.distance(zb, np.broadcast_to(y, zb.shape))
    hinge = 2 * dxz ** 2 + 2 * dzy ** 2 - dxy ** 2
    vals = kernel(t / 2, np.broadcast_to(x, zb.shape), zb) * kernel(t / 2, zb, np.broadcast_to(y, zb.shape))
    return float(np.sum(vals * wz[ball])), float(np.min(hinge)) if hinge.size else 0.0


def diagonal_ratio(kernel, t, x):
    """(2 pi t)^{n/2} p(t, x, x)."""
    n = kernel.geometry.dim
    return (TWO_PI * np.asarray(t)) ** (n / 2) * kernel(t, x, x)


# --------------------------------------------------------------------------
# gradient

class DriftUnavailable(RuntimeError):
    """Kernel value below the floor: the bridge drift cannot be formed."""


def log_gradient(kernel, t, x, y):
    """Gradient in x of ln p_M(t, x, y) as a tangent vector at x."""
    _check_t(t)
    p = kernel(t, x, y)
    if np.any(p <= KERNEL_FLOOR):
        raise DriftUnavailable("bridge drift unavailable; shrink T")
    return kernel.log_gradient(np.asarray(t, float), np.asarray(x, float), np.asarray(y, float))
