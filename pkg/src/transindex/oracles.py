"""Closed-form reference kernels, written independently of the kernels they check.

torus:   product of Jacobi theta functions, (1/L) theta_3(pi d / L, exp(-2 pi^2 t / L^2))
sphere:  sum_l (2l+1)/(4pi) exp(-l(l+1) t/2) P_l(cos d)
quotients of the sphere: sum of the sphere kernel over the group images.
"""
import mpmath
import numpy as np
from numpy.polynomial import legendre


def torus_kernel(L, t, diff, dps=None):
    """Heat kernel of (1/2) Laplacian on R^n / (L_1 Z x ... x L_n Z).

    The theta series cancels down to exp(-d^2/2t) far from the diagonal,
    so the working precision grows with L^2 / t.
    """
    L = np.atleast_1d(np.asarray(L, float))
    diff = np.atleast_2d(np.asarray(diff, float))
    out = np.ones(diff.shape[0])
    for i, Li in enumerate(L):
        digits = dps or int(30 + Li ** 2 / (8 * t) / np.log(10))
        with mpmath.workdps(digits):
            nome = mpmath.exp(-2 * mpmath.pi ** 2 * mpmath.mpf(t) / Li ** 2)
            out *= np.array([float(mpmath.jtheta(3, mpmath.pi * mpmath.mpf(d) / Li, nome) / Li)
                             for d in diff[:, i]])
    return out


def sphere_kernel(t, d, lmax=None):
    """Heat kernel of (1/2) Laplacian on the unit 2-sphere at geodesic distance d."""
    t = float(t)
    if lmax is None:
        lmax = int(np.ceil(np.sqrt(2 * 60.0 / t))) + 20
    ls = np.arange(lmax + 1)
    coef = (2 * ls + 1) / (4 * np.pi) * np.exp(-ls * (ls + 1) * t / 2)
    return legendre.legval(np.cos(np.asarray(d, float)), coef)


def sphere_diagonal(t):
    return float(sphere_kernel(t, 0.0))


def football_kernel(q, t, x, y):
    """Z_q quotient of the unit sphere by rotations about the z axis."""
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    total = np.zeros(np.broadcast_shapes(x.shape, y.shape)[0])
    for j in range(q):
        a = 2 * np.pi * j / q
        R = np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])
        gy = y @ R.T
        cosd = np.clip(np.sum(x * gy, axis=-1), -1, 1)
        total += sphere_kernel(t, np.arccos(cosd))
    return total


def monopole_area_cf(s, t, jmax=400):
    """E[cos(s A)] for the signed area A swept by a Brownian bridge loop of
    duration t on the unit sphere, from the spectrum of the monopole
    Laplacian with charge 2s (s a half-integer)."""
    s = abs(float(s))
    js = s + np.arange(jmax)
    num = np.sum((2 * js + 1) * np.exp(-(js * (js + 1) - s * s) * t / 2))
    ls = np.arange(jmax)
    den = np.sum((2 * ls + 1) * np.exp(-ls * (ls + 1) * t / 2))
    return float(num / den)
