"""Analytic (Monte Carlo supertrace) and geometric (Chern-Weil) indices.

The analytic side integrates the diagonal supertrace density
p_M(t,x,x) E[R str(M tau)] over principal-stratum quadrature nodes of M;
the lift p_X = p_M / 2pi is undone by the 2pi of the group integral, so
no fiber factor appears.  The geometric side integrates
(p/2pi) Ahat ^ ch ^ omega_0 over X as base quadrature times an orbit
quadrature of omega_0.
"""
import json
import math
import platform
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import TWO_PI, TwistBundle, chern_weil_forms
from .stochastic import evolve_transport, path_supertrace, run_blocks, sample_bridge

SCHEMA_VERSION = "1"


# --------------------------------------------------------------------------
# Fourier components along the orbits

@dataclass(frozen=True)
class FourierProjector:
    """m-th Fourier component of a section of X by K-point trapezoidal
    quadrature over the circle:  theta_m(u) = (1/2pi) int theta(z.u) e^{i m z} dz.

    With this sign, sections satisfying theta(z.u) = e^{-i m z} theta(u)
    are fixed by the m-th projector.
    """
    act: Callable
    K: int = 32

    def nodes(self):
        return TWO_PI * np.arange(self.K) / self.K

    def project(self, section, m=0):
        m = int(m)
        if self.K < 4 * (abs(m) + 1):
            raise ValueError(f"K={self.K} is too small for mode {m}; need K >= {4 * (abs(m) + 1)}")
        z = self.nodes()
        phase = np.exp(1j * m * z)

        def projected(u):
            u = np.asarray(u)
            vals = [np.asarray(section(self.act(zj, u))) * pj for zj, pj in zip(z, phase)]
            return sum(vals[1:], vals[0]) / self.K

        return projected


def fourier_project(section, m, space, K=32):
    return FourierProjector(space.act, K).project(section, m)


def mode_twist(space, twist, m):
    """Twist seen by the m-th Fourier component: sections of X in that
    component are sections over M of twist (x) L_m, whose curvature adds
    i m d(omega_0).  Needs d(omega_0) constant on M."""
    if m == 0:
        return twist
    probe = space.base.quadrature(4)[0]
    dw = np.asarray(space.d_omega0(probe), float)
    if np.ptp(dw) > 1e-9:
        raise NotImplementedError("mode twist needs a constant d(omega_0)")
    F0 = twist.F0 + 1j * m * dw.flat[0] * np.eye(twist.rank)
    return TwistBundle(f"{twist.name}(x)L_{m}", F0, twist.lift_weight + m,
                       twist.chart_connection)


# --------------------------------------------------------------------------
# analytic side

@dataclass
class DensitySample:
    x: np.ndarray
    value: float
    stderr: float
    n_paths: int
    invalid: int
    kernel_diagonal: float


@dataclass
class IndexEstimate:
    value: float
    stderr: float
    n_paths: int
    t: float
    densities: list = field(default_factory=list)
    weights: Optional[np.ndarray] = None
    relocated: int = 0

    def density_table(self):
        """Rows (coordinates..., t, I, stderr)."""
        return [list(map(float, d.x)) + [self.t, d.value, d.stderr] for d in self.densities]


class EstimateRejected(RuntimeError):
    pass


def _density_block(first, count, geometry, kernel, spin, twists, t, x, h, seed, truncated):
    from .stochastic import RandomSource
    src = RandomSource(seed)
    path = sample_bridge(geometry, kernel, x, x, t, h, src, count, first_path=first, record=False)
    vals, ok = [], np.ones(count, bool)
    for tw in twists:
        st = evolve_transport(path, spin, tw, geometry)
        vals.append(np.real(path_supertrace(st, spin, tw.rank, truncated=truncated)))
        ok &= st.valid
    return np.array(vals), ok


def _density_block_offset(first, count, offset, *args):
    return _density_block(offset + first, count, *args)


def path_values(geometry, kernel, spin, twists, t, x, n_paths, source, first_path=0, h=None,
                block=2000, workers=1, truncated=False):
    """Per-path Re[R str(M tau)] for bridges x -> x, one row per twist; all
    twists share the same bridges."""
    out = run_blocks(_density_block_offset, n_paths, block, workers,
                     (first_path, geometry, kernel, spin, list(twists), t, x, h, source.seed,
                      truncated))
    vals = np.concatenate([o[0] for o in out], axis=1)
    valid = np.concatenate([o[1] for o in out])
    return vals, valid


def _densities(space, kernel, spin, twists, t, x, n_paths, source, first_path, h, workers,
               truncated, max_invalid):
    g = space.base
    x = np.asarray(x, float)
    if not g.is_principal(x[None])[0]:
        raise ValueError("density node lies on a singular stratum")
    vals, valid = path_values(g, kernel, spin, twists, t, x, n_paths, source, first_path, h,
                              workers=workers, truncated=truncated)
    bad = int(np.sum(~valid))
    if bad > max_invalid * n_paths:
        raise EstimateRejected(f"{bad} of {n_paths} paths invalid at x={x.tolist()}")
    vals = np.where(valid, vals, 0.0)
    diag = float(kernel(t, x[None], x[None])[0])
    out = []
    for row in vals:
        mean = float(np.mean(row)) * diag
        se = float(np.std(row, ddof=1) / math.sqrt(n_paths)) * diag if n_paths > 1 else float("inf")
        out.append(DensitySample(x, mean, se, n_paths, bad, diag))
    return out


def supertrace_density(space, kernel, spin, twist, t, x, n_paths, source, first_path=0, h=None,
                       workers=1, truncated=False, max_invalid=0.01):
    """I(t, x) = p_M(t,x,x) E[R str(M tau)] over bridges x -> x, with its
    standard error.  x must lie in the principal stratum."""
    return _densities(space, kernel, spin, [twist], t, x, n_paths, source, first_path, h,
                      workers, truncated, max_invalid)[0]


def _principal_nodes(geometry, pts, nudge=1e-3):
    """Move quadrature nodes off singular strata; returns (points, count moved)."""
    pts = np.array(pts, float)
    ok = geometry.is_principal(pts)
    moved = int(np.sum(~ok))
    if moved:
        rng = np.random.default_rng(0)
        for i in np.nonzero(~ok)[0]:
            v = rng.standard_normal(pts.shape[-1])
            pts[i] = geometry.fold(geometry.exp(pts[i][None], nudge * _tangent(geometry, pts[i], v)[None]))[0][0]
        warnings.warn(f"{moved} quadrature node(s) relocated off singular strata")
    return pts, moved


def _tangent(geometry, x, v):
    if x.shape[-1] == 3:
        u = x / np.linalg.norm(x)
        v = v - np.dot(v, u) * u
    return v / np.linalg.norm(v)


def mckean_singer_indices(space, kernel, spin, twists, t, n_paths, source, order=4, h=None,
                          workers=1, truncated=False, max_invalid=0.01):
    """McKean-Singer estimates for several twists from one set of bridges."""
    g = space.base
    pts, w = g.quadrature(order)
    pts, moved = _principal_nodes(g, pts)
    nodes = len(w)
    per = max(2, n_paths // nodes)
    rows = [_densities(space, kernel, spin, twists, t, x, per, source, i * per, h, workers,
                       truncated, max_invalid) for i, x in enumerate(pts)]
    out = []
    for k in range(len(twists)):
        dens = [r[k] for r in rows]
        vals = np.array([d.value for d in dens])
        ses = np.array([d.stderr for d in dens])
        out.append(IndexEstimate(float(np.sum(w * vals)), float(np.sqrt(np.sum((w * ses) ** 2))),
                                 per * nodes, float(t), dens, np.asarray(w), moved))
    return out


def mckean_singer_index(space, kernel, spin, twist, t, n_paths, source, order=4, h=None,
                        workers=1, truncated=False):
    """Monte Carlo McKean-Singer index: sum_nodes w I(t, x), with the total
    path budget split evenly over the nodes of the base quadrature."""
    return mckean_singer_indices(space, kernel, spin, [twist], t, n_paths, source, order, h,
                                 workers, truncated)[0]


# --------------------------------------------------------------------------
# geometric side

def _orbit_length(space, x, K=64):
    """int over one orbit of omega_0 by the orbit parameter, trapezoidal."""
    u = space.section(np.asarray(x, float)[None])[0]
    period = float(space.fiber_period(u[None])[0])
    z = period * np.arange(K) / K
    orbit = np.array([space.act(zj, u) for zj in z])
    T = np.array([space.orbit_field(o) for o in orbit])
    return float(np.sum(space.omega0(orbit, T)) * period / K)


def _chern_weil_integral(space, twist, m, order):
    g = space.base
    cw = chern_weil_forms(space, twist)
    pts, w = g.quadrature(order)
    pts, _ = _principal_nodes(g, pts)
    total = 0.0
    for x, wi in zip(pts, w):
        total += wi * np.real(cw.integrand(x, m)) * _orbit_length(space, x)
    return space.p / TWO_PI * total


def geometric_index(space, twist, order=12):
    """(p/2pi) int_X Ahat ^ ch ^ omega_0."""
    return float(_chern_weil_integral(space, twist, 0, order))


def index_density_m(space, twist, m, order=12):
    """Integral of the m-th local index density; zero unless p divides m."""
    m = int(m)
    if m % space.p:
        return 0.0
    return float(_chern_weil_integral(space, twist, m, order))


# --------------------------------------------------------------------------
# self-adjointness

@dataclass
class SymmetryReport:
    matrix: np.ndarray
    stderr: np.ndarray
    asymmetry: float
    pooled_stderr: float

    @property
    def ratio(self):
        if self.pooled_stderr == 0:
            return 0.0 if self.asymmetry < 1e-12 else float("inf")
        return self.asymmetry / self.pooled_stderr

    @property
    def symmetric(self):
        return self.ratio < 3.0

    def to_dict(self):
        return {"asymmetry": self.asymmetry, "pooled_stderr": self.pooled_stderr,
                "ratio": self.ratio, "symmetric": bool(self.symmetric)}


def _reference_point(geometry):
    if geometry.dim == 2 and getattr(geometry, "curvature_constant", None) == 0.0:
        return np.zeros(2)
    return np.array([0.0, 0.0, 1.0])


def kernel_symmetry_check(space, kernel, spin, twist, t, points, n_paths, source, h=None,
                          reference=None, drift_fault=False):
    """Positive-chirality heat kernel matrix A_ij = p(t,x_i,x_j) E[R M tau]
    between test points, written in the radial gauge about one reference
    point, and its distance from being Hermitian."""
    g = space.base
    pts = np.asarray(points, float)
    ref = _reference_point(g) if reference is None else np.asarray(reference, float)
    P = len(pts)
    plus = np.repeat(np.real(np.diag(spin.grading)) > 0, twist.rank)
    A = np.zeros((P, P), complex)
    S = np.zeros((P, P))
    for i in range(P):
        for j in range(P):
            first = (i * P + j) * n_paths
            path = sample_bridge(g, kernel, pts[i], pts[j], t, h, source, n_paths,
                                 first_path=first, record=False, drift_fault=drift_fault)
            path.area = path.area + float(g.signed_area(ref[None], pts[i][None], pts[j][None])[0])
            st = evolve_transport(path, spin, twist, g)
            G = st.R[:, None, None] * (st.M @ st.tau)
            vals = np.trace(G[:, plus][:, :, plus], axis1=1, axis2=2)
            k = float(kernel(t, pts[i][None], pts[j][None])[0])
            A[i, j] = k * vals.mean()
            S[i, j] = k * np.std(vals, ddof=1) / math.sqrt(n_paths)
    diff = A - A.conj().T
    asym = float(np.sqrt(np.sum(np.abs(diff) ** 2)))
    pooled = float(np.sqrt(np.sum(S ** 2 + S.T ** 2)))
    return SymmetryReport(A, S, asym, pooled)


# --------------------------------------------------------------------------
# report

@dataclass
class IndexReport:
    space: str
    params: dict
    twist: dict
    analytic: IndexEstimate
    geometric: float
    seed: int
    runtime: float = 0.0

    @property
    def nearest_integer(self):
        return int(round(self.geometric))

    @property
    def quantized(self):
        return abs(self.geometric - self.nearest_integer) <= 1e-6

    @property
    def agrees(self):
        return abs(self.analytic.value - self.geometric) <= 3 * self.analytic.stderr

    @property
    def verdict(self):
        return "pass" if (self.agrees and self.quantized) else "fail"

    def to_dict(self):
        return {
            "schema": SCHEMA_VERSION,
            "space": self.space,
            "params": self.params,
            "twist": self.twist,
            "analytic": {"value": self.analytic.value, "stderr": self.analytic.stderr,
                         "N": self.analytic.n_paths, "t": self.analytic.t},
            "geometric": {"value": self.geometric},
            "nearest_integer": self.nearest_integer,
            "verdict": self.verdict,
            "seed": self.seed,
            "versions": versions(),
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), sort_keys=True, indent=2) + "\n"


def versions():
    import scipy
    from . import __version__
    return {"transindex": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return float(repr(v)) if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def index_report(space, kernel, spin, twist, t, n_paths, source, twist_params=None,
                 order=4, h=None, workers=1, cw_order=12):
    t0 = time.perf_counter()
    est = mckean_singer_index(space, kernel, spin, twist, t, n_paths, source, order, h, workers)
    geo = geometric_index(space, twist, cw_order)
    return IndexReport(space.name, dict(space.params), dict(twist_params or {"name": twist.name}),
                       est, geo, int(source.seed), time.perf_counter() - t0)
