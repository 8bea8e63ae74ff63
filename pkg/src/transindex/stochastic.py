"""Brownian paths and bridges on the model quotients with the Feynman-Kac
factors carried along them.

Paths are simulated in batches: arrays have a leading step axis and a path
axis.  Every path owns a random substream keyed by (seed, path index), so
results do not depend on how paths are grouped or distributed to workers.
"""
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import expm

from .clifford import dstar, rotation_generator, supertrace
from .geometry import Circle, FlatTorus, Football, RoundSphere, TWO_PI
from .heatkernel import KERNEL_FLOOR, DriftUnavailable


# --------------------------------------------------------------------------
# random numbers

@dataclass(frozen=True)
class RandomSource:
    """Seeded family of independent per-path generators."""
    seed: int

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("a seed is required")

    def substream(self, index):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(index),))
        return np.random.Generator(np.random.PCG64(ss))

    def normals(self, first, count, shape):
        """Standard normals for paths first..first+count-1, shape (steps, count, n)."""
        return self.draws(first, count, shape)[0]

    def draws(self, first, count, shape):
        """Per-path normals (steps, count, n), then per-step standard logistic
        and standard normal variables (steps, count, 2), one substream per path."""
        out = np.empty((shape[0], count) + tuple(shape[1:]))
        extra = np.empty((shape[0], count, 2))
        for i in range(count):
            g = self.substream(first + i)
            out[:, i] = g.standard_normal(shape)
            extra[:, i, 0] = g.logistic(0.0, 1.0, shape[0])
            extra[:, i, 1] = g.standard_normal(shape[0])
        return out, extra


# --------------------------------------------------------------------------
# data

@dataclass
class BridgePath:
    """A batch of sampled paths (bridges when ``endpoint`` is set).

    points   (K+1, B, d)   representatives on M
    cover    (K+1, B, d)   continuous lift on the cover (sphere or plane)
    frames   (K+1, B, d, n) orthonormal frames transported along the path
    area     (B,)          signed fan area swept from the start point
    """
    times: np.ndarray
    points: np.ndarray
    cover: np.ndarray
    frames: np.ndarray
    start: np.ndarray
    endpoint: Optional[np.ndarray]
    area: np.ndarray
    max_drift: np.ndarray
    rejected: int = 0
    valid: np.ndarray = None
    increments: np.ndarray = None

    @property
    def n_paths(self):
        return self.points.shape[1]

    @property
    def T(self):
        return float(self.times[-1])


@dataclass
class TransportState:
    """Final Feynman-Kac factors for each path of a batch.

    tau   (B, D, D) transport spinor (x) twist, D = dim(Delta) * rank
    M     (B, D, D) curvature factor
    R     (B,)      exp(-1/8 int S)
    v     (B, n, n) skew matrix with spin part of tau = exp(dstar(v))
    B     (B, D, D) log of M when the curvature insertions commute (n = 2)
    """
    tau: np.ndarray
    M: np.ndarray
    R: np.ndarray
    v: np.ndarray
    tau_twist: np.ndarray
    logM: np.ndarray
    valid: np.ndarray
    unitarity: np.ndarray


# --------------------------------------------------------------------------
# geometry helpers

def _is_flat(g):
    return isinstance(g, (FlatTorus, Circle))


def _check_supported(g):
    if not (_is_flat(g) or isinstance(g, RoundSphere)):
        raise NotImplementedError(f"path simulation is not available on {g.name}")


def _initial_frame(g, x, B):
    if _is_flat(g):
        return np.broadcast_to(np.eye(g.dim), (B, g.dim, g.dim)).copy()
    return np.broadcast_to(g.frame(np.asarray(x, float)[None])[0], (B,) + (3, 2)).copy()


def _step(g, x, v, F):
    """Move along exp and transport frames; returns (x, F)."""
    if _is_flat(g):
        return x + v, F
    if isinstance(g, Football):
        newx, newF, _ = RoundSphere.step(g, x, v, F)
        return newx, newF
    if isinstance(g, RoundSphere):
        newx, newF, _ = g.step(x, v, F)
        return newx, newF
    raise NotImplementedError(f"path simulation is not available on {g.name}")


def _fold(g, x):
    if _is_flat(g):
        return g.fold(x)[0]
    return g.fold(x)[0]


def _log_cover(g, a, b):
    if _is_flat(g):
        return g.log(a, b)
    return RoundSphere.log(g, a, b)


def _tangent_project(g, x, w):
    if _is_flat(g):
        return w
    xu = x / np.linalg.norm(x, axis=-1, keepdims=True)
    return w - np.sum(w * xu, axis=-1, keepdims=True) * xu


def _fan(g, base, a, b):
    return g.signed_area(base, a, b)


def _check_h(g, T, h):
    if h <= 0 or T <= 0:
        raise ValueError("T and h must be positive")
    if h > (g.injectivity_floor / 10) ** 2:
        raise ValueError("step h too large for the injectivity floor")
    K = int(math.ceil(T / h - 1e-9))
    return np.linspace(0.0, T, K + 1)


# --------------------------------------------------------------------------
# sampling

def _substep_area(dt, chord, extra):
    """Area between a Brownian step of duration dt and its chord.

    Writing the step as chord + W with W a bridge from 0 to 0, the area is
    the Levy area of W, whose law is (dt/pi) Logistic(0, 1/2), plus
    (int W ds) x chord/dt, centred Gaussian with variance |chord|^2 dt/12.
    """
    return dt / np.pi * 0.5 * extra[..., 0] + np.sqrt(dt / 12.0) * chord * extra[..., 1]


def sample_path(geometry, x, T, h=None, source=None, n_paths=1, first_path=0,
                record=True, substep_area=True):
    """Geodesic random walk with covariance h*Id per step in the moving frame.

    The fan area swept by the path (used for holonomies) adds the area of
    the Brownian excursion inside each step to the area of the chords.
    """
    if source is None:
        raise ValueError("a RandomSource is required")
    _check_supported(geometry)
    h = T / 200 if h is None else h
    times = _check_h(geometry, T, h)
    K = times.size - 1
    n = geometry.dim
    B = n_paths
    xi, extra = source.draws(first_path, B, (K, n))
    x0 = np.broadcast_to(np.asarray(x, float), (B,) + np.shape(x)).copy()
    F = _initial_frame(geometry, x, B)
    pts = [x0.copy()]
    frames = [F.copy()]
    area = np.zeros(B)
    cur = x0.copy()
    rejected = 0
    floor = geometry.injectivity_floor
    incs = []
    for k in range(K):
        dt = times[k + 1] - times[k]
        e = xi[k] * np.sqrt(dt)
        big = np.linalg.norm(e, axis=-1) >= floor
        if np.any(big):
            rejected += int(np.sum(big))
            e[big] *= 0.5 * floor / np.linalg.norm(e[big], axis=-1, keepdims=True)
        v = np.einsum('bdn,bn->bd', F, e)
        new, F = _step(geometry, cur, v, F)
        area += _fan(geometry, x0, cur, new)
        if substep_area:
            area += _substep_area(dt, np.linalg.norm(v, axis=-1), extra[k])
        cur = new
        incs.append(e)
        if record:
            pts.append(cur.copy())
            frames.append(F.copy())
    if not record:
        pts.append(cur.copy())
        frames.append(F.copy())
        times_out = np.array([0.0, T])
    else:
        times_out = times
    cover = np.array(pts)
    folded = _fold(geometry, cover)
    return BridgePath(times_out, folded, cover, np.array(frames), x0[0], None, area,
                      np.zeros(B), rejected, np.ones(B, bool), np.array(incs))


def sample_bridge(geometry, kernel, x, y, T, h=None, source=None, n_paths=1, first_path=0,
                  record=True, drift_fault=False, substep_area=True):
    """Euler scheme with the Doob drift grad ln p(T-s, X_s, y); the noise of
    each step is scaled by (T - s_{k+1})/(T - s_k) and the last step lands
    on y."""
    if source is None:
        raise ValueError("a RandomSource is required")
    _check_supported(geometry)
    h = T / 200 if h is None else h
    times = _check_h(geometry, T, h)
    K = times.size - 1
    n = geometry.dim
    B = n_paths
    xi, extra = source.draws(first_path, B, (K, n))
    x0 = np.broadcast_to(np.asarray(x, float), (B,) + np.shape(x)).copy()
    y = np.asarray(y, float)
    yb = np.broadcast_to(y, x0.shape)
    F = _initial_frame(geometry, x, B)
    pts = [x0.copy()]
    frames = [F.copy()]
    area = np.zeros(B)
    cur = x0.copy()
    max_drift = np.zeros(B)
    valid = np.ones(B, bool)
    sign = -1.0 if drift_fault else 1.0
    for k in range(K):
        s, s1 = times[k], times[k + 1]
        dt = s1 - s
        if k == K - 1:
            v = _log_cover(geometry, cur, yb)
        else:
            rem = T - s
            p, b = kernel.drift_field(rem)(cur if _is_flat(geometry) else _fold(geometry, cur), yb)
            bad = p <= KERNEL_FLOOR
            if np.any(bad):
                valid &= ~bad
            b = np.where(bad[:, None], 0.0, b)
            b = _tangent_project(geometry, cur, b)
            max_drift = np.maximum(max_drift, np.linalg.norm(b, axis=-1))
            scale = np.sqrt(dt * (T - s1) / (T - s))
            e = xi[k] * scale
            v = sign * b * dt + np.einsum('bdn,bn->bd', F, e)
        new, F = _step(geometry, cur, v, F)
        area += _fan(geometry, x0, cur, new)
        if substep_area:
            area += _substep_area(dt, np.linalg.norm(v, axis=-1), extra[k])
        cur = new
        if record or k == K - 1:
            pts.append(cur.copy())
            frames.append(F.copy())
    times_out = times if record else np.array([0.0, T])
    cover = np.array(pts)
    folded = _fold(geometry, cover)
    return BridgePath(times_out, folded, cover, np.array(frames), x0[0], y, area,
                      max_drift, 0, valid)


# --------------------------------------------------------------------------
# transport

def evolve_transport(path, spin, twist, geometry, substeps=1):
    """Feynman-Kac factors along each path of the batch.

    Spinor transport comes from the holonomy of the path's tangent frame,
    written through the fan area (rotation by K * area for a closed loop);
    twist transport from the twist connection in the radial gauge at the
    start point.  M solves dM/dt = M A(t) with A = -1/4 sum c_j c_k (x) L_jk,
    stepped with the fourth-order Taylor map of each (piecewise constant)
    segment; R uses the trapezoidal rule for int S.
    """
    B = path.n_paths
    n = spin.n
    r = twist.rank
    D = spin.dim * r
    times = path.times
    K = times.size - 1
    Kc = geometry.curvature_constant
    J = rotation_generator(n)
    if Kc is None:
        raise NotImplementedError("transport needs constant curvature on the path's base")
    # spinor part of tau (inverse transport), v skew
    v = (-Kc * path.area)[:, None, None] * J[None]
    Ups = expm(dstar(v, spin))
    tw = _expm_batch(twist.F0, path.area)            # inverse twist holonomy
    tau = np.einsum('bij,bkl->bikjl', Ups, tw).reshape(B, D, D)
    # curvature factor
    C = spin.generators
    cc = np.einsum('iab,jbc->ijac', C, C)
    M = np.broadcast_to(np.eye(D, dtype=complex), (B, D, D)).copy()
    logM = np.zeros((B, D, D), complex)
    pts = path.points
    for k in range(K):
        dt = times[k + 1] - times[k]
        xm = pts[k]
        L = twist.curvature(xm, n)                     # (B, n, n, r, r)
        A = -0.25 * np.einsum('ijac,bijkl->bakcl', cc, L).reshape(B, D, D)
        Ah = A * dt
        logM += Ah
        step = np.eye(D) + Ah + Ah @ Ah / 2 + Ah @ Ah @ Ah / 6 + Ah @ Ah @ Ah @ Ah / 24
        M = M @ step
    # scalar curvature factor
    S = np.array([geometry.scalar_curvature(p) for p in pts])   # (K+1, B)
    dts = np.diff(times)
    intS = np.sum(0.5 * (S[:-1] + S[1:]) * dts[:, None], axis=0)
    R = np.exp(-intS / 8)
    uni = np.linalg.norm(np.conj(np.swapaxes(tau, -1, -2)) @ tau - np.eye(D), axis=(-2, -1))
    valid = (uni < 1e-6) & (path.valid if path.valid is not None else True)
    return TransportState(tau, M, R, v, tw, logM, valid, uni)


def _expm_batch(F0, s):
    w, V = np.linalg.eig(F0)
    e = np.exp(np.multiply.outer(np.asarray(s, float), w))
    return np.einsum('ij,bj,jk->bik', V, e, np.linalg.inv(V))


def path_supertrace(state, spin, rank, truncated=False, orders=12):
    """R * str(M tau) per path; with ``truncated`` the product is expanded as
    sum_{i+j >= l} m_i (dstar v)^j / j! (x) twist transport, dropping the
    terms that the grading kills."""
    if not truncated:
        return state.R * supertrace(state.M @ state.tau, spin, rank)
    ell = spin.n // 2
    D = spin.dim * rank
    B = state.M.shape[0]
    X = np.einsum('bij,kl->bikjl', dstar(state.v, spin), np.eye(rank)).reshape(B, D, D)
    tw = np.einsum('ij,bkl->bikjl', np.eye(spin.dim), state.tau_twist).reshape(B, D, D)
    m = [np.broadcast_to(np.eye(D, dtype=complex), (B, D, D))]
    u = [np.broadcast_to(np.eye(D, dtype=complex), (B, D, D))]
    for i in range(1, orders + 1):
        m.append(m[-1] @ state.logM / i)
        u.append(u[-1] @ X / i)
    total = np.zeros((B, D, D), complex)
    for i in range(orders + 1):
        for j in range(orders + 1 - i):
            if i + j >= ell:
                total = total + m[i] @ u[j]
    return state.R * supertrace(total @ tw, spin, rank)


def low_order_supertraces(state, spin, rank, orders=12):
    """max |str(m_i (dstar v)^j / j!)| over i + j < l for each path."""
    ell = spin.n // 2
    D = spin.dim * rank
    B = state.M.shape[0]
    X = np.einsum('bij,kl->bikjl', dstar(state.v, spin), np.eye(rank)).reshape(B, D, D)
    m = [np.broadcast_to(np.eye(D, dtype=complex), (B, D, D))]
    u = [np.broadcast_to(np.eye(D, dtype=complex), (B, D, D))]
    for i in range(1, ell):
        m.append(m[-1] @ state.logM / i)
        u.append(u[-1] @ X / i)
    worst = np.zeros(B)
    for i in range(ell):
        for j in range(ell - i):
            worst = np.maximum(worst, np.abs(supertrace(m[i] @ u[j], spin, rank)))
    return worst


# --------------------------------------------------------------------------
# parallel block driver

def run_blocks(func, n_paths, block=512, workers=1, args=()):
    """Evaluate func(first, count, *args) over consecutive path blocks and
    return the results in block order."""
    starts = list(range(0, n_paths, block))
    counts = [min(block, n_paths - s) for s in starts]
    if workers <= 1:
        return [func(s, c, *args) for s, c in zip(starts, counts)]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(func, s, c, *args) for s, c in zip(starts, counts)]
        return [f.result() for f in futs]


# --------------------------------------------------------------------------
# Feynman-Kac

@dataclass
class FKResult:
    value: np.ndarray
    stderr: np.ndarray
    n_paths: int
    widened: bool = False


def feynman_kac_solve(geometry, spin, twist, theta0, t, x, n_paths, source, h=None,
                      tol=None, scalar=False):
    """Monte Carlo value of E[R M tau theta0(X_t)] at x.

    ``theta0(points)`` returns fiber vectors (B, D) written in the radial
    gauge about x.  With ``scalar`` the fiber data is dropped (R M tau = 1)
    and theta0 returns scalars.
    """
    path = sample_path(geometry, x, t, h, source, n_paths, record=True)
    end = path.points[-1]
    vals = np.asarray(theta0(end))
    if scalar:
        samples = vals.reshape(n_paths, -1)
    else:
        st = evolve_transport(path, spin, twist, geometry)
        samples = st.R[:, None] * np.einsum('bij,bjk,bk->bi', st.M, st.tau, vals)
    mean = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(n_paths)
    widened = False
    if tol is not None and np.any(se > tol):
        widened = True
        se = se * 2.0
    return FKResult(mean, se, n_paths, widened)


# --------------------------------------------------------------------------
# exit times

# E[max of a Gaussian random walk overshoot] / sqrt(step variance): -zeta(1/2)/sqrt(2pi)
OVERSHOOT = 0.5825971579390106


def exit_time(geometry, x, radius, h, source, n_paths, t_max=None, first_path=0,
              chunk=2000, monitoring_correction=True):
    """First time the walk leaves the geodesic ball of ``radius`` about x
    (flat geometries); returns per-path exit times.

    A walk checked only at multiples of h overshoots the boundary; with
    ``monitoring_correction`` the discrete walk is stopped at the radius
    shrunk by OVERSHOOT * sqrt(h), which matches the continuous exit time
    to O(h).
    """
    if not _is_flat(geometry):
        raise NotImplementedError("exit-time helper is implemented for flat geometries")
    if monitoring_correction:
        radius = radius - OVERSHOOT * math.sqrt(h)
        if radius <= 0:
            raise ValueError("step too large for the exit radius")
    n = geometry.dim
    t_max = 50 * radius ** 2 if t_max is None else t_max
    out = np.empty(n_paths)
    sq = np.sqrt(h)
    for i in range(n_paths):
        rng = source.substream(first_path + i)
        pos = np.zeros(n)
        tt = 0.0
        done = False
        while not done and tt < t_max:
            steps = rng.standard_normal((chunk, n)) * sq
            traj = pos + np.cumsum(steps, axis=0)
            r2 = np.sum(traj ** 2, axis=-1)
            hit = np.nonzero(r2 >= radius ** 2)[0]
            if hit.size:
                out[i] = tt + (hit[0] + 1) * h
                done = True
            else:
                pos = traj[-1]
                tt += chunk * h
        if not done:
            out[i] = np.nan
    return out


def path_dump_rows(path, state=None, limit=100000):
    """Rows (path_id, k, t_k, coordinates..., R, |M - I|) for debugging dumps."""
    K1, B = path.points.shape[:2]
    if K1 * B > limit:
        raise ValueError("path dump exceeds the size guard")
    rows = []
    R = state.R if state is not None else np.ones(B)
    dev = (np.linalg.norm(state.M - np.eye(state.M.shape[-1]), axis=(-2, -1))
           if state is not None else np.zeros(B))
    for b in range(B):
        for k in range(K1):
            rows.append([b, k, float(path.times[k])] + [float(c) for c in path.points[k, b]]
                        + [float(R[b]) if k == K1 - 1 else 1.0, float(dev[b]) if k == K1 - 1 else 0.0])
    return rows
