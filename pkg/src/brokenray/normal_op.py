"""Adjoint, normal operator, reflect kernel, principal symbol and visibility."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .cutoff import Cutoff
from .field import (H_SIGMA, AttenuationField, GridFunction, SupportRegion, ZeroAttenuation,
                    _att_at, attenuation_profiles, is_smooth, weight_w_reg_batch)
from .geometry import AccessSet, Termination, incidence_angle, points_to_s, trace_many
from .transform import BrokenRayTransform, SinogramGrid
from .unfolding import (reflect_angle, reflect_point, relative_angle_map, relative_point_map,
                        tile_of, unreflect_angle, unreflect_point)

TWO_PI = 2.0 * math.pi


class KernelDomainError(ValueError):
    pass


@dataclass
class CovectorSample:
    x: tuple[float, float]
    xi: float
    value: float


# ---------------------------------------------------------------------------
# discrete operators (thin wrappers)
# ---------------------------------------------------------------------------

def backproject_discrete(op: BrokenRayTransform, g) -> GridFunction:
    return op.adjoint(g)


def normal_apply(op: BrokenRayTransform, f) -> GridFunction:
    return op.normal(f)


def normal_split(op: BrokenRayTransform, f):
    return op.normal_split(f)


# ---------------------------------------------------------------------------
# tracing through interior points
# ---------------------------------------------------------------------------

@njit(cache=True)
def _reverse_paths(segs, nseg):
    out = np.zeros_like(segs)
    for r in range(segs.shape[0]):
        n = nseg[r]
        for j in range(n):
            src = segs[r, n - 1 - j]
            out[r, j, 0] = src[2]
            out[r, j, 1] = src[3]
            out[r, j, 2] = src[0]
            out[r, j, 3] = src[1]
            out[r, j, 4] = -src[4]
            out[r, j, 5] = -src[5]
            out[r, j, 6] = src[6]
    return out


@njit(cache=True)
def _totals(offsets, s_nodes, a_nodes, lengths, h, smooth):
    out = np.zeros(lengths.shape[0])
    if a_nodes.shape[0] == 0:
        return out
    for r in range(lengths.shape[0]):
        a = offsets[r]
        b = offsets[r + 1]
        if b - a >= 2:
            out[r] = _att_at(lengths[r], a_nodes[a:b], s_nodes[a:b], h, smooth)
    return out


@dataclass
class ThroughRays:
    """Maximal broken rays through interior points, oriented along ``theta`` at x."""

    regular: np.ndarray
    start: np.ndarray        # boundary point where the ray is launched
    start_theta: np.ndarray  # launch direction
    j: np.ndarray            # reflections between launch and x
    n_total: np.ndarray
    to_x: np.ndarray         # arclength from launch to x
    weight: np.ndarray       # exp(-A) at x


def trace_through(points, theta, E: AccessSet, n_max: int,
                  sigma: AttenuationField | None = None, h: float = H_SIGMA) -> ThroughRays:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    th = np.broadcast_to(np.asarray(theta, dtype=np.float64), (len(pts),)).copy()
    fwd = trace_many(pts[:, 0], pts[:, 1], th, E, n_max, check_start=False)
    bwd = trace_many(pts[:, 0], pts[:, 1], th + math.pi, E, n_max, check_start=False)
    regular = ((fwd.termination == Termination.HitE) & (bwd.termination == Termination.HitE)
               & (fwd.n_effective + bwd.n_effective <= n_max))
    last = np.maximum(bwd.nseg - 1, 0)
    rows = np.arange(len(pts))
    seg = bwd.segs[rows, last]
    start = seg[:, 2:4].copy()
    start_theta = np.mod(np.arctan2(-seg[:, 5], -seg[:, 4]), TWO_PI)
    to_x = bwd.lengths()
    weight = np.ones(len(pts))
    if sigma is not None and not sigma.is_zero:
        rev = _reverse_paths(bwd.segs, bwd.nseg)
        off, s_nodes, a_nodes = attenuation_profiles(sigma, rev, bwd.nseg, h)
        weight = np.exp(-_totals(off, s_nodes, a_nodes, to_x, h, is_smooth(sigma)))
    return ThroughRays(regular, start, start_theta, bwd.nseg - 1, bwd.nseg + fwd.nseg - 2,
                       to_x, weight)


# ---------------------------------------------------------------------------
# analytic backprojection
# ---------------------------------------------------------------------------

def sinogram_interpolator(sino: SinogramGrid):
    """Bilinear interpolation of sinogram values in (s, phi); masked cells count as 0."""
    vals = np.where(sino.mask, sino.values, 0.0)
    s_samples = sino.s_samples
    order = np.argsort(s_samples)
    s_sorted = s_samples[order]
    v_sorted = vals[order]
    phis = sino.phi_samples

    def g(s, phi):
        s = np.asarray(s, dtype=np.float64) % 4.0
        phi = np.asarray(phi, dtype=np.float64)
        i = np.clip(np.searchsorted(s_sorted, s) - 1, 0, len(s_sorted) - 2)
        ds = s_sorted[i + 1] - s_sorted[i]
        fs = np.clip((s - s_sorted[i]) / np.where(ds > 0, ds, 1.0), 0.0, 1.0)
        k = np.clip(np.searchsorted(phis, phi) - 1, 0, len(phis) - 2)
        fp = np.clip((phi - phis[k]) / (phis[k + 1] - phis[k]), 0.0, 1.0)
        out = ((1 - fs) * ((1 - fp) * v_sorted[i, k] + fp * v_sorted[i, k + 1])
               + fs * ((1 - fp) * v_sorted[i + 1, k] + fp * v_sorted[i + 1, k + 1]))
        return out

    return g


def backproject_analytic(g, E: AccessSet, n_max: int, nx: int,
                         sigma: AttenuationField | None = None, alpha: Cutoff | None = None,
                         n_angles: int = 720, h: float = H_SIGMA,
                         chunk: int = 1 << 18) -> GridFunction:
    """Angular-integral backprojection at grid centres by backward tracing.

    ``g`` is a callable ``g(s, phi)`` or a SinogramGrid (interpolated).
    """
    if isinstance(g, SinogramGrid):
        g = sinogram_interpolator(g)
    grid = GridFunction(np.zeros((nx, nx)))
    pts = grid.center_points()
    thetas = (np.arange(n_angles) + 0.5) * TWO_PI / n_angles
    P = np.repeat(pts, n_angles, axis=0)
    T = np.tile(thetas, len(pts))
    acc = np.zeros(len(P))
    for a in range(0, len(P), chunk):
        b = min(a + chunk, len(P))
        tr = trace_through(P[a:b], T[a:b], E, n_max, sigma, h)
        ok = tr.regular
        s = points_to_s(tr.start[ok]) if ok.any() else np.zeros(0)
        phi = incidence_angle(s, tr.start_theta[ok])
        val = np.zeros(b - a)
        val[ok] = g(s, phi) * tr.weight[ok]
        if alpha is not None and not alpha.is_unit:
            val[ok] *= alpha.eval_alpha_xy(tr.start[ok], tr.start_theta[ok])
        acc[a:b] = val
    out = acc.reshape(len(pts), n_angles).sum(axis=1) * (TWO_PI / n_angles)
    return GridFunction(out.reshape(nx, nx))


# ---------------------------------------------------------------------------
# reflect kernel
# ---------------------------------------------------------------------------

def _check_kernel_points(x, y, K: SupportRegion | None):
    if K is None:
        return
    for p in (x, y):
        bad = ((p[:, 0] < K.lo - 1e-12) | (p[:, 0] > K.hi + 1e-12)
               | (p[:, 1] < K.lo - 1e-12) | (p[:, 1] > K.hi + 1e-12))
        if bad.any():
            raise KernelDomainError("kernel points must lie in the support region K")


def reflect_kernel(x, y, sigma: AttenuationField | None, alpha: Cutoff,
                   K: SupportRegion | None = SupportRegion(), h: float = H_SIGMA,
                   chunk: int = 1 << 14) -> np.ndarray:
    """Smooth kernel of the cross-segment part of the normal operator, for pairs (x_i, y_i).

    Sums over beams and segment pairs j1 != j2 of the squared cutoff read off
    at the launching line, the two regularised weights and 1 / |y~ - x|,
    where y~ is y carried into the frame of segment j1. Pairs are processed
    in chunks to bound the attenuation quadrature memory.
    """
    if alpha.is_unit:
        return reflect_kernel_traced(x, y, sigma, alpha.E, alpha.n_max, K, h)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    _check_kernel_points(x, y, K)
    out = np.zeros(len(x))
    for a in range(0, len(x), chunk):
        b = min(a + chunk, len(x))
        out[a:b] = _reflect_kernel_beams(x[a:b], y[a:b], sigma, alpha, h)
    return out


def _reflect_kernel_beams(x, y, sigma, alpha: Cutoff, h: float) -> np.ndarray:
    out = np.zeros(len(x))
    for beam in alpha.beams:
        tiles = beam.tiles
        for j1 in range(len(tiles)):
            for j2 in range(len(tiles)):
                if j1 == j2:
                    continue
                t1, t2 = tiles[j1], tiles[j2]
                yt = relative_point_map(y, t2, t1)
                d = yt - x
                dist = np.hypot(d[:, 0], d[:, 1])
                sgn = 1.0 if j2 > j1 else -1.0
                theta = np.mod(np.arctan2(sgn * d[:, 1], sgn * d[:, 0]), TWO_PI)
                a = beam.value_xy(reflect_point(x, t1), unreflect_angle(theta, t1))
                live = a > 0
                if not live.any():
                    continue
                eta = relative_angle_map(theta[live], t1, t2)
                w1 = weight_w_reg_batch(sigma, x[live], theta[live], j1, tiles, h)
                w2 = weight_w_reg_batch(sigma, y[live], eta, j2, tiles, h)
                out[live] += a[live] ** 2 * w1 * w2 / dist[live]
    return out


def reflect_kernel_traced(x, y, sigma, E: AccessSet, n_max: int,
                          K: SupportRegion | None = SupportRegion(), h: float = H_SIGMA,
                          alpha: Cutoff | None = None) -> np.ndarray:
    """Same kernel evaluated by enumerating mirror copies of y and tracing the joining lines.

    For every tile l other than (0, 0) within reach of the reflection budget,
    the line from x to R_l(y) is traced in both orientations; a regular
    trajectory that reaches R_l(y) contributes alpha^2 w(x) w(y) / |R_l(y) - x|.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    _check_kernel_points(x, y, K)
    reach = n_max + 1
    out = np.zeros(len(x))
    for l1 in range(-reach, reach + 1):
        for l2 in range(-reach, reach + 1):
            if (l1, l2) == (0, 0) or abs(l1) + abs(l2) > 2 * reach:
                continue
            yt = reflect_point(y, (l1, l2))
            d = yt - x
            dist = np.hypot(d[:, 0], d[:, 1])
            base = np.arctan2(d[:, 1], d[:, 0])
            # y sits at arclength dist ahead of x along the base direction
            ahead = trace_many(x[:, 0], x[:, 1], base, E, n_max, check_start=False)
            reach_ok = ahead.lengths() > dist
            for flip in (0.0, math.pi):
                theta = np.mod(base + flip, TWO_PI)
                tx = trace_through(x, theta, E, n_max, sigma, h)
                live = tx.regular & reach_ok
                if not live.any():
                    continue
                # weight at y: same launch, arclength to_x +/- dist
                ty = _weight_at_offset(x[live], theta[live], tx, live,
                                       dist[live] * (1.0 if flip == 0.0 else -1.0),
                                       E, n_max, sigma, h)
                a = np.ones(live.sum())
                if alpha is not None and not alpha.is_unit:
                    a = alpha.eval_alpha_xy(tx.start[live], tx.start_theta[live])
                out[live] += a ** 2 * tx.weight[live] * ty / dist[live]
    return out


def _weight_at_offset(x, theta, tx: ThroughRays, live, offset, E, n_max, sigma, h):
    """exp(-A) at the point ``offset`` arclength after x along the traced ray."""
    if sigma is None or sigma.is_zero:
        return np.ones(len(x))
    ux, uy = np.cos(theta), np.sin(theta)
    unf = x + offset[:, None] * np.stack([ux, uy], axis=1)
    yl, (l1, l2) = _fold_many(unf)
    eta = reflect_angle(theta, (l1, l2))
    ty = trace_through(yl, eta, E, n_max, sigma, h)
    return ty.weight


def _fold_many(w):
    l1, l2 = tile_of(w)
    return unreflect_point(w, (l1, l2)), (l1, l2)


# ---------------------------------------------------------------------------
# substitution map
# ---------------------------------------------------------------------------

def substitution_point(x, theta, t):
    """Folded image of x + t theta: the point of the broken ray reached after arclength t."""
    x = np.asarray(x, dtype=np.float64)
    w = x + np.asarray(t, dtype=np.float64)[..., None] * np.stack(
        [np.cos(theta), np.sin(theta)], axis=-1)
    y, _ = _fold_many(np.atleast_2d(w))
    return y


def substitution_jacobian(x, theta, t, eps: float = 1e-6) -> float:
    """Central-difference |det d(theta, t) -> y| of :func:`substitution_point`."""
    def f(a, b):
        return substitution_point(x, a, b)[0]
    d_th = (f(theta + eps, t) - f(theta - eps, t)) / (2 * eps)
    d_t = (f(theta, t + eps) - f(theta, t - eps)) / (2 * eps)
    return float(abs(d_th[0] * d_t[1] - d_th[1] * d_t[0]))


# ---------------------------------------------------------------------------
# principal symbol and visibility
# ---------------------------------------------------------------------------

def principal_symbol(x, xi, E: AccessSet, n_max: int, sigma: AttenuationField | None = None,
                     alpha: Cutoff | None = None, xi_norm: float = 1.0, h: float = H_SIGMA):
    """(a0, a0 / |xi|) at covectors (x_i, xi_i); xi is the covector direction angle."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    xi = np.broadcast_to(np.asarray(xi, dtype=np.float64), (len(x),))
    a0 = np.zeros(len(x))
    for sgn in (1.0, -1.0):
        theta = np.mod(xi + sgn * 0.5 * math.pi, TWO_PI)
        tr = trace_through(x, theta, E, n_max, sigma, h)
        a = tr.regular.astype(float)
        if alpha is not None and not alpha.is_unit and tr.regular.any():
            a[tr.regular] = alpha.eval_alpha_xy(tr.start[tr.regular], tr.start_theta[tr.regular])
        a0 += a ** 2 * tr.weight ** 2
    a0 *= TWO_PI
    return a0, a0 / xi_norm


def visible(x, theta, E: AccessSet, n_max: int) -> np.ndarray:
    """Both halves of the trajectory through (x, theta) reach E regularly within the budget."""
    return trace_through(x, theta, E, n_max).regular


def visible_set_map(E: AccessSet, n_max: int, nx: int, ntheta: int = 360,
                    chunk: int = 1 << 17) -> GridFunction:
    grid = GridFunction(np.zeros((nx, nx)))
    pts = grid.center_points()
    thetas = np.arange(ntheta) * TWO_PI / ntheta
    ok = np.ones(len(pts), dtype=bool)
    per = max(1, chunk // ntheta)
    for a in range(0, len(pts), per):
        b = min(a + per, len(pts))
        P = np.repeat(pts[a:b], ntheta, axis=0)
        T = np.tile(thetas, b - a)
        ok[a:b] = visible(P, T, E, n_max).reshape(b - a, ntheta).all(axis=1)
    return GridFunction(ok.astype(float).reshape(nx, nx))


# ---------------------------------------------------------------------------
# covector maps
# ---------------------------------------------------------------------------

COVECTOR_HEADER = "x1,x2,xi,value"


def symbol_map(E: AccessSet, n_max: int, nx: int, nxi: int, sigma: AttenuationField | None = None,
               alpha: Cutoff | None = None) -> list[CovectorSample]:
    """Principal symbol on pixel centres times ``nxi`` covector directions in [0, pi)."""
    pts = GridFunction(np.zeros((nx, nx))).center_points()
    xis = np.arange(nxi) * math.pi / nxi
    P = np.repeat(pts, nxi, axis=0)
    X = np.tile(xis, len(pts))
    a0, _ = principal_symbol(P, X, E, n_max, sigma, alpha)
    return [CovectorSample((float(p[0]), float(p[1])), float(t), float(v))
            for p, t, v in zip(P, X, a0)]


def write_covector_csv(path, samples) -> None:
    rows = np.array([(s.x[0], s.x[1], s.xi, s.value) for s in samples], dtype=np.float64)
    np.savetxt(path, rows.reshape(-1, 4), delimiter=",", header=COVECTOR_HEADER, comments="",
               fmt="%.17g")


def read_covector_csv(path) -> list[CovectorSample]:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return [CovectorSample((r[0], r[1]), r[2], r[3]) for r in rows]
