"""Grid functions, attenuation fields, line integrals and the attenuation weights.

Grid values live at cell centres ``((i + 1/2) dx, (j + 1/2) dy)``. Sampling is
bilinear between centres, constant across the half-cell rim next to the
boundary, and zero outside the closed square.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .geometry import BALL_CENTER, BALL_RADIUS, BrokenRay, ball_entry
from .unfolding import reflect_angle, reflect_point, unreflect_angle, unreflect_point

H_SIGMA = 1.0 / 512.0
DEFAULT_MARGIN = 0.2


class FieldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# profiles
# ---------------------------------------------------------------------------

def bump(t):
    """Smooth bump exp(1 - 1/(1 - t^2)) on (-1, 1), zero elsewhere; bump(0) = 1."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    inside = np.abs(t) < 1.0
    ti = t[inside]
    out[inside] = np.exp(1.0 - 1.0 / (1.0 - ti * ti))
    return out if out.ndim else float(out)


def radial_bump(points, center, radius):
    p = np.asarray(points, dtype=np.float64)
    r = np.hypot(p[..., 0] - center[0], p[..., 1] - center[1]) / radius
    return bump(r)


# ---------------------------------------------------------------------------
# grid functions
# ---------------------------------------------------------------------------

@dataclass
class GridFunction:
    values: np.ndarray
    kind: str = "f"
    margin: float = 0.0
    origin: tuple[float, float] = (0.0, 0.0)
    spacing: tuple[float, float] | None = None

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.ndim != 2 or min(v.shape) < 2:
            raise FieldError("grid values must be a 2-D array with at least 2x2 cells")
        if not np.all(np.isfinite(v)):
            raise FieldError("grid values must be finite")
        self.values = v
        if self.spacing is None:
            self.spacing = (1.0 / v.shape[0], 1.0 / v.shape[1])
        if tuple(self.origin) != (0.0, 0.0) or not np.allclose(
                np.array(self.spacing) * v.shape, 1.0, atol=1e-12):
            raise FieldError("grid must cover the unit square with origin (0, 0)")
        if self.kind not in ("f", "sigma"):
            raise FieldError(f"unknown grid kind {self.kind!r}")
        if self.kind == "sigma":
            check_margin(self, self.margin)

    @property
    def nx(self) -> int:
        return self.values.shape[0]

    @property
    def ny(self) -> int:
        return self.values.shape[1]

    @property
    def dx(self) -> float:
        return self.spacing[0]

    @property
    def dy(self) -> float:
        return self.spacing[1]

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    def centers(self):
        xs = (np.arange(self.nx) + 0.5) * self.dx
        ys = (np.arange(self.ny) + 0.5) * self.dy
        return np.meshgrid(xs, ys, indexing="ij")

    def center_points(self) -> np.ndarray:
        X, Y = self.centers()
        return np.stack([X.ravel(), Y.ravel()], axis=1)

    @classmethod
    def from_function(cls, fn, nx: int, ny: int | None = None, kind: str = "f",
                      margin: float = 0.0):
        ny = nx if ny is None else ny
        g = cls(np.zeros((nx, ny)), kind="f")
        vals = np.asarray(fn(g.center_points()), dtype=np.float64).reshape(nx, ny)
        return cls(vals, kind=kind, margin=margin)

    def like(self, values, kind: str | None = None):
        return GridFunction(values, kind=kind or self.kind, margin=self.margin)

    def sample(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        return _sample_many(self.values, self.dx, self.dy, p[:, 0].copy(), p[:, 1].copy())

    def inner(self, other: "GridFunction") -> float:
        return float(np.sum(self.values * other.values) * self.cell_area)

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    def sidecar(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "origin": list(self.origin),
                "spacing": list(self.spacing), "kind": self.kind, "margin": self.margin}

    def save(self, path):
        path = Path(path)
        self.values.astype("<f8").tofile(path)
        Path(str(path) + ".json").write_text(json.dumps(self.sidecar(), indent=2))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        raw = np.fromfile(path, dtype="<f8")
        if raw.size != meta["nx"] * meta["ny"]:
            raise FieldError(f"{path}: expected {meta['nx'] * meta['ny']} values, found {raw.size}")
        return cls(raw.reshape(meta["nx"], meta["ny"]), kind=meta.get("kind", "f"),
                   margin=float(meta.get("margin", 0.0)),
                   origin=tuple(meta.get("origin", (0.0, 0.0))),
                   spacing=tuple(meta["spacing"]))


def sample(g: GridFunction, p) -> float | np.ndarray:
    out = g.sample(p)
    return float(out[0]) if np.ndim(p) == 1 else out


def check_margin(g: GridFunction, margin: float):
    """Reject grids whose bilinear interpolant is nonzero within ``margin`` of the boundary.

    A centre influences the interpolant up to one cell away, so every centre
    closer than ``margin + h`` to the boundary must hold zero.
    """
    X, Y = g.centers()
    d = np.minimum(np.minimum(X, 1 - X), np.minimum(Y, 1 - Y))
    band = d < margin + max(g.dx, g.dy) - 1e-12
    if np.any(g.values[band] != 0.0):
        raise FieldError(f"attenuation grid is nonzero inside the margin band ({margin})")


_SLACK = 1e-9


@njit(cache=True)
def _bilin_index(n, d, x):
    g = x / d - 0.5
    i0 = int(math.floor(g))
    fx = g - i0
    if i0 < 0:
        return 0, 0.0
    if i0 >= n - 1:
        return n - 2, 1.0
    return i0, fx


@njit(cache=True)
def _sample(vals, dx, dy, x, y):
    # points a rounding error outside the square count as on its boundary
    if x < -_SLACK or x > 1.0 + _SLACK or y < -_SLACK or y > 1.0 + _SLACK:
        return 0.0
    nx, ny = vals.shape
    i0, fx = _bilin_index(nx, dx, x)
    j0, fy = _bilin_index(ny, dy, y)
    return ((1 - fx) * ((1 - fy) * vals[i0, j0] + fy * vals[i0, j0 + 1])
            + fx * ((1 - fy) * vals[i0 + 1, j0] + fy * vals[i0 + 1, j0 + 1]))


@njit(cache=True)
def _sample_many(vals, dx, dy, xs, ys):
    out = np.empty(xs.shape[0])
    for k in range(xs.shape[0]):
        out[k] = _sample(vals, dx, dy, xs[k], ys[k])
    return out


@njit(cache=True)
def _next_line(x0, u, t, d):
    """Smallest t' > t where x0 + u t' crosses a centre line (k + 1/2) d."""
    if u == 0.0:
        return np.inf
    x = x0 + u * t
    if u > 0.0:
        k = math.floor(x / d - 0.5) + 1.0
    else:
        k = math.ceil(x / d - 0.5) - 1.0
    tn = ((k + 0.5) * d - x0) / u
    if tn <= t + 1e-15:
        k += 1.0 if u > 0.0 else -1.0
        tn = ((k + 0.5) * d - x0) / u
    return tn


@njit(cache=True)
def _att_at(T, att_a, att_s, h, smooth):
    """Cumulative attenuation at global ray arclength T.

    For smooth fields: cubic Hermite interpolation of the node values with
    slopes sigma, so A is C^1 and fourth order accurate between nodes.
    Otherwise the exact integral of the piecewise linear interpolant of sigma,
    which matches the trapezoid nodes and keeps A monotone for sigma >= 0.
    """
    k = int(math.floor(T / h))
    if k >= att_a.shape[0] - 1:
        k = att_a.shape[0] - 2
    if k < 0:
        k = 0
    u = (T - k * h) / h
    if not smooth:
        return att_a[k] + h * u * (att_s[k] + 0.5 * u * (att_s[k + 1] - att_s[k]))
    u2 = u * u
    u3 = u2 * u
    a = ((2 * u3 - 3 * u2 + 1) * att_a[k] + (u3 - 2 * u2 + u) * h * att_s[k]
         + (3 * u2 - 2 * u3) * att_a[k + 1] + (u3 - u2) * h * att_s[k + 1])
    if att_s[k] >= 0.0 and att_s[k + 1] >= 0.0:
        # keep A within the node values where sigma >= 0
        a = min(max(a, att_a[k]), att_a[k + 1])
    return a


@njit(cache=True)
def _visit(vals, dx, dy, x, y, wt, c, adjoint):
    """Forward: c[k] += wt * vals[k](x, y). Adjoint: scatter wt * c[k] into vals[k]."""
    if x < -_SLACK or x > 1.0 + _SLACK or y < -_SLACK or y > 1.0 + _SLACK:
        return
    m, nx, ny = vals.shape
    i0, fx = _bilin_index(nx, dx, x)
    j0, fy = _bilin_index(ny, dy, y)
    w00 = wt * (1 - fx) * (1 - fy)
    w01 = wt * (1 - fx) * fy
    w10 = wt * fx * (1 - fy)
    w11 = wt * fx * fy
    if adjoint:
        for k in range(m):
            ck = c[k]
            vals[k, i0, j0] += ck * w00
            vals[k, i0, j0 + 1] += ck * w01
            vals[k, i0 + 1, j0] += ck * w10
            vals[k, i0 + 1, j0 + 1] += ck * w11
    else:
        for k in range(m):
            c[k] += (w00 * vals[k, i0, j0] + w01 * vals[k, i0, j0 + 1]
                     + w10 * vals[k, i0 + 1, j0] + w11 * vals[k, i0 + 1, j0 + 1])


@njit(cache=True)
def _segment_op(vals, dx, dy, x0, y0, ux, uy, L, T0, att_a, att_s, h, smooth, c, adjoint):
    """Integrate ``exp(-A) * g`` over a segment for a stack of grids, or scatter the adjoint.

    ``vals`` has shape (m, nx, ny). Forward adds the m integrals into ``c``;
    adjoint scatters ``c[k]`` times the integration functional into ``vals[k]``.
    The segment is split at every centre-line crossing, where the bilinear
    interpolant changes form, and each piece uses Simpson's rule. Without
    attenuation this is exact for the interpolant; with a smooth field exp(-A)
    is C^1 and smooth, so the rule stays fourth order. For fields that may
    jump, pieces are also split at the attenuation nodes, where A has its
    kinks. Piece endpoints are shared between neighbours, so both directions
    visit the same weighted points and the weights are computed once per stack.
    """
    has_att = att_a.shape[0] > 1
    t = 0.0
    ea = math.exp(-_att_at(T0, att_a, att_s, h, smooth)) if has_att else 1.0
    wprev = 0.0
    while t < L:
        tb = min(_next_line(x0, ux, t, dx), _next_line(y0, uy, t, dy), L)
        if has_att and not smooth:
            tn = (math.floor((T0 + t) / h + 1e-12) + 1.0) * h - T0
            if tn < tb:
                tb = tn
        if tb - t < 1e-15:
            t = tb
            continue
        tm = 0.5 * (t + tb)
        w = (tb - t) / 6.0
        em = 1.0
        eb = 1.0
        if has_att:
            em = math.exp(-_att_at(T0 + tm, att_a, att_s, h, smooth))
            eb = math.exp(-_att_at(T0 + tb, att_a, att_s, h, smooth))
        _visit(vals, dx, dy, x0 + ux * t, y0 + uy * t, (wprev + w) * ea, c, adjoint)
        _visit(vals, dx, dy, x0 + ux * tm, y0 + uy * tm, 4.0 * w * em, c, adjoint)
        wprev = w
        ea = eb
        t = tb
    if wprev != 0.0:
        _visit(vals, dx, dy, x0 + ux * L, y0 + uy * L, wprev * ea, c, adjoint)


_NO_ATT = np.zeros(1)


def line_integral(g: GridFunction, p0, p1) -> float:
    """Integral of the interpolated grid function along the segment p0 -> p1."""
    x0, y0 = map(float, p0)
    d = np.asarray(p1, dtype=np.float64) - np.asarray(p0, dtype=np.float64)
    L = float(np.hypot(*d))
    if L == 0.0:
        return 0.0
    acc = np.zeros(1)
    _segment_op(g.values[None], g.dx, g.dy, x0, y0, d[0] / L, d[1] / L, L,
                0.0, _NO_ATT, _NO_ATT, 1.0, True, acc, False)
    return float(acc[0])


# ---------------------------------------------------------------------------
# attenuation fields
# ---------------------------------------------------------------------------

class AttenuationField:
    """sigma(x, theta). Subclasses implement ``evaluate(points (n,2), theta (n,))``."""

    margin: float = DEFAULT_MARGIN
    c2_bound: float = 0.0
    isotropic: bool = True

    def evaluate(self, points, theta):
        raise NotImplementedError

    def __call__(self, points, theta=None):
        p = np.atleast_2d(np.asarray(points, dtype=np.float64))
        th = np.zeros(len(p)) if theta is None else np.broadcast_to(
            np.asarray(theta, dtype=np.float64), (len(p),))
        return np.asarray(self.evaluate(p, th), dtype=np.float64)

    @property
    def is_zero(self) -> bool:
        return False

    def __add__(self, other):
        return SumAttenuation((self, other))

    def scaled(self, c: float):
        return ScaledAttenuation(self, c)


@dataclass
class ZeroAttenuation(AttenuationField):
    margin: float = DEFAULT_MARGIN
    c2_bound: float = 0.0

    def evaluate(self, points, theta):
        return np.zeros(len(points))

    @property
    def is_zero(self) -> bool:
        return True


@dataclass
class BoxAttenuation(AttenuationField):
    """Constant ``value`` on the open box [lo, hi]^2, half of it on the box edges.

    The half value on the edges makes trapezoid quadrature exact whenever the
    box edges fall on quadrature nodes.
    """

    lo: float = 0.25
    hi: float = 0.75
    value: float = 1.0
    c2_bound: float = math.inf

    @property
    def margin(self) -> float:
        return min(self.lo, 1.0 - self.hi)

    def _axis(self, x):
        inside = (x > self.lo) & (x < self.hi)
        edge = np.isclose(x, self.lo, atol=1e-13) | np.isclose(x, self.hi, atol=1e-13)
        return np.where(inside, 1.0, np.where(edge, 0.5, 0.0))

    def evaluate(self, points, theta):
        return self.value * self._axis(points[:, 0]) * self._axis(points[:, 1])


@dataclass
class BumpAttenuation(AttenuationField):
    """amplitude * bump(|x - c| / r) * (1 + aniso * cos(theta - theta0))."""

    center: tuple[float, float] = (0.5, 0.5)
    radius: float = 0.25
    amplitude: float = 1.0
    aniso: float = 0.0
    theta0: float = 0.0

    def __post_init__(self):
        cx, cy = self.center
        self.margin = min(cx, cy, 1 - cx, 1 - cy) - self.radius
        if self.margin <= 0:
            raise FieldError("bump support must lie inside the square")
        self.isotropic = self.aniso == 0.0
        self.c2_bound = c2_norm_estimate(self, n=257)

    def evaluate(self, points, theta):
        out = self.amplitude * radial_bump(points, self.center, self.radius)
        if self.aniso:
            out = out * (1.0 + self.aniso * np.cos(theta - self.theta0))
        return out


class FunctionAttenuation(AttenuationField):
    """Wrap a vectorised callable ``fn(points, theta)``."""

    def __init__(self, fn, margin: float = DEFAULT_MARGIN, c2_bound: float = math.inf,
                 isotropic: bool = False):
        self.fn = fn
        self.margin = margin
        self.c2_bound = c2_bound
        self.isotropic = isotropic

    def evaluate(self, points, theta):
        return self.fn(points, theta)


class GridAttenuation(AttenuationField):
    """Isotropic attenuation backed by a grid (bilinear)."""

    def __init__(self, grid: GridFunction, margin: float = DEFAULT_MARGIN):
        if grid.kind != "sigma":
            grid = GridFunction(grid.values, kind="sigma", margin=margin)
        else:
            check_margin(grid, margin)
        self.grid = grid
        self.margin = margin
        self.c2_bound = c2_norm_estimate_grid(grid)

    def evaluate(self, points, theta):
        return self.grid.sample(points)

    @property
    def is_zero(self) -> bool:
        return not np.any(self.grid.values)


class SumAttenuation(AttenuationField):
    def __init__(self, parts):
        self.parts = tuple(parts)
        self.margin = min(p.margin for p in self.parts)
        self.c2_bound = sum(p.c2_bound for p in self.parts)
        self.isotropic = all(p.isotropic for p in self.parts)

    def evaluate(self, points, theta):
        return sum(p.evaluate(points, theta) for p in self.parts)

    @property
    def is_zero(self) -> bool:
        return all(p.is_zero for p in self.parts)


class ScaledAttenuation(AttenuationField):
    def __init__(self, base: AttenuationField, c: float):
        self.base = base
        self.c = float(c)
        self.margin = base.margin
        self.c2_bound = abs(self.c) * base.c2_bound
        self.isotropic = base.isotropic

    def evaluate(self, points, theta):
        return self.c * self.base.evaluate(points, theta)

    @property
    def is_zero(self) -> bool:
        return self.c == 0.0 or self.base.is_zero


def _c2_of_samples(v, hx, hy) -> float:
    d1x = np.diff(v, axis=0) / hx
    d1y = np.diff(v, axis=1) / hy
    d2x = np.diff(v, 2, axis=0) / hx ** 2
    d2y = np.diff(v, 2, axis=1) / hy ** 2
    dxy = np.diff(np.diff(v, axis=0), axis=1) / (hx * hy)
    return float(max(np.abs(a).max() for a in (v, d1x, d1y, d2x, d2y, dxy)))


def c2_norm_estimate_grid(g: GridFunction) -> float:
    return _c2_of_samples(g.values, g.dx, g.dy)


def c2_norm_estimate(sigma: AttenuationField, n: int = 129, n_theta: int = 32) -> float:
    """Finite-difference estimate of max |D^k sigma|, k <= 2, over x and theta."""
    h = 1.0 / (n - 1)
    xs = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    thetas = [0.0] if sigma.isotropic else np.linspace(0.0, 2 * math.pi, n_theta, endpoint=False)
    vals = [sigma(pts, np.full(len(pts), th)).reshape(n, n) for th in thetas]
    best = max(_c2_of_samples(v, h, h) for v in vals)
    if len(vals) > 1:
        V = np.stack(vals)
        dt = 2 * math.pi / n_theta
        d1 = (np.roll(V, -1, 0) - V) / dt
        d2 = (np.roll(V, -1, 0) - 2 * V + np.roll(V, 1, 0)) / dt ** 2
        best = max(best, np.abs(d1).max(), np.abs(d2).max())
    return float(best)


# ---------------------------------------------------------------------------
# attenuation along rays
# ---------------------------------------------------------------------------

@njit(cache=True)
def _ray_node_positions(segs, nseg, h):
    """Attenuation nodes t = k h along each traced ray (global arclength from entry)."""
    n = nseg.shape[0]
    counts = np.zeros(n, np.int64)
    for r in range(n):
        L = 0.0
        for j in range(nseg[r]):
            L += segs[r, j, 6]
        counts[r] = int(math.ceil(L / h)) + 2 if nseg[r] > 0 else 0
    offsets = np.zeros(n + 1, np.int64)
    for r in range(n):
        offsets[r + 1] = offsets[r] + counts[r]
    px = np.zeros(offsets[n])
    py = np.zeros(offsets[n])
    th = np.zeros(offsets[n])
    for r in range(n):
        j = 0
        T = 0.0
        for k in range(counts[r]):
            t = k * h
            while j < nseg[r] - 1 and t > T + segs[r, j, 6]:
                T += segs[r, j, 6]
                j += 1
            tl = min(t - T, segs[r, j, 6])
            q = offsets[r] + k
            px[q] = segs[r, j, 0] + segs[r, j, 4] * tl
            py[q] = segs[r, j, 1] + segs[r, j, 5] * tl
            th[q] = math.atan2(segs[r, j, 5], segs[r, j, 4])
    return offsets, px, py, th


@njit(cache=True)
def _cumulate(offsets, s, h, corrected):
    """Trapezoid sums; ``corrected`` adds the end term -h^2/12 (sigma'(t) - sigma'(0)).

    The correction makes the node values fourth order for C^2 sigma.
    """
    a = np.zeros_like(s)
    c = h * h / 12.0
    for r in range(offsets.shape[0] - 1):
        lo = offsets[r]
        hi = offsets[r + 1]
        if hi - lo < 2:
            continue
        for q in range(lo + 1, hi):
            a[q] = a[q - 1] + 0.5 * h * (s[q - 1] + s[q])
        if not corrected:
            continue
        d0 = (s[lo + 1] - s[lo]) / h
        for q in range(lo + 1, hi):
            if q < hi - 1:
                d = (s[q + 1] - s[q - 1]) / (2.0 * h)
            else:
                d = (s[q] - s[q - 1]) / h
            a[q] -= c * (d - d0)
    return a


def is_smooth(sigma: AttenuationField) -> bool:
    """Whether the end correction applies (a finite C^2 bound is known)."""
    return math.isfinite(sigma.c2_bound)


def eval_sigma_chunked(sigma: AttenuationField, px, py, th, chunk: int = 1 << 20):
    out = np.empty(px.shape[0])
    for a in range(0, px.shape[0], chunk):
        b = min(a + chunk, px.shape[0])
        out[a:b] = sigma(np.stack([px[a:b], py[a:b]], axis=1), th[a:b])
    return out


def attenuation_profiles(sigma: AttenuationField, segs, nseg, h: float = H_SIGMA):
    """Per-ray node values of sigma and of the cumulative attenuation A.

    Returns (offsets, sigma_nodes, A_nodes); ray r owns the slice
    ``offsets[r]:offsets[r+1]``. For zero attenuation the arrays are empty.
    """
    if sigma is None or sigma.is_zero:
        return np.zeros(len(nseg) + 1, np.int64), np.zeros(0), np.zeros(0)
    offsets, px, py, th = _ray_node_positions(segs, np.asarray(nseg, np.int64), h)
    s = eval_sigma_chunked(sigma, px, py, th)
    return offsets, s, _cumulate(offsets, s, h, is_smooth(sigma))


def _single_profile(sigma, r: BrokenRay, h):
    segs = np.zeros((1, max(len(r.segments), 1), 9))
    for j, (p0, p1, th, L) in enumerate(r.segments):
        segs[0, j, :7] = (p0[0], p0[1], p1[0], p1[1], math.cos(th), math.sin(th), L)
    return attenuation_profiles(sigma, segs, np.array([len(r.segments)]), h)


def cumulative_attenuation(sigma: AttenuationField, r: BrokenRay, t: float,
                           h: float = H_SIGMA) -> float:
    L = r.length
    if not -1e-12 <= t <= L + 1e-12:
        raise FieldError(f"arclength {t} outside [0, {L}]")
    off, s, a = _single_profile(sigma, r, h)
    if s.size == 0:
        return 0.0
    return float(_att_at(float(t), a, s, h, is_smooth(sigma)))


def weight_w(sigma: AttenuationField, r: BrokenRay, j: int, t: float,
             h: float = H_SIGMA) -> float:
    """exp(-A) at arclength ``t`` into segment ``j`` of the ray."""
    if not 0 <= j < len(r.segments):
        raise FieldError(f"segment index {j} out of range")
    T = sum(seg[3] for seg in r.segments[:j])
    return math.exp(-cumulative_attenuation(sigma, r, T + t, h))


def _ball_chord_integral(sigma, p, th, h):
    """Trapezoid integral of sigma along the full line through p (direction th) inside the ball."""
    q = ball_entry(p, th)
    ok = np.isfinite(q[:, 0])
    out = np.zeros(len(p))
    if not ok.any():
        return out
    n = int(math.ceil(2 * BALL_RADIUS / h)) + 1
    k = np.arange(n) * h
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    pts = q[ok, None, :] + k[None, :, None] * d[ok, None, :]
    vals = sigma(pts.reshape(-1, 2), np.repeat(th[ok], n)).reshape(-1, n)
    out[ok] = h * vals.sum(axis=1)
    return out


def _backward_integral(sigma, x, th, h):
    """Trapezoid integral of sigma from the ball boundary up to x (nodes anchored at x)."""
    n = int(math.ceil(2 * BALL_RADIUS / h)) + 1
    k = np.arange(n) * h
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    pts = x[:, None, :] - k[None, :, None] * d[:, None, :]
    vals = sigma(pts.reshape(-1, 2), np.repeat(th, n)).reshape(-1, n)
    inside = ((pts[..., 0] - BALL_CENTER[0]) ** 2 + (pts[..., 1] - BALL_CENTER[1]) ** 2
              <= BALL_RADIUS ** 2)
    vals = np.where(inside, vals, 0.0)
    total = h * (vals.sum(axis=1) - 0.5 * vals[:, 0])
    if is_smooth(sigma):
        # end correction at x; sigma vanishes with its derivatives at the ball
        ds = (sigma(x + h * d, th) - vals[:, 1]) / (2.0 * h)
        total -= h * h / 12.0 * ds
    return total


def weight_w_reg_batch(sigma: AttenuationField, x, theta, j: int, tiles,
                       h: float = H_SIGMA) -> np.ndarray:
    """Regularised weights for points ``x`` on segment ``j`` of tile path ``tiles``.

    ``tiles`` is either one path (list of (h, v)) shared by all points or an
    array of shape (n, J, 2). The current segment contributes the backward
    integral from x to the circumscribed ball; every earlier segment m
    contributes the full chord integral through the ball of the folded line
    R^{-1}_{tiles[m]} R_{tiles[j]} x with direction S_{tiles[m]} S^{-1}_{tiles[j]} theta.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    theta = np.broadcast_to(np.asarray(theta, dtype=np.float64), (len(x),)).copy()
    if sigma is None or sigma.is_zero:
        return np.ones(len(x))
    T = np.asarray(tiles, dtype=np.int64)
    if T.ndim == 2:
        T = np.broadcast_to(T, (len(x),) + T.shape)
    tj = (T[:, j, 0], T[:, j, 1])
    total = _backward_integral(sigma, x, theta, h)
    xt = reflect_point(x, tj)
    thu = unreflect_angle(theta, tj)
    for m in range(j):
        tm = (T[:, m, 0], T[:, m, 1])
        pm = unreflect_point(xt, tm)
        dm = reflect_angle(thu, tm)
        total += _ball_chord_integral(sigma, pm, dm, h)
    return np.exp(-total)


def weight_w_reg(sigma: AttenuationField, x, theta: float, j: int, tiles,
                 h: float = H_SIGMA) -> float:
    return float(weight_w_reg_batch(sigma, [x], [theta], j, [tuple(t) for t in tiles], h)[0])


# ---------------------------------------------------------------------------
# support regions
# ---------------------------------------------------------------------------

@dataclass
class SupportRegion:
    """Rectangle ``[lo, hi]^2`` (or a boolean mask on a grid) holding supp f."""

    lo: float = DEFAULT_MARGIN
    hi: float = 1.0 - DEFAULT_MARGIN
    mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def margin_K(self) -> float:
        return min(self.lo, 1.0 - self.hi)

    def grid_mask(self, g: GridFunction) -> np.ndarray:
        if self.mask is not None:
            if self.mask.shape != g.values.shape:
                raise FieldError("support mask does not match the grid")
            return self.mask.astype(bool)
        X, Y = g.centers()
        return (X >= self.lo) & (X <= self.hi) & (Y >= self.lo) & (Y <= self.hi)
