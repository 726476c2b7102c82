"""Unit square geometry: boundary parametrization, billiard map, broken ray tracing.

Boundary arclength ``s`` runs counterclockwise from (0, 0); corners sit at
integer ``s``. Edges are numbered 0 bottom, 1 right, 2 top, 3 left.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from numba import njit, prange

TWO_PI = 2.0 * math.pi
EPS_CORNER = 1e-9
DELTA_CORNER = 1e-3
EPS_BOUNDARY = 1e-6

CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
# inward normal angle per edge; phi is measured counterclockwise from it
INWARD_ANGLE = np.array([0.5 * math.pi, math.pi, 1.5 * math.pi, 0.0])
_OUTWARD_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])

BALL_CENTER = (0.5, 0.5)
BALL_RADIUS = math.sqrt(2.0) / 2.0


class GeometryError(ValueError):
    """Raised when an input lies outside the domain of a geometric operation."""


class Termination(IntEnum):
    HitE = 0
    HitBoundaryOfE = 1
    ExceededNmax = 2
    CornerStart = 3


def wrap_angle(theta):
    return np.mod(theta, TWO_PI)


@dataclass(frozen=True)
class BoundaryPoint:
    s: float
    edge: int
    corner_flag: bool

    @property
    def xy(self) -> tuple[float, float]:
        return boundary_param(self.s)


@dataclass(frozen=True)
class UnitTangent:
    base: tuple[float, float]
    theta: float

    @property
    def direction(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])


@dataclass(frozen=True)
class AccessSet:
    """Open subset of the boundary given as arclength arcs ``(a, b)``.

    An arc may wrap through ``s = 4``; ``b - a == 4`` means the whole boundary,
    which has no boundary points of its own.
    """

    arcs: tuple[tuple[float, float], ...]
    eps_boundary: float = EPS_BOUNDARY

    def __post_init__(self):
        norm = []
        for a0, b0 in self.arcs:
            length = float(b0) - float(a0)
            if not 0.0 < length <= 4.0:
                raise GeometryError(f"arc ({a0}, {b0}) must have length in (0, 4]")
            a = float(a0) % 4.0
            norm.append((a, a + length))
        norm.sort()
        if len(norm) > 1:
            for k, (a1, b1) in enumerate(norm):
                a2 = norm[(k + 1) % len(norm)][0]
                gap = (a2 - a1) % 4.0
                if b1 - a1 > gap + 1e-15:
                    raise GeometryError("arcs must be pairwise disjoint")
        object.__setattr__(self, "arcs", tuple(norm))

    @property
    def is_full(self) -> bool:
        return any(b - a >= 4.0 for a, b in self.arcs)

    def as_array(self) -> np.ndarray:
        return np.array(self.arcs, dtype=np.float64).reshape(-1, 2)

    def contains(self, s: float) -> bool:
        return _in_arcs(float(s) % 4.0, self.as_array())

    def distance_to_boundary(self, s: float) -> float:
        return _dist_to_arc_ends(float(s) % 4.0, self.as_array())

    def measure(self) -> float:
        return float(sum(b - a for a, b in self.arcs))

    @classmethod
    def preset(cls, name: str, eps_boundary: float = EPS_BOUNDARY, overhang: float = 0.01):
        """Named access sets.

        ``adjacent`` is an open arc containing the closed left and bottom
        edges (it overhangs onto the top and right edges by ``overhang``);
        ``opposite`` is the open left and right edges.
        """
        if name == "full":
            return cls(((0.0, 4.0),), eps_boundary)
        if name == "adjacent":
            return cls(((3.0 - overhang, 5.0 + overhang),), eps_boundary)
        if name == "opposite":
            return cls(((1.0, 2.0), (3.0, 4.0)), eps_boundary)
        raise GeometryError(f"unknown access set preset {name!r}")


@dataclass
class BrokenRay:
    start: UnitTangent
    segments: list  # (entry, exit, theta, length)
    reflection_points: list[BoundaryPoint]
    corner_events: list[int]
    near_corner_pairs: list[int]
    tiles: list[tuple[int, int]]
    signature: tuple[int, int]
    n_reflections: int
    n_effective: int
    termination: Termination
    regular: bool = field(default=False)

    @property
    def length(self) -> float:
        return float(sum(seg[3] for seg in self.segments))

    def merged_tiles(self) -> list[tuple[int, int]]:
        """Tile path with each near-corner pair collapsed into one diagonal step."""
        skip = {k + 1 for k in self.near_corner_pairs}
        return [t for j, t in enumerate(self.tiles) if j not in skip]


# ---------------------------------------------------------------------------
# boundary parametrization
# ---------------------------------------------------------------------------

def boundary_param(s: float) -> tuple[float, float]:
    if not 0.0 <= s < 4.0:
        raise GeometryError(f"arclength {s} outside [0, 4)")
    edge = int(math.floor(s))
    u = s - edge
    if edge == 0:
        return (u, 0.0)
    if edge == 1:
        return (1.0, u)
    if edge == 2:
        return (1.0 - u, 1.0)
    return (0.0, 1.0 - u)


def point_to_param(p, tol: float = 1e-9, eps_corner: float = EPS_CORNER) -> BoundaryPoint:
    x, y = float(p[0]), float(p[1])
    d = np.array([abs(y), abs(x - 1.0), abs(y - 1.0), abs(x)])
    edge = int(np.argmin(d))
    if d[edge] > tol or not (-tol <= x <= 1 + tol and -tol <= y <= 1 + tol):
        raise GeometryError(f"point {p} is not on the boundary")
    x = min(max(x, 0.0), 1.0)
    y = min(max(y, 0.0), 1.0)
    s = _s_of_point(x, y, edge)
    corner = float(np.min(np.hypot(CORNERS[:, 0] - x, CORNERS[:, 1] - y))) < eps_corner
    if corner:
        s = float(round(s)) % 4.0
        edge = int(s)
    return BoundaryPoint(s=s, edge=edge, corner_flag=corner)


def outward_normal(edge: int) -> np.ndarray:
    return _OUTWARD_NORMALS[edge].copy()


def inward_theta(s, phi):
    """Direction angle of the ingoing vector at arclength ``s``, incidence ``phi``."""
    edge = np.minimum(np.floor(s).astype(np.int64), 3)
    return wrap_angle(INWARD_ANGLE[edge] + phi)


def incidence_angle(s, theta):
    """Inverse of :func:`inward_theta`: the angle from the inward normal in (-pi, pi]."""
    edge = np.minimum(np.floor(s).astype(np.int64), 3)
    return np.mod(theta - INWARD_ANGLE[edge] + math.pi, TWO_PI) - math.pi


# ---------------------------------------------------------------------------
# numba core
# ---------------------------------------------------------------------------

@njit(cache=True)
def _s_of_point(x, y, edge):
    if edge == 0:
        return x
    if edge == 1:
        return 1.0 + y
    if edge == 2:
        return 2.0 + (1.0 - x)
    s = 3.0 + (1.0 - y)
    return s if s < 4.0 else s - 4.0


@njit(cache=True)
def _in_arcs(s, arcs):
    for k in range(arcs.shape[0]):
        a = arcs[k, 0]
        b = arcs[k, 1]
        if b - a >= 4.0:
            return True
        d = (s - a) % 4.0
        if 0.0 < d < b - a:
            return True
    return False


@njit(cache=True)
def _dist_to_arc_ends(s, arcs):
    best = np.inf
    for k in range(arcs.shape[0]):
        a = arcs[k, 0]
        b = arcs[k, 1]
        if b - a >= 4.0:
            continue
        for e in (a % 4.0, b % 4.0):
            d = abs(s - e)
            d = min(d, 4.0 - d)
            if d < best:
                best = d
    return best


@njit(cache=True)
def _nearest_corner(x, y):
    best = np.inf
    idx = -1
    for c in range(4):
        cx = 1.0 if (c == 1 or c == 2) else 0.0
        cy = 1.0 if c >= 2 else 0.0
        d = math.hypot(x - cx, y - cy)
        if d < best:
            best = d
            idx = c
    return idx, best


@njit(cache=True)
def _first_exit(px, py, dx, dy, eps_corner):
    """Return (t, hx, hy, code) with code 0..3 an edge or 4 + c for corner c."""
    tx = np.inf
    ty = np.inf
    ex = -1
    ey = -1
    if dx > 0.0:
        tx = (1.0 - px) / dx
        ex = 1
    elif dx < 0.0:
        tx = -px / dx
        ex = 3
    if dy > 0.0:
        ty = (1.0 - py) / dy
        ey = 2
    elif dy < 0.0:
        ty = -py / dy
        ey = 0
    if tx <= ty:
        t = tx
        hx = 1.0 if ex == 1 else 0.0
        hy = py + t * dy
        code = ex
    else:
        t = ty
        hy = 1.0 if ey == 2 else 0.0
        hx = px + t * dx
        code = ey
    hx = min(max(hx, 0.0), 1.0)
    hy = min(max(hy, 0.0), 1.0)
    c, dist = _nearest_corner(hx, hy)
    if dist < eps_corner:
        hx = 1.0 if (c == 1 or c == 2) else 0.0
        hy = 1.0 if c >= 2 else 0.0
        code = 4 + c
    return t, hx, hy, code


@njit(cache=True)
def _trace_core(px, py, dx, dy, arcs, n_max, eps_corner, eps_bdry, delta_c,
                seg, refl):
    """Trace from (px, py) along (dx, dy) until E, dE, or the reflection budget.

    ``seg`` rows: x0, y0, x1, y1, dx, dy, length, h, v.
    ``refl`` rows (one per reflection): s, code, near-corner index, paired flag.
    Returns (n_segments, termination, n_effective_reflections).
    """
    max_seg = seg.shape[0]
    sx = 1.0 if dx >= 0.0 else -1.0
    sy = 1.0 if dy >= 0.0 else -1.0
    h = 0
    v = 0
    n_eff = 0
    nseg = 0
    prev_near = -1
    prev_paired = True
    while True:
        t, hx, hy, code = _first_exit(px, py, dx, dy, eps_corner)
        seg[nseg, 0] = px
        seg[nseg, 1] = py
        seg[nseg, 2] = hx
        seg[nseg, 3] = hy
        seg[nseg, 4] = dx
        seg[nseg, 5] = dy
        seg[nseg, 6] = t
        seg[nseg, 7] = h
        seg[nseg, 8] = v
        nseg += 1
        if code >= 4:
            s = float(code - 4)
        else:
            s = _s_of_point(hx, hy, code)
        if _dist_to_arc_ends(s, arcs) < eps_bdry:
            return nseg, 1, n_eff
        if _in_arcs(s, arcs):
            return nseg, 0, n_eff
        k = nseg - 1
        refl[k, 0] = s
        refl[k, 1] = code
        near = -1
        if code >= 4:
            near = code - 4
        else:
            c, dist = _nearest_corner(hx, hy)
            if dist < delta_c:
                near = c
        refl[k, 2] = near
        paired = (code < 4 and near >= 0 and prev_near == near and not prev_paired)
        refl[k, 3] = 1.0 if paired else 0.0
        if not paired:
            n_eff += 1
        prev_near = near if code < 4 else -1
        prev_paired = paired or code >= 4
        if code >= 4:
            dx = -dx
            dy = -dy
            h += int(sx)
            v += int(sy)
        elif code == 1 or code == 3:
            dx = -dx
            h += int(sx)
        else:
            dy = -dy
            v += int(sy)
        px = hx
        py = hy
        if n_eff > n_max or nseg >= max_seg:
            return nseg, 2, n_eff


def _buffers(n_max: int):
    max_seg = 2 * (n_max + 1) + 2
    return np.zeros((max_seg, 9)), np.zeros((max_seg, 4))


@njit(cache=True, parallel=True)
def _trace_batch(px, py, theta, arcs, n_max, eps_corner, eps_bdry, delta_c,
                 check_start):
    n = px.shape[0]
    max_seg = 2 * (n_max + 1) + 2
    segs = np.zeros((n, max_seg, 9))
    refls = np.zeros((n, max_seg, 4))
    nseg = np.zeros(n, np.int64)
    term = np.zeros(n, np.int64)
    neff = np.zeros(n, np.int64)
    for i in prange(n):
        x = px[i]
        y = py[i]
        if check_start:
            c, dist = _nearest_corner(x, y)
            on_bdry = min(min(x, 1.0 - x), min(y, 1.0 - y)) < 1e-12
            if on_bdry:
                if dist < eps_corner:
                    s0 = float(c)
                    if not _in_arcs(s0, arcs) or _dist_to_arc_ends(s0, arcs) < eps_bdry:
                        term[i] = 3
                        continue
                else:
                    ed = 0
                    best = y
                    if 1.0 - x < best:
                        best = 1.0 - x
                        ed = 1
                    if 1.0 - y < best:
                        best = 1.0 - y
                        ed = 2
                    if x < best:
                        ed = 3
                    s0 = _s_of_point(x, y, ed)
                    if _dist_to_arc_ends(s0, arcs) < eps_bdry:
                        term[i] = 1
                        continue
        ns, tm, ne = _trace_core(x, y, math.cos(theta[i]), math.sin(theta[i]), arcs,
                                 n_max, eps_corner, eps_bdry, delta_c,
                                 segs[i], refls[i])
        nseg[i] = ns
        term[i] = tm
        neff[i] = ne
    return segs, refls, nseg, term, neff


@dataclass
class RayBatch:
    """Traced rays in array form (one row per ray)."""

    segs: np.ndarray
    refls: np.ndarray
    nseg: np.ndarray
    termination: np.ndarray
    n_effective: np.ndarray

    @property
    def regular(self) -> np.ndarray:
        return self.termination == Termination.HitE

    def __len__(self):
        return self.nseg.shape[0]

    def lengths(self) -> np.ndarray:
        mask = np.arange(self.segs.shape[1])[None, :] < self.nseg[:, None]
        return np.where(mask, self.segs[:, :, 6], 0.0).sum(axis=1)


def trace_many(px, py, theta, E: AccessSet, n_max: int, eps_corner: float = EPS_CORNER,
               delta_c: float = DELTA_CORNER, check_start: bool = True) -> RayBatch:
    """Vectorised tracer; starting points may be interior or on the boundary."""
    px = np.ascontiguousarray(px, dtype=np.float64).ravel()
    py = np.ascontiguousarray(py, dtype=np.float64).ravel()
    theta = np.ascontiguousarray(np.broadcast_to(theta, px.shape), dtype=np.float64)
    out = _trace_batch(px, py, theta, E.as_array(), int(n_max), eps_corner,
                       E.eps_boundary, delta_c, check_start)
    return RayBatch(*out)


# ---------------------------------------------------------------------------
# public scalar operations
# ---------------------------------------------------------------------------

def _is_in_closure(x, y, tol=1e-12):
    return -tol <= x <= 1 + tol and -tol <= y <= 1 + tol


def first_exit(x, theta: float, eps_corner: float = EPS_CORNER) -> tuple[float, BoundaryPoint]:
    px, py = float(x[0]), float(x[1])
    if not _is_in_closure(px, py):
        raise GeometryError(f"point {x} outside the closed square")
    dx, dy = math.cos(theta), math.sin(theta)
    on = min(px, 1 - px, py, 1 - py) < 1e-12
    if on:
        # every boundary face containing the base must see an inward direction
        for edge, nrm in enumerate(_OUTWARD_NORMALS):
            if abs([py, 1 - px, 1 - py, px][edge]) < 1e-12 and nrm[0] * dx + nrm[1] * dy >= 0:
                raise GeometryError("direction does not point into the square")
    t, hx, hy, code = _first_exit(px, py, dx, dy, eps_corner)
    if code >= 4:
        bp = BoundaryPoint(s=float(code - 4), edge=code - 4, corner_flag=True)
    else:
        bp = BoundaryPoint(s=float(_s_of_point(hx, hy, code)), edge=int(code), corner_flag=False)
    return float(t), bp


def reflect_direction(theta: float, hit: BoundaryPoint) -> float:
    if hit.corner_flag:
        return float(wrap_angle(theta + math.pi))
    if hit.edge in (0, 2):
        return float(wrap_angle(-theta))
    return float(wrap_angle(math.pi - theta))


def billiard_map(v: UnitTangent) -> UnitTangent:
    t, hit = first_exit(v.base, v.theta)
    return UnitTangent(base=boundary_param(hit.s), theta=reflect_direction(v.theta, hit))


def billiard_map_batch(s: np.ndarray, phi: np.ndarray, eps_corner: float = EPS_CORNER):
    """Billiard map on (arclength, incidence angle) arrays; returns (s', phi', length)."""
    s = np.asarray(s, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    return _billiard_batch(s, phi, eps_corner)


@njit(cache=True)
def _billiard_batch(s, phi, eps_corner):
    n = s.shape[0]
    s_out = np.empty(n)
    phi_out = np.empty(n)
    t_out = np.empty(n)
    inward = np.array([0.5 * math.pi, math.pi, 1.5 * math.pi, 0.0])
    for i in range(n):
        edge = min(int(math.floor(s[i])), 3)
        u = s[i] - edge
        if edge == 0:
            x, y = u, 0.0
        elif edge == 1:
            x, y = 1.0, u
        elif edge == 2:
            x, y = 1.0 - u, 1.0
        else:
            x, y = 0.0, 1.0 - u
        th = inward[edge] + phi[i]
        dx = math.cos(th)
        dy = math.sin(th)
        t, hx, hy, code = _first_exit(x, y, dx, dy, eps_corner)
        if code >= 4:
            dx, dy = -dx, -dy
            s2 = float(code - 4)
            e2 = code - 4
        else:
            if code == 1 or code == 3:
                dx = -dx
            else:
                dy = -dy
            s2 = _s_of_point(hx, hy, code)
            e2 = min(int(math.floor(s2)), 3)
        th2 = math.atan2(dy, dx)
        p2 = (th2 - inward[e2] + math.pi) % (2.0 * math.pi) - math.pi
        s_out[i] = s2
        phi_out[i] = p2
        t_out[i] = t
    return s_out, phi_out, t_out


def _ray_from_buffers(start: UnitTangent, seg, refl, nseg, term, neff) -> BrokenRay:
    segments = []
    tiles = []
    for j in range(nseg):
        r = seg[j]
        segments.append(((r[0], r[1]), (r[2], r[3]), float(wrap_angle(math.atan2(r[5], r[4]))), r[6]))
        tiles.append((int(r[7]), int(r[8])))
    n_refl = nseg - 1 if term == Termination.HitE or term == Termination.HitBoundaryOfE else nseg
    n_refl = max(n_refl, 0)
    points = []
    corners = []
    pairs = []
    for k in range(min(n_refl, refl.shape[0])):
        code = int(refl[k, 1])
        corner = code >= 4
        points.append(BoundaryPoint(s=float(refl[k, 0]), edge=(code - 4) if corner else code,
                                    corner_flag=corner))
        if corner:
            corners.append(k)
        if refl[k, 3] > 0.5:
            pairs.append(k - 1)
    if nseg:
        last = seg[nseg - 1]
        h, v = int(last[7]), int(last[8])
    else:
        h, v = 0, 0
    term = Termination(int(term))
    return BrokenRay(start=start, segments=segments, reflection_points=points,
                     corner_events=corners, near_corner_pairs=pairs, tiles=tiles,
                     signature=(h, v), n_reflections=n_refl, n_effective=int(neff),
                     termination=term, regular=term == Termination.HitE)


def trace_broken_ray(v: UnitTangent, E: AccessSet, n_max: int,
                     eps_corner: float = EPS_CORNER, delta_c: float = DELTA_CORNER) -> BrokenRay:
    """Trace the broken ray launched from ``v`` (based on E) until it returns to E.

    The reported signature counts unfoldings of the full path; it is the tile
    of the final segment, e.g. (1, 0) for a straight left-to-right chord.
    """
    bp = point_to_param(v.base)
    if not (E.contains(bp.s) or E.distance_to_boundary(bp.s) < E.eps_boundary):
        raise GeometryError(f"base {v.base} is not in the access set")
    if bp.corner_flag and not E.contains(bp.s):
        return BrokenRay(start=v, segments=[], reflection_points=[], corner_events=[],
                         near_corner_pairs=[], tiles=[], signature=(0, 0), n_reflections=0,
                         n_effective=0, termination=Termination.CornerStart)
    first_exit(v.base, v.theta)  # validates the direction points inward
    batch = trace_many([v.base[0]], [v.base[1]], [v.theta], E, n_max, eps_corner, delta_c)
    ray = _ray_from_buffers(v, batch.segs[0], batch.refls[0], int(batch.nseg[0]),
                            int(batch.termination[0]), int(batch.n_effective[0]))
    if ray.segments:
        ray.signature = _terminal_signature(ray)
    return ray


def _terminal_signature(ray: BrokenRay) -> tuple[int, int]:
    """Tile reached by the unfolded chord end point (counts the exit crossing)."""
    h, v = ray.tiles[-1]
    x1, y1 = ray.segments[-1][1]
    th = ray.segments[-1][2]
    dx, dy = math.cos(th), math.sin(th)
    th0 = ray.start.theta
    sx = 1 if math.cos(th0) >= 0 else -1
    sy = 1 if math.sin(th0) >= 0 else -1
    if ray.termination == Termination.HitE:
        if (abs(x1 - 1.0) < 1e-12 and dx > 0) or (abs(x1) < 1e-12 and dx < 0):
            h += sx
        if (abs(y1 - 1.0) < 1e-12 and dy > 0) or (abs(y1) < 1e-12 and dy < 0):
            v += sy
    return (h, v)


def trace_from_point(x, theta: float, E: AccessSet, n_max: int,
                     eps_corner: float = EPS_CORNER, delta_c: float = DELTA_CORNER) -> BrokenRay:
    """Trace forward from an interior point until the trajectory reaches E."""
    batch = trace_many([x[0]], [x[1]], [theta], E, n_max, eps_corner, delta_c, check_start=False)
    return _ray_from_buffers(UnitTangent(tuple(map(float, x)), float(theta)), batch.segs[0],
                             batch.refls[0], int(batch.nseg[0]), int(batch.termination[0]),
                             int(batch.n_effective[0]))


# ---------------------------------------------------------------------------
# circumscribed ball
# ---------------------------------------------------------------------------

def _ball_roots(y, eta):
    cx, cy = BALL_CENTER
    dx, dy = math.cos(eta), math.sin(eta)
    ox, oy = y[0] - cx, y[1] - cy
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - BALL_RADIUS ** 2
    disc = b * b - c
    if disc < 0:
        return None
    r = math.sqrt(disc)
    return -b - r, -b + r


def ball_last_intersection(y, eta: float) -> tuple[float, float]:
    """Point where the backward ray ``y - t*eta`` (t >= 0) leaves the circumscribed ball."""
    cx, cy = BALL_CENTER
    if math.hypot(y[0] - cx, y[1] - cy) > BALL_RADIUS + 1e-12:
        raise GeometryError(f"point {y} outside the circumscribed ball")
    t_lo, _ = _ball_roots(y, eta)
    t = min(t_lo, 0.0)
    return (y[0] + t * math.cos(eta), y[1] + t * math.sin(eta))


def ball_entry(y, eta):
    """Entry point into the ball of the full line through ``y`` with direction ``eta``.

    Vectorised; lines missing the ball return NaN.
    """
    y = np.asarray(y, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    dx, dy = np.cos(eta), np.sin(eta)
    ox, oy = y[..., 0] - BALL_CENTER[0], y[..., 1] - BALL_CENTER[1]
    b = ox * dx + oy * dy
    c = ox * ox + oy * oy - BALL_RADIUS ** 2
    disc = b * b - c
    with np.errstate(invalid="ignore"):
        t = -b - np.sqrt(disc)
    return np.stack([y[..., 0] + t * dx, y[..., 1] + t * dy], axis=-1)


def points_to_s(points) -> np.ndarray:
    """Vectorised arclength of boundary points (nearest edge; corners map to integers)."""
    p = np.atleast_2d(np.asarray(points, dtype=np.float64))
    x = np.clip(p[:, 0], 0.0, 1.0)
    y = np.clip(p[:, 1], 0.0, 1.0)
    d = np.stack([y, 1.0 - x, 1.0 - y, x], axis=1)
    edge = np.argmin(d, axis=1)
    s = np.choose(edge, [x, 1.0 + y, 2.0 + (1.0 - x), 3.0 + (1.0 - y)])
    return np.mod(s, 4.0)
