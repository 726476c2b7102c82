"""Smooth beam cutoffs on the ingoing boundary bundle of E.

A beam is a connected family of regular broken rays sharing one key: the
merged tile path (near-corner pairs collapsed into one diagonal step) together
with the terminal edge. Each beam lives in its own line chart: with origin
``o``, unit axis ``d`` (mean beam direction) and ``p = rot90(d)``, a directed
line with ``theta . d > 0`` is ``v = b + m a`` in the coordinates
``x = o + a d + v p``. Every constraint "crosses this segment with this
orientation" is linear in ``(b, m)``, so beams are convex there; a cutoff is
a product of bump profiles of the distances to the faces of the convex hull
of sampled beam lines. Since ``(b, m)`` depends only on the directed line,
cutoffs are constant along lines by construction.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from numba import njit
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .field import bump
from .geometry import (EPS_CORNER, AccessSet, GeometryError, Termination, inward_theta,
                       trace_many)
from .unfolding import reflect_point, unreflect_angle

SENTINEL = 1 << 40
CORE_FRACTION = 0.5


class CornerClass(str, Enum):
    CornerFree = "CornerFree"
    CornerStart = "CornerStart"
    InteriorCorner = "InteriorCorner"


def profile(u):
    """1 on u <= 1/2, bump((u - 1/2) / (1/2)) on (1/2, 1), 0 from 1 on."""
    u = np.asarray(u, dtype=np.float64)
    t = (u - (1.0 - CORE_FRACTION)) / CORE_FRACTION
    return np.where(u <= 1.0 - CORE_FRACTION, 1.0, bump(np.clip(t, 0.0, 1.0)))


# ---------------------------------------------------------------------------
# ray keys
# ---------------------------------------------------------------------------

@njit(cache=True)
def _terminal_code(x, y):
    for c in range(4):
        cx = 1.0 if (c == 1 or c == 2) else 0.0
        cy = 1.0 if c >= 2 else 0.0
        if math.hypot(x - cx, y - cy) < 1e-9:
            return 4 + c
    d0 = abs(y)
    d1 = abs(x - 1.0)
    d2 = abs(y - 1.0)
    d3 = abs(x)
    best = 0
    m = d0
    if d1 < m:
        best, m = 1, d1
    if d2 < m:
        best, m = 2, d2
    if d3 < m:
        best = 3
    return best


@njit(cache=True)
def _ray_keys(segs, refls, nseg, term):
    """Key rows [terminal code, h0, v0, h1, v1, ...] padded with SENTINEL; -1 rows if irregular.

    Also returns the index of the first diagonal tile step (-1 if none).
    """
    n, max_seg = segs.shape[0], segs.shape[1]
    keys = np.full((n, 1 + 2 * max_seg), SENTINEL, np.int64)
    corner_at = np.full(n, -1, np.int64)
    for r in range(n):
        if term[r] != 0:
            keys[r, :] = -1
            continue
        ns = nseg[r]
        keys[r, 0] = _terminal_code(segs[r, ns - 1, 2], segs[r, ns - 1, 3])
        q = 0
        ph = 0
        pv = 0
        for j in range(ns):
            if j < ns - 1 and refls[r, j, 3] > 0.5:
                continue  # bow-tie segment of a near-corner pair
            h = int(segs[r, j, 7])
            v = int(segs[r, j, 8])
            if q > 0 and abs(h - ph) == 1 and abs(v - pv) == 1 and corner_at[r] < 0:
                corner_at[r] = q
            keys[r, 1 + 2 * q] = h
            keys[r, 2 + 2 * q] = v
            ph = h
            pv = v
            q += 1
    return keys, corner_at


def key_tiles(key) -> tuple[tuple[int, int], ...]:
    body = [int(k) for k in key[1:] if k != SENTINEL]
    return tuple(zip(body[0::2], body[1::2]))


def ray_keys(batch):
    return _ray_keys(batch.segs, batch.refls, batch.nseg, batch.termination)


# ---------------------------------------------------------------------------
# labeling
# ---------------------------------------------------------------------------

@njit(cache=True)
def _label_equal(ids):
    """4-connected components of equal nonnegative ids; -1 cells stay unlabeled."""
    ns, nphi = ids.shape
    lab = np.full((ns, nphi), -1, np.int64)
    stack = np.empty((ns * nphi, 2), np.int64)
    count = 0
    for i in range(ns):
        for k in range(nphi):
            if ids[i, k] < 0 or lab[i, k] >= 0:
                continue
            key = ids[i, k]
            top = 0
            stack[0, 0] = i
            stack[0, 1] = k
            lab[i, k] = count
            top = 1
            while top > 0:
                top -= 1
                a = stack[top, 0]
                b = stack[top, 1]
                for da, db in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    aa = a + da
                    bb = b + db
                    if 0 <= aa < ns and 0 <= bb < nphi and lab[aa, bb] < 0 and ids[aa, bb] == key:
                        lab[aa, bb] = count
                        stack[top, 0] = aa
                        stack[top, 1] = bb
                        top += 1
            count += 1
    return lab, count


# ---------------------------------------------------------------------------
# charts and beams
# ---------------------------------------------------------------------------

@dataclass
class Chart:
    origin: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64)
        d = np.asarray(self.d, dtype=np.float64)
        self.d = d / np.linalg.norm(d)

    @property
    def p(self) -> np.ndarray:
        return np.array([-self.d[1], self.d[0]])

    def coords(self, points, theta):
        """(b, m, ok) for directed lines through ``points`` with direction ``theta``."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        th = np.broadcast_to(np.asarray(theta, dtype=np.float64), (len(pts),))
        ux, uy = np.cos(th), np.sin(th)
        cd = ux * self.d[0] + uy * self.d[1]
        cp = ux * self.p[0] + uy * self.p[1]
        ok = cd > 1e-12
        m = np.where(ok, cp / np.where(ok, cd, 1.0), 0.0)
        zx, zy = pts[:, 0] - self.origin[0], pts[:, 1] - self.origin[1]
        za = zx * self.d[0] + zy * self.d[1]
        zv = zx * self.p[0] + zy * self.p[1]
        return zv - m * za, m, ok

    def line(self, b, m):
        """Point on the line and direction angle for chart coordinates."""
        b = np.asarray(b, dtype=np.float64)
        m = np.asarray(m, dtype=np.float64)
        pt = self.origin[None, :] + b[..., None] * self.p[None, :]
        direc = self.d[None, :] + m[..., None] * self.p[None, :]
        return pt, np.arctan2(direc[..., 1], direc[..., 0])


def line_entry(points, theta):
    """Entry point into the closed unit square of each directed line (NaN if it misses)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    ux, uy = np.cos(theta), np.sin(theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1x = (0.0 - pts[:, 0]) / ux
        t2x = (1.0 - pts[:, 0]) / ux
        t1y = (0.0 - pts[:, 1]) / uy
        t2y = (1.0 - pts[:, 1]) / uy
    tlo = np.maximum(np.where(ux != 0, np.minimum(t1x, t2x), -np.inf),
                     np.where(uy != 0, np.minimum(t1y, t2y), -np.inf))
    thi = np.minimum(np.where(ux != 0, np.maximum(t1x, t2x), np.inf),
                     np.where(uy != 0, np.maximum(t1y, t2y), np.inf))
    ok = (thi - tlo > 1e-12) & np.isfinite(tlo)
    # lines parallel to an edge must lie inside the slab
    ok &= ~((ux == 0) & ((pts[:, 0] < 0) | (pts[:, 0] > 1)))
    ok &= ~((uy == 0) & ((pts[:, 1] < 0) | (pts[:, 1] > 1)))
    e = pts + tlo[:, None] * np.stack([ux, uy], axis=1)
    e = np.clip(e, 0.0, 1.0)
    e[~ok] = np.nan
    return e


@dataclass
class Beam:
    chart: Chart
    A: np.ndarray  # hull faces: A z <= c with unit rows, z = (b, m)
    c: np.ndarray
    center: np.ndarray
    inradius: float
    tiles: tuple
    terminal: int
    corner_class: CornerClass
    corner_index: int = -1
    area: float = 0.0
    vertices: np.ndarray = field(default=None, repr=False)

    def value_bm(self, b, m):
        z = np.stack([np.asarray(b, float), np.asarray(m, float)], axis=-1)
        dist = self.c[None, :] - z.reshape(-1, 2) @ self.A.T
        u = 1.0 - dist / self.inradius
        out = np.prod(profile(u), axis=1)
        out[np.any(dist <= 0.0, axis=1)] = 0.0
        return out.reshape(np.shape(b))

    def value_xy(self, points, theta):
        b, m, ok = self.chart.coords(points, theta)
        return np.where(ok, self.value_bm(b, m), 0.0)

    def core_polygon(self) -> np.ndarray:
        """Vertices of the region where the cutoff equals 1 (faces moved in by r/2)."""
        c2 = self.c - CORE_FRACTION * self.inradius
        return _halfspace_vertices(self.A, c2, self.center)

    def to_json(self) -> dict:
        return {"chart": {"origin": self.chart.origin.tolist(), "d": self.chart.d.tolist()},
                "A": self.A.tolist(), "c": self.c.tolist(), "center": self.center.tolist(),
                "inradius": self.inradius, "tiles": [list(t) for t in self.tiles],
                "terminal": self.terminal, "corner_class": self.corner_class.value,
                "corner_index": self.corner_index, "area": self.area,
                "support": None if self.vertices is None else self.vertices.tolist(),
                "core": self.core_polygon().tolist()}

    @classmethod
    def from_json(cls, d: dict) -> "Beam":
        return cls(Chart(d["chart"]["origin"], d["chart"]["d"]), np.array(d["A"]),
                   np.array(d["c"]), np.array(d["center"]), float(d["inradius"]),
                   tuple(tuple(t) for t in d["tiles"]), int(d["terminal"]),
                   CornerClass(d["corner_class"]), int(d["corner_index"]), float(d["area"]),
                   None if d.get("support") is None else np.array(d["support"]))


def _halfspace_vertices(A, c, interior):
    from scipy.spatial import HalfspaceIntersection
    try:
        hs = HalfspaceIntersection(np.hstack([A, -c[:, None]]), np.asarray(interior, float))
        pts = hs.intersections
        ang = np.arctan2(pts[:, 1] - interior[1], pts[:, 0] - interior[0])
        return pts[np.argsort(ang)]
    except (QhullError, ValueError):
        return np.zeros((0, 2))


def _chebyshev(A, c):
    res = linprog([0, 0, -1], A_ub=np.hstack([A, np.ones((len(A), 1))]), b_ub=c,
                  bounds=[(None, None), (None, None), (0, None)], method="highs")
    if not res.success:
        return None, 0.0
    return res.x[:2], float(res.x[2])


def _hull(z):
    """Convex hull half-planes (unit normals) of 2-D points, or None if degenerate."""
    if len(z) < 3:
        return None
    scale = z.max(axis=0) - z.min(axis=0)
    if np.any(scale < 1e-12):
        return None
    try:
        hull = ConvexHull(z)
    except QhullError:
        return None
    eq = hull.equations
    nrm = np.linalg.norm(eq[:, :2], axis=1)
    return eq[:, :2] / nrm[:, None], -eq[:, 2] / nrm, z[hull.vertices]


# ---------------------------------------------------------------------------
# cutoff
# ---------------------------------------------------------------------------

@dataclass
class Cutoff:
    """Sum of beam cutoffs; ``beams is None`` means the unit cutoff (1 on regular rays)."""

    beams: list | None
    n_max: int
    E: AccessSet | None = None

    @classmethod
    def unit(cls, E: AccessSet, n_max: int) -> "Cutoff":
        return cls(None, n_max, E)

    @property
    def is_unit(self) -> bool:
        return self.beams is None

    def eval_alpha_xy(self, points, theta) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        th = np.broadcast_to(np.asarray(theta, dtype=np.float64), (len(pts),))
        if self.is_unit:
            b = trace_many(pts[:, 0], pts[:, 1], th, self.E, self.n_max)
            return (b.termination == Termination.HitE).astype(float)
        out = np.zeros(len(pts))
        for beam in self.beams:
            out += beam.value_xy(pts, th)
        return out

    def beam_of_xy(self, points, theta) -> np.ndarray:
        """Index of the beam whose support holds each directed line (-1 if none)."""
        pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
        th = np.broadcast_to(np.asarray(theta, dtype=np.float64), (len(pts),))
        idx = np.full(len(pts), -1)
        for k, beam in enumerate(self.beams or []):
            idx[beam.value_xy(pts, th) > 0] = k
        return idx

    def eval_alpha(self, s, phi) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=np.float64)) % 4.0
        phi = np.broadcast_to(np.asarray(phi, dtype=np.float64), s.shape)
        return self.eval_alpha_xy(_boundary_points(s), inward_theta(s, phi))

    def on_grid(self, sino) -> np.ndarray:
        pts, th = sino.tangents()
        if self.is_unit:
            return np.ones(sino.shape)
        return self.eval_alpha_xy(pts, th).reshape(sino.shape)

    def to_json(self) -> dict:
        return {"n_max": self.n_max, "core_fraction": CORE_FRACTION, "bump": "exp(1-1/(1-t^2))",
                "E": None if self.E is None else [list(a) for a in self.E.arcs],
                "beams": None if self.beams is None else [b.to_json() for b in self.beams]}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def load(cls, path) -> "Cutoff":
        d = json.loads(Path(path).read_text())
        E = None if d["E"] is None else AccessSet(tuple(tuple(a) for a in d["E"]))
        beams = None if d["beams"] is None else [Beam.from_json(b) for b in d["beams"]]
        return cls(beams, int(d["n_max"]), E)


def _boundary_points(s):
    s = np.asarray(s, dtype=np.float64)
    edge = np.minimum(np.floor(s).astype(int), 3)
    u = s - edge
    x = np.select([edge == 0, edge == 1, edge == 2], [u, 1.0, 1.0 - u], 0.0)
    y = np.select([edge == 0, edge == 1, edge == 2], [0.0, u, 1.0], 1.0 - u)
    return np.stack([x, y], axis=1)


def alpha_pullback(c: Cutoff, y, eta, j: int, tiles) -> np.ndarray:
    """|alpha|^2 of the ray through (y, eta) seen as a point of its segment j.

    The unfolded line through R_{tiles[j]}(y) with direction S^-1_{tiles[j]}(eta)
    is the line of the launching segment, so the cutoff is read off directly
    from its chart coordinates. Rays from a beam with a different tile path
    contribute 0.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    eta = np.broadcast_to(np.asarray(eta, dtype=np.float64), (len(y),))
    tiles = tuple(tuple(int(v) for v in t) for t in tiles)
    tj = tiles[j]
    yt = reflect_point(y, tj)
    th = unreflect_angle(eta, tj)
    if c.is_unit:
        entry = line_entry(yt, th)
        out = np.zeros(len(y))
        ok = np.isfinite(entry[:, 0])
        if ok.any():
            b = trace_many(entry[ok, 0], entry[ok, 1], th[ok], c.E, c.n_max)
            keys, _ = ray_keys(b)
            hit = np.array([key_tiles(k) == tiles for k in keys])
            out[ok] = np.where((b.termination == Termination.HitE) & hit, 1.0, 0.0)
        return out
    out = np.zeros(len(y))
    for beam in c.beams:
        if beam.tiles == tiles:
            out += beam.value_xy(yt, th) ** 2
    return out


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

@dataclass
class _Piece:
    arc: int
    s0: float
    s1: float
    s: np.ndarray
    ds: float


def _pieces(E: AccessSet, res: int):
    out = []
    for k, (a, b) in enumerate(E.arcs):
        cuts = [a] + [float(c) for c in range(int(math.floor(a)) + 1, int(math.ceil(b)))] + [b]
        for s0, s1 in zip(cuts[:-1], cuts[1:]):
            n = max(2, int(math.ceil((s1 - s0) * res)))
            ds = (s1 - s0) / n
            out.append(_Piece(k, s0, s1, s0 + (np.arange(n) + 0.5) * ds, ds))
    return out


def _trace_keys(E, n_max, pts, th, chunk=1 << 16):
    keys, corner_at = [], []
    for a in range(0, len(th), chunk):
        b = trace_many(pts[a:a + chunk, 0], pts[a:a + chunk, 1], th[a:a + chunk], E, n_max)
        k, ca = ray_keys(b)
        keys.append(k)
        corner_at.append(ca)
    return np.concatenate(keys), np.concatenate(corner_at)


def _make_beam(pts, th, w, key_row, corner_idx, klass, area):
    d = np.array([np.cos(th).mean(), np.sin(th).mean()])
    if np.linalg.norm(d) < 1e-6:
        return None
    chart = Chart(np.average(pts, axis=0, weights=w), d)
    b, m, ok = chart.coords(pts, th)
    if not ok.all() or np.abs(m).max() > 1e3:
        return None
    hull = _hull(np.stack([b, m], axis=1))
    if hull is None:
        return None
    A, c, verts = hull
    center, r = _chebyshev(A, c)
    if center is None or r <= 0:
        return None
    if corner_idx >= 0:
        klass = CornerClass.InteriorCorner
    return Beam(chart, A, c, center, r, key_tiles(key_row), int(key_row[0]), klass,
                int(corner_idx), float(area), verts)


def _shrunk(beam: Beam, factor: float) -> Beam:
    c = beam.A @ beam.center + factor * (beam.c - beam.A @ beam.center)
    verts = None if beam.vertices is None else beam.center + factor * (beam.vertices - beam.center)
    return Beam(beam.chart, beam.A, c, beam.center, beam.inradius * factor, beam.tiles,
                beam.terminal, beam.corner_class, beam.corner_index, beam.area, verts)


def verify_beam(beam: Beam, E: AccessSet, n_max: int, n: int, rng) -> bool:
    """All sampled lines with positive cutoff trace to regular rays with the beam key."""
    lo = beam.vertices.min(axis=0) if beam.vertices is not None else beam.center - 1
    hi = beam.vertices.max(axis=0) if beam.vertices is not None else beam.center + 1
    z = lo + (hi - lo) * rng.random((4 * n, 2))
    inside = np.all(z @ beam.A.T < beam.c[None, :], axis=1)
    z = z[inside][:n]
    # include points hugging the faces
    if beam.vertices is not None and len(beam.vertices):
        t = rng.random((n // 4, 1))
        k = rng.integers(0, len(beam.vertices), n // 4)
        v0 = beam.vertices[k]
        v1 = beam.vertices[(k + 1) % len(beam.vertices)]
        edge_pts = v0 + t * (v1 - v0)
        edge_pts = beam.center + (1 - 1e-6) * (edge_pts - beam.center)
        z = np.vstack([z, edge_pts])
    if len(z) == 0:
        return False
    pt, th = beam.chart.line(z[:, 0], z[:, 1])
    entry = line_entry(pt, th)
    if not np.isfinite(entry).all():
        return False
    b = trace_many(entry[:, 0], entry[:, 1], th, E, n_max)
    if not np.all(b.termination == Termination.HitE):
        return False
    keys, _ = ray_keys(b)
    want = np.array([beam.terminal] + [v for t in beam.tiles for v in t])
    return bool(np.all(keys[:, :len(want)] == want[None, :]) and
                np.all(keys[:, len(want):] == SENTINEL))


def classify_beams(E: AccessSet, n_max: int, resolution: int = 1024, n_phi: int | None = None,
                   min_area_frac: float = 1e-4, n_verify: int = 2000, seed: int = 0,
                   merge_corners: bool = True) -> Cutoff:
    """Partition sampled regular rays of Gamma_-(E) into beams and build their cutoffs.

    ``resolution`` is the number of arclength samples per unit length;
    ``n_phi`` (default ``resolution``) the number of incidence samples.
    """
    if E.measure() <= 0:
        raise GeometryError("empty access set")
    n_phi = resolution if n_phi is None else n_phi
    rng = np.random.default_rng(seed)
    dphi = math.pi / n_phi
    phis = -0.5 * math.pi + (np.arange(n_phi) + 0.5) * dphi
    pieces = _pieces(E, resolution)
    all_s = np.concatenate([pc.s for pc in pieces]) % 4.0
    S, P = np.meshgrid(all_s, phis, indexing="ij")
    th = inward_theta(S.ravel(), P.ravel())
    pts = _boundary_points(S.ravel())
    keys, corner_at = _trace_keys(E, n_max, pts, th)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    irregular = np.all(uniq == -1, axis=1)
    ids = np.where(irregular[inv], -1, inv).reshape(S.shape)
    cell_w = np.cos(P) * dphi
    total = 0.0
    comps = []  # (piece index, rows, mask-in-piece)
    row = 0
    for pi, pc in enumerate(pieces):
        n = len(pc.s)
        block = ids[row:row + n]
        lab, count = _label_equal(np.ascontiguousarray(block))
        wblock = cell_w[row:row + n] * pc.ds
        total += wblock.sum()
        for c in range(count):
            m = lab == c
            comps.append({"piece": pi, "row0": row, "mask": m, "key": int(block[m][0]),
                          "area": float(wblock[m].sum())})
        row += n
    # corner-start merging across corners interior to E
    parent = list(range(len(comps)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    corner_merged = set()
    if merge_corners:
        for pi, pc in enumerate(pieces):
            for pj, qc in enumerate(pieces):
                if pi == pj or abs((pc.s1 - qc.s0) % 4.0) > 1e-12 or pc.arc != qc.arc:
                    continue
                corner = pc.s1 % 4.0
                if abs(corner - round(corner)) > 1e-12 or E.distance_to_boundary(corner) < E.eps_boundary:
                    continue
                left = [k for k, cp in enumerate(comps) if cp["piece"] == pi and cp["mask"][-1].any()]
                right = [k for k, cp in enumerate(comps) if cp["piece"] == pj and cp["mask"][0].any()]
                for a in left:
                    for b in right:
                        if comps[a]["key"] == comps[b]["key"]:
                            parent[find(a)] = find(b)
                            corner_merged.update((a, b))
    groups: dict[int, list[int]] = {}
    for k in range(len(comps)):
        groups.setdefault(find(k), []).append(k)
    beams = []
    min_area = min_area_frac * total
    for members in groups.values():
        area = sum(comps[k]["area"] for k in members)
        if area < min_area:
            continue
        gpts, gth, gw = [], [], []
        for k in members:
            cp = comps[k]
            r0 = cp["row0"]
            rows, cols = np.nonzero(cp["mask"])
            flat = (r0 + rows) * n_phi + cols
            gpts.append(pts[flat])
            gth.append(th[flat])
            gw.append(cell_w.ravel()[flat])
        gpts = np.concatenate(gpts)
        gth = np.concatenate(gth)
        gw = np.concatenate(gw)
        key_row = uniq[comps[members[0]]["key"]]
        flat0 = (comps[members[0]]["row0"] + np.nonzero(comps[members[0]]["mask"])[0][0]) * n_phi
        klass = CornerClass.CornerStart if any(k in corner_merged for k in members) else CornerClass.CornerFree
        cidx = int(corner_at[flat0 + np.nonzero(comps[members[0]]["mask"])[1][0]])
        beam = _make_beam(gpts, gth, gw, key_row, cidx, klass, area)
        if beam is None:
            continue
        beam = _verified(beam, E, n_max, n_verify, rng)
        if beam is not None:
            beams.append(beam)
    if merge_corners:
        beams += _corner_band_beams(E, n_max, beams, min_area, n_verify, rng)
    return Cutoff(beams, n_max, E)


def _verified(beam, E, n_max, n_verify, rng):
    for _ in range(6):
        if verify_beam(beam, E, n_max, n_verify, rng):
            return beam
        beam = _shrunk(beam, 0.85)
    return None


def _corner_crossings(tiles):
    """(q, corner point, merged tiles) for each pair of unit steps around one tile corner."""
    out = []
    for q in range(1, len(tiles) - 1):
        a, b, c = tiles[q - 1], tiles[q], tiles[q + 1]
        dh, dv = c[0] - a[0], c[1] - a[1]
        unit = abs(b[0] - a[0]) + abs(b[1] - a[1]) == 1
        if unit and abs(dh) == 1 and abs(dv) == 1:
            corner = (a[0] + (dh > 0), a[1] + (dv > 0))
            out.append((q, np.array(corner, dtype=np.float64), tiles[:q] + tiles[q + 1:]))
    return out


def _corner_band_beams(E, n_max, beams, min_area, n_verify, rng, n_samples=1 << 16):
    """Beams of rays that pass so close to a tile corner that two reflections merge.

    These bands are thinner than any practical sampling grid, so they are
    sampled directly: lines from random points of E aimed within a few
    corner tolerances of the unfolded corner.
    """
    from .geometry import DELTA_CORNER
    arcs = E.as_array()
    lengths = arcs[:, 1] - arcs[:, 0]
    seen = set()
    out = []
    for beam in beams:
        for _, corner, merged in _corner_crossings(beam.tiles):
            key = (beam.terminal, merged)
            if key in seen:
                continue
            seen.add(key)
            k = rng.choice(len(arcs), size=n_samples, p=lengths / lengths.sum())
            s = np.mod(arcs[k, 0] + rng.random(n_samples) * lengths[k], 4.0)
            p = _boundary_points(s)
            to_c = corner[None, :] - p
            dist = np.linalg.norm(to_c, axis=1)
            half = 2.0 * DELTA_CORNER
            u = (2.0 * rng.random(n_samples) - 1.0) * half
            nrm = np.stack([-to_c[:, 1], to_c[:, 0]], axis=1) / dist[:, None]
            aim = to_c + u[:, None] * nrm
            th = np.arctan2(aim[:, 1], aim[:, 0])
            cosphi = np.cos(th - inward_theta(s, np.zeros_like(s)))
            ok = cosphi > 1e-6
            b = trace_many(p[ok, 0], p[ok, 1], th[ok], E, n_max)
            keys, corner_at = ray_keys(b)
            want = np.array([beam.terminal] + [v for t in merged for v in t])
            hit = ((b.termination == Termination.HitE)
                   & np.all(keys[:, :len(want)] == want[None, :], axis=1)
                   & np.all(keys[:, len(want):] == SENTINEL, axis=1))
            if hit.sum() < 16:
                continue
            # measure of the sampled window: |E| * mean(cos(phi) * angular width)
            width = 2.0 * half / dist[ok]
            area = float(lengths.sum() * np.sum(np.where(hit, cosphi[ok] * width, 0.0)) / n_samples)
            if area < min_area:
                continue
            idx = np.flatnonzero(ok)[hit]
            cidx = int(corner_at[hit][0])
            band = _make_beam(p[idx], th[idx], cosphi[idx], np.concatenate(
                [want, np.full(keys.shape[1] - len(want), SENTINEL)]), cidx,
                CornerClass.InteriorCorner, area)
            if band is not None:
                band = _verified(band, E, n_max, n_verify, rng)
            if band is not None:
                out.append(band)
    return out
