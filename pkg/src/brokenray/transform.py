"""Attenuated broken ray transform on a sinogram grid over the ingoing boundary bundle.

Sinogram cells are indexed by boundary arclength ``s`` (midpoints inside the
arcs of E) and incidence angle ``phi`` in (-pi/2, pi/2) measured from the
inward normal, so the boundary measure is ``cos(phi) ds dphi``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit, prange

from .field import (H_SIGMA, AttenuationField, GridFunction, ZeroAttenuation,
                    _segment_op, attenuation_profiles, is_smooth)
from .geometry import (AccessSet, GeometryError, Termination, UnitTangent, boundary_param,
                       inward_theta, trace_broken_ray, trace_many)


class Masked:
    """Marker returned for irregular rays."""

    def __repr__(self):
        return "Masked"


MASKED = Masked()


# ---------------------------------------------------------------------------
# sinogram grid
# ---------------------------------------------------------------------------

@dataclass
class SinogramGrid:
    E: AccessSet
    n_max: int
    s_per_unit: int = 256
    n_phi: int = 256
    values: np.ndarray | None = None
    mask: np.ndarray | None = None  # True where the ray is regular

    def __post_init__(self):
        if self.E.measure() <= 0:
            raise GeometryError("empty access set")
        s, ds, arc = [], [], []
        for k, (a, b) in enumerate(self.E.arcs):
            n = max(1, int(round((b - a) * self.s_per_unit)))
            h = (b - a) / n
            s.append(a + (np.arange(n) + 0.5) * h)
            ds.append(np.full(n, h))
            arc.append(np.full(n, k))
        self.s_samples = np.concatenate(s) % 4.0
        self.ds = np.concatenate(ds)
        self.arc_index = np.concatenate(arc)
        self.dphi = math.pi / self.n_phi
        self.phi_samples = -0.5 * math.pi + (np.arange(self.n_phi) + 0.5) * self.dphi
        if self.values is None:
            self.values = np.zeros(self.shape)
        if self.mask is None:
            self.mask = np.ones(self.shape, dtype=bool)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.s_samples.size, self.n_phi)

    @property
    def weights(self) -> np.ndarray:
        """cos(phi) ds dphi, zero on masked cells."""
        w = np.cos(self.phi_samples)[None, :] * self.ds[:, None] * self.dphi
        return np.where(self.mask, w, 0.0)

    def tangents(self):
        """Base points (n, 2) and directions (n,) of all cells, row-major in (s, phi)."""
        S, P = np.meshgrid(self.s_samples, self.phi_samples, indexing="ij")
        S = S.ravel()
        edge = np.minimum(np.floor(S).astype(int), 3)
        u = S - edge
        x = np.select([edge == 0, edge == 1, edge == 2], [u, 1.0, 1.0 - u], 0.0)
        y = np.select([edge == 0, edge == 1, edge == 2], [0.0, u, 1.0], 1.0 - u)
        return np.stack([x, y], axis=1), inward_theta(S, P.ravel())

    def like(self, values=None):
        out = SinogramGrid(self.E, self.n_max, self.s_per_unit, self.n_phi,
                           values=np.zeros(self.shape) if values is None else np.asarray(values, float),
                           mask=self.mask.copy())
        return out

    def compatible(self, other: "SinogramGrid") -> bool:
        return (self.E.arcs == other.E.arcs and self.n_max == other.n_max
                and self.shape == other.shape and self.s_per_unit == other.s_per_unit)

    def inner(self, other: "SinogramGrid") -> float:
        return float(np.sum(self.values * other.values * self.weights))

    def norm(self) -> float:
        return math.sqrt(self.inner(self))

    # -- file format -------------------------------------------------------
    def sidecar(self) -> dict:
        return {"arcs": [list(a) for a in self.E.arcs], "eps_boundary": self.E.eps_boundary,
                "s_per_unit": self.s_per_unit, "n_s": int(self.shape[0]), "n_phi": self.n_phi,
                "n_max": self.n_max, "mask_rle": rle_encode(self.mask.ravel())}

    def save(self, path):
        path = Path(path)
        np.where(self.mask, self.values, 0.0).astype("<f8").tofile(path)
        Path(str(path) + ".json").write_text(json.dumps(self.sidecar()))

    @classmethod
    def load(cls, path):
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text())
        E = AccessSet(tuple(tuple(a) for a in meta["arcs"]), meta.get("eps_boundary", 1e-6))
        g = cls(E, int(meta["n_max"]), int(meta["s_per_unit"]), int(meta["n_phi"]))
        raw = np.fromfile(path, dtype="<f8")
        if raw.size != g.shape[0] * g.shape[1]:
            raise GeometryError(f"{path}: sinogram size mismatch")
        g.values = raw.reshape(g.shape)
        g.mask = rle_decode(meta["mask_rle"], raw.size).reshape(g.shape)
        return g


def rle_encode(bits: np.ndarray) -> list[int]:
    """Run lengths of a boolean vector, starting with a run of True (possibly 0)."""
    bits = np.asarray(bits, dtype=bool)
    change = np.flatnonzero(np.diff(bits.astype(np.int8))) + 1
    edges = np.concatenate([[0], change, [bits.size]])
    runs = np.diff(edges).tolist()
    if bits.size and not bits[0]:
        runs = [0] + runs
    return [int(r) for r in runs]


def rle_decode(runs, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=bool)
    pos, val = 0, True
    for r in runs:
        out[pos:pos + r] = val
        pos += r
        val = not val
    return out


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def _forward_segments(vals, dx, dy, segs, nseg, active, offsets, s_nodes, a_nodes, h, smooth,
                      out):
    """out[r, j, k] = attenuated integral of grid vals[k] over segment j of ray r."""
    empty = np.zeros(1)
    has_att = a_nodes.shape[0] > 0
    for r in prange(nseg.shape[0]):
        if not active[r]:
            continue
        if has_att:
            aa = a_nodes[offsets[r]:offsets[r + 1]]
            ss = s_nodes[offsets[r]:offsets[r + 1]]
        else:
            aa = empty
            ss = empty
        T = 0.0
        for j in range(nseg[r]):
            L = segs[r, j, 6]
            _segment_op(vals, dx, dy, segs[r, j, 0], segs[r, j, 1], segs[r, j, 4],
                        segs[r, j, 5], L, T, aa, ss, h, smooth, out[r, j], False)
            T += L


@njit(cache=True)
def _adjoint_segments(out, dx, dy, segs, nseg, active, offsets, s_nodes, a_nodes, h, smooth,
                      coef):
    """Scatter coef[r, j, k] times the segment-j integration functional into out[k].

    Serial in ray order so that the accumulation is reproducible.
    """
    empty = np.zeros(1)
    has_att = a_nodes.shape[0] > 0
    m = coef.shape[2]
    for r in range(nseg.shape[0]):
        if not active[r]:
            continue
        if has_att:
            aa = a_nodes[offsets[r]:offsets[r + 1]]
            ss = s_nodes[offsets[r]:offsets[r + 1]]
        else:
            aa = empty
            ss = empty
        T = 0.0
        for j in range(nseg[r]):
            L = segs[r, j, 6]
            c = coef[r, j]
            nz = False
            for k in range(m):
                if c[k] != 0.0:
                    nz = True
                    break
            if nz:
                _segment_op(out, dx, dy, segs[r, j, 0], segs[r, j, 1], segs[r, j, 4],
                            segs[r, j, 5], L, T, aa, ss, h, smooth, c, True)
            T += L


# ---------------------------------------------------------------------------
# operator
# ---------------------------------------------------------------------------

@dataclass
class BrokenRayTransform:
    """Matrix-free pair (I_alpha, I_alpha^*) between a pixel grid and a sinogram grid.

    ``alpha`` is an array of cutoff values on the sinogram cells (None for 1).
    """

    sino: SinogramGrid
    nx: int
    ny: int | None = None
    sigma: AttenuationField | None = None
    alpha: np.ndarray | None = None
    h_sigma: float = H_SIGMA
    _rays: object = field(default=None, repr=False)

    def __post_init__(self):
        self.ny = self.nx if self.ny is None else self.ny
        self.sigma = self.sigma if self.sigma is not None else ZeroAttenuation()
        pts, th = self.sino.tangents()
        self._rays = trace_many(pts[:, 0], pts[:, 1], th, self.sino.E, self.sino.n_max)
        regular = self._rays.termination == Termination.HitE
        self.sino.mask = regular.reshape(self.sino.shape)
        self._offsets, self._s_nodes, self._a_nodes = attenuation_profiles(
            self.sigma, self._rays.segs, self._rays.nseg, self.h_sigma)
        self._smooth = is_smooth(self.sigma)
        if self.alpha is not None:
            a = np.asarray(self.alpha, dtype=np.float64)
            if a.shape != self.sino.shape:
                raise GeometryError("cutoff values do not match the sinogram grid")
            self.alpha = a
        self._alpha_flat = (np.ones(len(regular)) if self.alpha is None
                            else self.alpha.ravel())
        self._active = regular & (self._alpha_flat != 0.0)
        self.dx = 1.0 / self.nx
        self.dy = 1.0 / self.ny

    @property
    def rays(self):
        return self._rays

    @property
    def mask(self) -> np.ndarray:
        return self.sino.mask

    @property
    def grid_shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def _check_grid(self, f):
        vals = f.values if isinstance(f, GridFunction) else np.asarray(f, dtype=np.float64)
        if vals.shape != self.grid_shape:
            raise GeometryError(f"grid shape {vals.shape} does not match {self.grid_shape}")
        return np.ascontiguousarray(vals)

    def _segment_stack(self, vals) -> np.ndarray:
        out = np.zeros(self._rays.segs.shape[:2] + (vals.shape[0],))
        _forward_segments(vals, self.dx, self.dy, self._rays.segs, self._rays.nseg,
                          self._active, self._offsets, self._s_nodes, self._a_nodes,
                          self.h_sigma, self._smooth, out)
        return out

    def segment_values(self, f) -> np.ndarray:
        """Per-(ray, segment) attenuated integrals, shape (n_rays, max_segments)."""
        return self._segment_stack(self._check_grid(f)[None])[:, :, 0]

    def forward_raw(self, f) -> np.ndarray:
        """Unweighted transform values I f (no cutoff); zero on masked cells."""
        return self.segment_values(f).sum(axis=1).reshape(self.sino.shape)

    def forward(self, f) -> SinogramGrid:
        """I_alpha f on the sinogram grid."""
        return self.sino.like(self.forward_stack(self._check_grid(f)[None])[0])

    def forward_stack(self, fs) -> np.ndarray:
        """I_alpha applied to a stack of grids, shape (m, nx, ny) -> (m, *sinogram shape).

        One pass over the rays; geometry and attenuation are shared by the stack.
        """
        fs = np.ascontiguousarray(fs, dtype=np.float64)
        if fs.ndim != 3 or fs.shape[1:] != self.grid_shape:
            raise GeometryError(f"stack shape {fs.shape} does not match (m, *{self.grid_shape})")
        v = self._segment_stack(fs).sum(axis=1) * self._alpha_flat[:, None]
        v = np.where(self._active[:, None], v, 0.0)
        return np.ascontiguousarray(v.T).reshape((fs.shape[0],) + self.sino.shape)

    def _scatter(self, coef) -> np.ndarray:
        """coef has shape (n_rays, max_segments, m); returns (m, nx, ny)."""
        out = np.zeros((coef.shape[2],) + self.grid_shape)
        _adjoint_segments(out, self.dx, self.dy, self._rays.segs, self._rays.nseg,
                          self._active, self._offsets, self._s_nodes, self._a_nodes,
                          self.h_sigma, self._smooth, np.ascontiguousarray(coef))
        return out / (self.dx * self.dy)

    def _cell_weights(self) -> np.ndarray:
        return self.sino.weights.ravel()

    def adjoint(self, g) -> GridFunction:
        """Adjoint of :meth:`forward` for the weighted sinogram and grid inner products."""
        gv = g.values if isinstance(g, SinogramGrid) else np.asarray(g, dtype=np.float64)
        if gv.shape != self.sino.shape:
            raise GeometryError("sinogram shape mismatch")
        return GridFunction(self.adjoint_stack(gv[None])[0])

    def adjoint_stack(self, gs) -> np.ndarray:
        """Adjoint applied to a stack of sinograms, shape (m, *sinogram shape) -> (m, nx, ny)."""
        gs = np.asarray(gs, dtype=np.float64)
        if gs.ndim != 3 or gs.shape[1:] != self.sino.shape:
            raise GeometryError("sinogram shape mismatch")
        r = (self._cell_weights() * self._alpha_flat)[:, None] * gs.reshape(len(gs), -1).T
        nseg_max = self._rays.segs.shape[1]
        coef = np.repeat(r[:, None, :], nseg_max, axis=1)
        return self._scatter(coef)

    def normal(self, f) -> GridFunction:
        b, rf = self.normal_split(f)
        return GridFunction(b.values + rf.values)

    def normal_split(self, f):
        """(ballistic, reflect): the same-segment and cross-segment parts of I*I."""
        p = self.segment_values(f)
        P = p.sum(axis=1, keepdims=True)
        d = (self._cell_weights() * self._alpha_flat ** 2)[:, None]
        ballistic = self._scatter((d * p)[:, :, None])[0]
        reflect = self._scatter((d * (P - p))[:, :, None])[0]
        return GridFunction(ballistic), GridFunction(reflect)

    def normal_direct(self, f) -> GridFunction:
        """I*(I f) computed through the two public maps (for cross-checks)."""
        return self.adjoint(self.forward(f))


# ---------------------------------------------------------------------------
# single-ray and cell-wise API
# ---------------------------------------------------------------------------

def forward_one(f: GridFunction, sigma: AttenuationField | None, v: UnitTangent, E: AccessSet,
                n_max: int, h_sigma: float = H_SIGMA):
    """Attenuated integral of f along the broken ray launched at v, or MASKED."""
    ray = trace_broken_ray(v, E, n_max)
    if not ray.regular:
        return MASKED
    segs = np.zeros((1, len(ray.segments), 9))
    for j, (p0, p1, th, L) in enumerate(ray.segments):
        segs[0, j, :7] = (p0[0], p0[1], p1[0], p1[1], math.cos(th), math.sin(th), L)
    nseg = np.array([len(ray.segments)])
    sigma = sigma if sigma is not None else ZeroAttenuation()
    off, s_nodes, a_nodes = attenuation_profiles(sigma, segs, nseg, h_sigma)
    out = np.zeros((1, len(ray.segments), 1))
    _forward_segments(f.values[None], f.dx, f.dy, segs, nseg, np.array([True]), off, s_nodes,
                      a_nodes, h_sigma, is_smooth(sigma), out)
    return float(out.sum())


def forward_all(f: GridFunction, sigma: AttenuationField | None, grid: SinogramGrid,
                h_sigma: float = H_SIGMA) -> SinogramGrid:
    op = BrokenRayTransform(grid, f.nx, f.ny, sigma=sigma, h_sigma=h_sigma)
    out = op.forward(f)
    grid.values = out.values
    return out


def apply_cutoff(sino: SinogramGrid, alpha) -> SinogramGrid:
    """Multiply sinogram values by cutoff values (array, or a Cutoff evaluated on the grid)."""
    a = alpha.on_grid(sino) if hasattr(alpha, "on_grid") else np.asarray(alpha, dtype=np.float64)
    if a.shape != sino.shape:
        raise GeometryError("cutoff grid does not match sinogram grid")
    return sino.like(np.where(sino.mask, sino.values * a, 0.0))


def sinogram_point(grid: SinogramGrid, i: int, k: int) -> UnitTangent:
    s = float(grid.s_samples[i])
    return UnitTangent(boundary_param(s), float(inward_theta(np.array([s]), grid.phi_samples[k])[0]))
