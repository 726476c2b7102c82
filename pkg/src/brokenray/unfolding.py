"""Reflection signatures and the fold/unfold maps onto the mirrored tiling of the plane.

A signature ``(l1, l2)`` names the tile ``[l1, l1+1) x [l2, l2+1)``.
``reflect_point`` maps the square onto that tile and ``unreflect_point`` maps
the tile back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import TWO_PI, BrokenRay


@dataclass(frozen=True)
class ReflectionSignature:
    l1: int
    l2: int

    def __iter__(self):
        yield self.l1
        yield self.l2

    def __add__(self, other):
        a, b = other
        return ReflectionSignature(self.l1 + a, self.l2 + b)


def _sig(sig):
    l1, l2 = sig
    return int(l1), int(l2)


def _parity(l):
    """(-1)**l for integer arrays, as float."""
    return 1.0 - 2.0 * (np.asarray(l) % 2)


def reflect_point(w, sig):
    """R_{l1,l2}: square -> tile (l1, l2). Vectorised over the leading axes of ``w``."""
    l1, l2 = np.asarray(sig[0]), np.asarray(sig[1])
    w = np.asarray(w, dtype=np.float64)
    p1, p2 = _parity(l1), _parity(l2)
    x = l1 + 0.5 * (1.0 - p1) + p1 * w[..., 0]
    y = l2 + 0.5 * (1.0 - p2) + p2 * w[..., 1]
    return np.stack([x, y], axis=-1)


def unreflect_point(w, sig):
    """R^{-1}_{l1,l2}: tile (l1, l2) -> square."""
    l1, l2 = np.asarray(sig[0]), np.asarray(sig[1])
    w = np.asarray(w, dtype=np.float64)
    p1, p2 = _parity(l1), _parity(l2)
    x = -p1 * l1 + 0.5 * (1.0 - p1) + p1 * w[..., 0]
    y = -p2 * l2 + 0.5 * (1.0 - p2) + p2 * w[..., 1]
    return np.stack([x, y], axis=-1)


def reflect_angle(theta, sig):
    """S_{l1,l2}, normalised to [0, 2pi)."""
    l1, l2 = np.asarray(sig[0]), np.asarray(sig[1])
    p1, p2 = _parity(l1), _parity(l2)
    out = p1 * p2 * np.asarray(theta, dtype=np.float64) + 0.5 * math.pi * (1.0 - p1)
    return np.mod(out, TWO_PI)


def unreflect_angle(eta, sig):
    """S^{-1}_{l1,l2}, normalised to [0, 2pi)."""
    l1, l2 = np.asarray(sig[0]), np.asarray(sig[1])
    p1, p2 = _parity(l1), _parity(l2)
    out = p2 * (p1 * np.asarray(eta, dtype=np.float64) + 0.5 * math.pi * (1.0 - p1))
    return np.mod(out, TWO_PI)


def tile_of(w):
    """Half-open tile index (floor) of points in the plane."""
    w = np.asarray(w, dtype=np.float64)
    return np.floor(w[..., 0]).astype(np.int64), np.floor(w[..., 1]).astype(np.int64)


def fold_point(w):
    """Map a plane point to (square point, tile signature)."""
    w = np.asarray(w, dtype=np.float64)
    l1, l2 = tile_of(w)
    y = unreflect_point(w, (l1, l2))
    if w.ndim == 1:
        return (float(y[0]), float(y[1])), ReflectionSignature(int(l1), int(l2))
    return y, (l1, l2)


def relative_point_map(w, sig_from, sig_to):
    """R^{-1}_{sig_to} o R_{sig_from}: carries a square point along an unfolded line."""
    return unreflect_point(reflect_point(w, sig_from), sig_to)


def relative_angle_map(theta, sig_from, sig_to):
    """S_{sig_to} o S^{-1}_{sig_from}: the matching direction map."""
    return reflect_angle(unreflect_angle(theta, sig_from), sig_to)


def extend_field(g, w, eta=None):
    """Evaluate a field on the square at the folded image of plane point(s) ``w``.

    ``g`` is either a scalar-field callable ``g(points)`` or an attenuation
    evaluator ``g(points, theta)``; in the latter case ``eta`` is unfolded by
    ``S^{-1}`` of the tile.
    """
    w = np.atleast_2d(np.asarray(w, dtype=np.float64))
    l1, l2 = tile_of(w)
    y = unreflect_point(w, (l1, l2))
    if eta is None:
        out = np.asarray(g(y), dtype=np.float64)
    else:
        th = unreflect_angle(np.broadcast_to(eta, l1.shape), (l1, l2))
        out = np.asarray(g(y, th), dtype=np.float64)
    return out


def unfold_ray(r: BrokenRay, tol: float = 1e-9):
    """Unfolded chord endpoints and tile path of a traced broken ray."""
    if not r.segments:
        raise ValueError("ray has no segments")
    tiles = [tuple(t) for t in r.tiles]
    pts = [reflect_point(np.asarray(r.segments[0][0]), tiles[0])]
    for seg, tile in zip(r.segments, tiles):
        pts.append(reflect_point(np.asarray(seg[1]), tile))
    pts = np.array(pts)
    p0, p1 = pts[0], pts[-1]
    d = p1 - p0
    nrm = math.hypot(d[0], d[1])
    if nrm > 0:
        resid = np.abs(d[0] * (pts[:, 1] - p0[1]) - d[1] * (pts[:, 0] - p0[0])) / nrm
        assert resid.max() <= tol, f"unfolded points not colinear (residual {resid.max():.3e})"
    for k in range(1, len(tiles)):
        step = (abs(tiles[k][0] - tiles[k - 1][0]), abs(tiles[k][1] - tiles[k - 1][1]))
        assert step in ((1, 0), (0, 1), (1, 1)), f"bad tile step {tiles[k - 1]} -> {tiles[k]}"
    return (float(p0[0]), float(p0[1])), (float(p1[0]), float(p1[1])), [ReflectionSignature(*t) for t in tiles]


def unfolded_direction(r: BrokenRay) -> float:
    """Direction of the unfolded chord (equals the launch direction)."""
    return float(r.segments[0][2])
