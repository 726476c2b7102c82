"""Deterministic test images on the unit square."""
from __future__ import annotations

import numpy as np

from .field import DEFAULT_MARGIN, FieldError, GridFunction, bump

SUPERSAMPLE = 8


def _coverage(nx: int, inside, ss: int = SUPERSAMPLE) -> np.ndarray:
    """Fraction of each pixel where ``inside(x, y)`` holds (ss x ss subsamples)."""
    u = (np.arange(nx * ss) + 0.5) / (nx * ss)
    X, Y = np.meshgrid(u, u, indexing="ij")
    return inside(X, Y).astype(float).reshape(nx, ss, nx, ss).mean(axis=(1, 3))


def _check_box(lo: float, hi: float, margin: float):
    if lo < margin or hi > 1.0 - margin:
        raise FieldError(f"phantom support [{lo:.4g}, {hi:.4g}] enters the margin band {margin}")


def disk(nx: int, center=(0.5, 0.5), radius: float = 0.15, value: float = 1.0,
         margin: float = DEFAULT_MARGIN) -> GridFunction:
    cx, cy = center
    _check_box(min(cx, cy) - radius, max(cx, cy) + radius, margin)
    v = _coverage(nx, lambda X, Y: (X - cx) ** 2 + (Y - cy) ** 2 < radius ** 2)
    return GridFunction(value * v)


def checker(nx: int, lo: float = DEFAULT_MARGIN, hi: float = 1.0 - DEFAULT_MARGIN,
            n: int = 4, margin: float = DEFAULT_MARGIN) -> GridFunction:
    _check_box(lo, hi, margin)
    w = (hi - lo) / n

    def inside(X, Y):
        box = (X > lo) & (X < hi) & (Y > lo) & (Y < hi)
        par = (np.floor((X - lo) / w) + np.floor((Y - lo) / w)) % 2 == 0
        return box & par
    return GridFunction(_coverage(nx, inside))


def stripes(nx: int, lo: float = DEFAULT_MARGIN, hi: float = 1.0 - DEFAULT_MARGIN,
            n: int = 3, axis: int = 1, margin: float = DEFAULT_MARGIN) -> GridFunction:
    """Smooth window times cos of ``n`` periods along ``axis`` (0: x1, 1: x2)."""
    _check_box(lo, hi, margin)
    c = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)

    def fn(P):
        win = bump((P[:, 0] - c) / r) * bump((P[:, 1] - c) / r)
        return win * np.cos(2 * np.pi * n * (P[:, axis] - lo) / (hi - lo))
    return GridFunction.from_function(fn, nx)


def gaussians(nx: int, seed: int = 0, n: int = 3, lo: float = DEFAULT_MARGIN,
              hi: float = 1.0 - DEFAULT_MARGIN, r_range=(0.05, 0.15),
              margin: float = DEFAULT_MARGIN) -> GridFunction:
    """Sum of ``n`` Gaussian bumps, each windowed to a disk inside [lo, hi]^2.

    The window is the smooth compactly supported bump, so the field is C^inf
    and vanishes outside the box.
    """
    _check_box(lo, hi, margin)
    rng = np.random.default_rng(seed)
    r_lo, r_hi = r_range
    if 2 * r_lo > hi - lo:
        raise FieldError("bump radius does not fit in the support box")
    pts = GridFunction(np.zeros((nx, nx))).center_points()
    out = np.zeros(len(pts))
    for _ in range(n):
        r = rng.uniform(r_lo, min(r_hi, 0.5 * (hi - lo)))
        c = rng.uniform(lo + r, hi - r, size=2)
        a = rng.normal()
        d2 = np.sum((pts - c) ** 2, axis=1)
        out += a * np.exp(-d2 / (2 * (0.4 * r) ** 2)) * bump(np.sqrt(d2) / r)
    return GridFunction(out.reshape(nx, nx))


def ensemble(nx: int, size: int, seed: int = 0, **kw) -> list[GridFunction]:
    """Seeded list of :func:`gaussians` fields, one child seed per member."""
    seeds = np.random.SeedSequence(seed).generate_state(size)
    return [gaussians(nx, seed=int(s), **kw) for s in seeds]


PHANTOMS = {"disk": disk, "checker": checker, "gaussians": gaussians, "stripes": stripes}
