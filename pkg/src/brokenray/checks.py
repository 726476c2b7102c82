"""Numerical self-check suites shared by the CLI selftest and the test suite."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .field import AttenuationField, BumpAttenuation, GridFunction
from .geometry import AccessSet, billiard_map_batch, boundary_param, inward_theta, trace_many
from .transform import BrokenRayTransform
from .unfolding import extend_field, reflect_point, tile_of, unreflect_point


@dataclass
class CheckResult:
    name: str
    value: float
    threshold: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.threshold)

    def line(self) -> str:
        return f"{'PASS' if self.ok else 'FAIL'} {self.name}: {self.value:.3e} (<= {self.threshold:.1e})"


def random_grid(shape, rng, lo: float = 0.2, hi: float = 0.8) -> GridFunction:
    """Gaussian noise on the pixels of [lo, hi]^2, zero elsewhere."""
    g = GridFunction(np.zeros(shape))
    X, Y = g.centers()
    inside = (X > lo) & (X < hi) & (Y > lo) & (Y < hi)
    return GridFunction(np.where(inside, rng.standard_normal(shape), 0.0))


def adjoint_identity(op: BrokenRayTransform, n_pairs: int = 20, seed: int = 0,
                     threshold: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    fs, gs = [], []
    for _ in range(n_pairs):
        fs.append(random_grid(op.grid_shape, rng))
        gs.append(op.sino.like(np.where(op.mask, rng.standard_normal(op.sino.shape), 0.0)))
    If = op.forward_stack(np.stack([f.values for f in fs]))
    Ig = op.adjoint_stack(np.stack([g.values for g in gs]))
    worst = 0.0
    for f, g, a, b in zip(fs, gs, If, Ig):
        lhs = g.like(a).inner(g)
        rhs = f.inner(GridFunction(b))
        worst = max(worst, abs(lhs - rhs) / (f.norm() * g.norm()))
    return CheckResult("adjoint identity", worst, threshold)


def pair_identity(op: BrokenRayTransform, f: GridFunction, g, threshold: float = 1e-12) -> CheckResult:
    """<I f, g> against <f, I* g> for given data (g is a SinogramGrid)."""
    lhs = op.forward(f).inner(g)
    rhs = f.inner(op.adjoint(g))
    scale = max(f.norm() * g.norm(), 1e-300)
    return CheckResult("adjoint identity (files)", abs(lhs - rhs) / scale, threshold)


def split_exactness(op: BrokenRayTransform, seed: int = 0, threshold: float = 1e-12) -> CheckResult:
    rng = np.random.default_rng(seed)
    f = random_grid(op.grid_shape, rng)
    b, r = op.normal_split(f)
    n = op.normal_direct(f)
    err = np.linalg.norm(b.values + r.values - n.values) / max(np.linalg.norm(n.values), 1e-300)
    return CheckResult("ballistic + reflect = normal", float(err), threshold)


# ---------------------------------------------------------------------------
# unfolding
# ---------------------------------------------------------------------------

UNFOLD_SETS = (
    AccessSet.preset("adjacent"),
    AccessSet.preset("opposite"),
    AccessSet(((0.2, 0.7),)),
    AccessSet(((1.3, 1.6), (3.1, 3.5))),
)


def sample_regular_rays(n: int, n_max: int = 4, seed: int = 0, sets=UNFOLD_SETS):
    """``n`` regular broken rays launched from random points of random access sets."""
    rng = np.random.default_rng(seed)
    out = []
    have = 0
    while have < n:
        E = sets[rng.integers(len(sets))]
        arcs = E.as_array()
        m = 4 * (n - have) + 64
        k = rng.integers(len(arcs), size=m)
        s = np.mod(arcs[k, 0] + rng.uniform(size=m) * (arcs[k, 1] - arcs[k, 0]), 4.0)
        phi = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, size=m)
        pts = np.array([boundary_param(v) for v in s])
        nm = int(rng.integers(0, n_max + 1))
        b = trace_many(pts[:, 0], pts[:, 1], inward_theta(s, phi), E, nm)
        keep = np.flatnonzero(b.regular)[: n - have]
        out.append((b.segs[keep], b.nseg[keep]))
        have += keep.size
    width = max(s.shape[1] for s, _ in out)
    segs = np.concatenate([np.pad(s, ((0, 0), (0, width - s.shape[1]), (0, 0))) for s, _ in out])
    return segs, np.concatenate([c for _, c in out])


def _test_f(p):
    return np.cos(3.0 * p[:, 0] + 1.0) * np.exp(p[:, 1]) + p[:, 0] * p[:, 1]


def unfold_suite(n: int = 100_000, n_max: int = 4, seed: int = 0,
                 sigma: AttenuationField | None = None):
    """Round trip, colinearity and folded-vs-unfolded attenuated integrals over random rays."""
    sigma = sigma or BumpAttenuation((0.5, 0.5), 0.3, 1.0, aniso=0.4, theta0=0.7)
    segs, nseg = sample_regular_rays(n, n_max, seed)
    live = np.arange(segs.shape[1])[None, :] < nseg[:, None]
    tiles = segs[:, :, 7:9].astype(np.int64)
    p0 = segs[:, 0, 0:2]
    th0 = np.arctan2(segs[:, 0, 5], segs[:, 0, 4])
    d0 = np.stack([np.cos(th0), np.sin(th0)], axis=1)
    cum = np.cumsum(np.where(live, segs[:, :, 6], 0.0), axis=1) - np.where(live, segs[:, :, 6], 0.0)

    # colinearity: unfolded segment endpoints lie on the launch line at the right arclength
    a = reflect_point(segs[:, :, 0:2], (tiles[..., 0], tiles[..., 1]))
    b = reflect_point(segs[:, :, 2:4], (tiles[..., 0], tiles[..., 1]))
    ea = a - (p0[:, None, :] + cum[..., None] * d0[:, None, :])
    eb = b - (p0[:, None, :] + (cum + segs[:, :, 6])[..., None] * d0[:, None, :])
    err = np.maximum(np.abs(ea).max(axis=-1), np.abs(eb).max(axis=-1))
    col = float(np.max(np.where(live, err, 0.0)))

    # round trip on segment midpoints
    mid = 0.5 * (segs[:, :, 0:2] + segs[:, :, 2:4])
    w = reflect_point(mid, (tiles[..., 0], tiles[..., 1]))
    l1, l2 = tile_of(w)
    back = unreflect_point(w, (l1, l2))
    rt = float(np.max(np.where(live[..., None], np.abs(back - mid), 0.0)))
    tile_ok = bool(np.all(~live | ((l1 == tiles[..., 0]) & (l2 == tiles[..., 1]))))

    # attenuated integral of a smooth f: folded segments vs the unfolded line, shared nodes
    xg, wg = np.polynomial.legendre.leggauss(12)
    fold_val = np.zeros(len(segs))
    unf_val = np.zeros(len(segs))
    acc_f = np.zeros(len(segs))  # sigma integral over completed segments
    acc_u = np.zeros(len(segs))
    for j in range(segs.shape[1]):
        rows = np.flatnonzero(live[:, j])
        if rows.size == 0:
            continue
        L = segs[rows, j, 6]
        u = segs[rows, j, 4:6]
        thj = np.arctan2(u[:, 1], u[:, 0])

        def folded(tau):
            x = segs[rows, j, None, 0:2] + tau[..., None] * u[:, None, :]
            return x.reshape(-1, 2), np.repeat(thj, tau.shape[1])

        def unfolded(tau):
            w = p0[rows, None, :] + (cum[rows, j, None] + tau)[..., None] * d0[rows, None, :]
            return w.reshape(-1, 2), np.repeat(th0[rows], tau.shape[1])

        def sig_f(tau):
            return sigma(*folded(tau)).reshape(tau.shape)

        def sig_u(tau):
            w, th = unfolded(tau)
            return extend_field(sigma, w, th).reshape(tau.shape)

        t = 0.5 * L[:, None] * (xg[None, :] + 1.0)
        q = 0.5 * L[:, None] * wg[None, :]
        # A(t) on this segment by a nested rule on [0, t_k]
        att_f = np.zeros_like(t)
        att_u = np.zeros_like(t)
        for k in range(t.shape[1]):
            tk = t[:, k:k + 1]
            tau = 0.5 * tk * (xg[None, :] + 1.0)
            qk = 0.5 * tk * wg[None, :]
            att_f[:, k] = np.sum(qk * sig_f(tau), axis=1)
            att_u[:, k] = np.sum(qk * sig_u(tau), axis=1)
        fv = _test_f(folded(t)[0]).reshape(t.shape)
        fu = extend_field(_test_f, unfolded(t)[0]).reshape(t.shape)
        fold_val[rows] += np.sum(q * fv * np.exp(-(acc_f[rows, None] + att_f)), axis=1)
        unf_val[rows] += np.sum(q * fu * np.exp(-(acc_u[rows, None] + att_u)), axis=1)
        acc_f[rows] += np.sum(q * sig_f(t), axis=1)
        acc_u[rows] += np.sum(q * sig_u(t), axis=1)
    fwd = float(np.max(np.abs(fold_val - unf_val)))
    return {
        "roundtrip": CheckResult("fold/unfold round trip", rt if tile_ok else math.inf, 1e-12),
        "colinearity": CheckResult("unfolded colinearity", col, 1e-9),
        "forward": CheckResult("folded vs unfolded integrals", fwd, 1e-8),
    }


# ---------------------------------------------------------------------------
# measure preservation
# ---------------------------------------------------------------------------

def measure_preservation(n: int = 1 << 20, bins: int = 32, seed: int = 0,
                         threshold: float = 0.03) -> CheckResult:
    """Push cos(phi) ds dphi through the billiard map and histogram it.

    Samples are scrambled Sobol points mapped to (s, phi) by the inverse CDF
    of the measure; bins are equal-measure in (s, sin phi), so every bin
    expects ``n / bins**2`` hits. Reports the largest relative deviation.
    """
    u = qmc.Sobol(d=2, scramble=True, seed=seed).random(n)
    s = 4.0 * u[:, 0]
    phi = np.arcsin(2.0 * u[:, 1] - 1.0)
    s2, phi2, _ = billiard_map_batch(s, phi)
    ok = np.isfinite(s2) & np.isfinite(phi2)
    a = np.clip(np.floor(np.mod(s2[ok], 4.0) / 4.0 * bins).astype(int), 0, bins - 1)
    b = np.clip(np.floor(0.5 * (np.sin(phi2[ok]) + 1.0) * bins).astype(int), 0, bins - 1)
    h = np.bincount(a * bins + b, minlength=bins * bins).astype(float)
    expect = n / bins ** 2
    return CheckResult("billiard measure preservation", float(np.max(np.abs(h - expect)) / expect),
                       threshold)
