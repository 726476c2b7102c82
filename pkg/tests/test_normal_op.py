import math

import numpy as np
import pytest

from brokenray.checks import adjoint_identity, random_grid, split_exactness
from brokenray.cutoff import Cutoff, _shrunk, classify_beams
from brokenray.field import BumpAttenuation, GridFunction, SupportRegion
from brokenray.geometry import AccessSet
from brokenray.normal_op import (
    KernelDomainError, backproject_analytic, backproject_discrete, normal_apply, normal_split,
    principal_symbol, reflect_kernel, reflect_kernel_traced, substitution_jacobian,
    substitution_point, trace_through, visible, visible_set_map,
)
from brokenray.transform import BrokenRayTransform, SinogramGrid
from brokenray.unfolding import reflect_point

ADJ = AccessSet.preset("adjacent")
OPP = AccessSet.preset("opposite")
FULL = AccessSet.preset("full")
SIGMA = BumpAttenuation((0.5, 0.5), 0.28, 1.0, aniso=0.2, theta0=1.0)


@pytest.fixture(scope="module")
def adj_beams():
    return classify_beams(ADJ, 2, 256)


@pytest.fixture(scope="module")
def op(adj_beams):
    g = SinogramGrid(ADJ, 2, 48, 48)
    return BrokenRayTransform(g, 32, sigma=SIGMA, alpha=adj_beams.on_grid(g))


def test_zero_data(op):
    assert np.all(backproject_discrete(op, op.sino.like()).values == 0.0)
    assert np.all(normal_apply(op, GridFunction(np.zeros((32, 32)))).values == 0.0)
    out = backproject_analytic(lambda s, p: np.zeros_like(s), ADJ, 2, 8, SIGMA, n_angles=64)
    assert np.all(out.values == 0.0)


def test_adjoint_identity(op):
    assert adjoint_identity(op, n_pairs=5, seed=1).ok


def test_self_adjoint_and_psd(op):
    rng = np.random.default_rng(2)
    for _ in range(3):
        f, g = random_grid(op.grid_shape, rng), random_grid(op.grid_shape, rng)
        nf, ng = normal_apply(op, f), normal_apply(op, g)
        scale = f.norm() * g.norm() * max(np.abs(nf.values).max(), 1e-300) / max(f.norm(), 1e-300)
        assert abs(nf.inner(g) - f.inner(ng)) <= 1e-12 * scale
        assert nf.inner(f) >= 0.0


def test_split_exact(op):
    assert split_exactness(op, seed=3).ok


def test_no_reflections_no_cross_terms():
    op0 = BrokenRayTransform(SinogramGrid(FULL, 0, 24, 24), 24, sigma=SIGMA)
    _, r = normal_split(op0, random_grid((24, 24), np.random.default_rng(4)))
    assert np.all(r.values == 0.0)
    x = np.array([[0.3, 0.4]])
    assert reflect_kernel_traced(x, np.array([[0.6, 0.7]]), None, FULL, 0)[0] == 0.0


def _linf_to_segment(c, seg):
    x0, y0, _, _, ux, uy, L = seg[:7]
    ts = [0.0, L]
    if ux != 0:
        ts.append((c[0] - x0) / ux)
    if uy != 0:
        ts.append((c[1] - y0) / uy)
    for sgn in (1.0, -1.0):
        den = ux - sgn * uy
        if den != 0:
            ts.append(((c[0] - x0) - sgn * (c[1] - y0)) / den)
    ts = np.clip(ts, 0.0, L)
    return min(max(abs(x0 + t * ux - c[0]), abs(y0 + t * uy - c[1])) for t in ts)


def test_single_cell_backprojection_support():
    nx = 16
    op = BrokenRayTransform(SinogramGrid(ADJ, 2, 16, 16), nx, sigma=SIGMA)
    rows = np.flatnonzero(op.mask.ravel() & (op.rays.nseg >= 2))
    r = rows[len(rows) // 2]
    g = np.zeros(op.sino.shape)
    g.ravel()[r] = 1.0
    out = backproject_discrete(op, op.sino.like(g)).values
    X, Y = GridFunction(np.zeros((nx, nx))).centers()
    h = 1.0 / nx
    for i in range(nx):
        for j in range(nx):
            c = (X[i, j], Y[i, j])
            d = min(_linf_to_segment(c, op.rays.segs[r, k]) for k in range(op.rays.nseg[r]))
            if abs(d - h) < 1e-9:
                continue
            assert (out[i, j] != 0.0) == (d < h)


def test_analytic_single_beam_tube():
    # one narrowed left-to-right beam: the output lives where some sampled
    # direction through x lies on one of its lines
    cut = classify_beams(OPP, 1, 128)
    beam = next(b for b in cut.beams if b.tiles == ((0, 0),) and b.terminal == 1)
    beam = _shrunk(beam, 0.15)
    one = Cutoff([beam], 1, OPP)
    n_ang, nx = 180, 12
    out = backproject_analytic(lambda s, p: np.ones_like(s), OPP, 1, nx, None, one, n_angles=n_ang)
    pts = GridFunction(np.zeros((nx, nx))).center_points()
    th = (np.arange(n_ang) + 0.5) * 2 * math.pi / n_ang
    P = np.repeat(pts, n_ang, axis=0)
    T = np.tile(th, len(pts))
    tube = (beam.value_xy(P, T) > 0).reshape(len(pts), n_ang).any(axis=1)
    assert np.array_equal(out.values.ravel() > 0, tube)
    assert tube.any() and not tube.all()


def _opposite_one_reflection_kernel(x, y):
    """sum over mirror tiles (0, +-1) of 2 / |R y - x| when the unfolded line runs
    from the left to the right edge inside the two tiles (both orientations)."""
    out = np.zeros(len(x))
    for l2 in (-1, 1):
        yt = reflect_point(y, (0, l2))
        d = yt - x
        slope = d[:, 1] / d[:, 0]
        y_left = x[:, 1] - slope * x[:, 0]
        y_right = y_left + slope
        lo, hi = min(0, l2), max(0, l2) + 1
        ok = (y_left > lo) & (y_left < hi) & (y_right > lo) & (y_right < hi)
        out += np.where(ok, 2.0 / np.hypot(d[:, 0], d[:, 1]), 0.0)
    return out


def test_kernel_one_reflection_formula():
    rng = np.random.default_rng(5)
    x = 0.2 + 0.6 * rng.random((300, 2))
    y = 0.2 + 0.6 * rng.random((300, 2))
    got = reflect_kernel_traced(x, y, None, OPP, 1)
    want = _opposite_one_reflection_kernel(x, y)
    assert np.abs(got - want).max() <= 1e-12 * want.max()
    assert np.any(want == 0) and np.any(want > 0)


def test_kernel_beams_vs_traced(adj_beams):
    rng = np.random.default_rng(6)
    x = 0.2 + 0.6 * rng.random((200, 2))
    y = 0.2 + 0.6 * rng.random((200, 2))
    a = reflect_kernel(x, y, SIGMA, adj_beams)
    b = reflect_kernel_traced(x, y, SIGMA, ADJ, 2, alpha=adj_beams)
    assert np.abs(a - b).max() <= 1e-6 * max(b.max(), 1e-300)


def test_kernel_bounded_and_finite_on_diagonal(adj_beams):
    rng = np.random.default_rng(7)
    x = 0.2 + 0.6 * rng.random((300, 2))
    y = np.vstack([0.2 + 0.6 * rng.random((200, 2)), x[:100]])
    k = reflect_kernel(x, y, None, adj_beams)
    terms = sum(len(b.tiles) * (len(b.tiles) - 1) for b in adj_beams.beams)
    assert np.all(np.isfinite(k)) and np.all(k >= 0)
    assert k.max() <= terms / 0.2
    # y = x is no singularity: mirrored copies stay at least 2 * 0.2 away
    assert np.all(k[200:] > 0)


def test_kernel_domain_error(adj_beams):
    with pytest.raises(KernelDomainError):
        reflect_kernel(np.array([[0.1, 0.5]]), np.array([[0.5, 0.5]]), None, adj_beams)


def test_substitution_jacobian():
    rng = np.random.default_rng(8)
    for _ in range(100):
        x = 0.2 + 0.6 * rng.random(2)
        th = rng.uniform(0, 2 * math.pi)
        t = rng.uniform(0.1, 3.0)
        jac = substitution_jacobian(x, th, t)
        assert jac == pytest.approx(t, rel=1e-6)
        y = substitution_point(x, th, t)[0]
        assert np.all((y >= 0) & (y <= 1))


def test_principal_symbol_free_space():
    rng = np.random.default_rng(9)
    x = 0.05 + 0.9 * rng.random((50, 2))
    a0, norm = principal_symbol(x, rng.uniform(0, 2 * math.pi, 50), FULL, 0)
    assert np.allclose(a0, 4 * math.pi, rtol=0, atol=1e-12)
    a0, norm = principal_symbol(x, 0.3, FULL, 0, xi_norm=2.0)
    assert np.allclose(norm, 2 * math.pi)


def test_principal_symbol_zero_cutoff():
    x = np.array([[0.4, 0.5]])
    assert principal_symbol(x, 0.2, ADJ, 2, SIGMA, Cutoff([], 2, ADJ))[0][0] == 0.0


def test_principal_symbol_matches_visibility(adj_beams):
    rng = np.random.default_rng(10)
    x = 0.2 + 0.6 * rng.random((400, 2))
    xi = rng.uniform(0, 2 * math.pi, 400)
    a0, _ = principal_symbol(x, xi, OPP, 2)
    vis = visible(x, xi + 0.5 * math.pi, OPP, 2)
    assert np.array_equal(a0 > 0, vis)
    # with beam cutoffs the symbol is positive only on visible covectors
    a1, _ = principal_symbol(x, xi, ADJ, 2, SIGMA, adj_beams)
    assert np.all(visible(x[a1 > 0], xi[a1 > 0] + 0.5 * math.pi, ADJ, 2))


def test_ellipticity_proxy():
    # K is inside the visible set of the adjacent preset with two reflections
    rng = np.random.default_rng(11)
    x = 0.2 + 0.6 * rng.random((2000, 2))
    a0, _ = principal_symbol(x, rng.uniform(0, 2 * math.pi, 2000), ADJ, 2, SIGMA)
    assert a0.min() > 0.1


def test_weights_along_through_rays():
    x = np.array([[0.5, 0.5]])
    tr = trace_through(x, 0.3, ADJ, 2, SIGMA)
    assert tr.regular[0] and 0 < tr.weight[0] < 1
    assert trace_through(x, 0.3, ADJ, 2).weight[0] == 1.0


def test_visible_maps():
    assert np.all(visible_set_map(FULL, 0, 16, 90).values == 1.0)
    assert np.all(visible_set_map(OPP, 3, 16, 90).values == 0.0)
    m = visible_set_map(ADJ, 2, 20, 120)
    K = SupportRegion()
    X, Y = m.centers()
    inside = (X >= K.lo) & (X <= K.hi) & (Y >= K.lo) & (Y <= K.hi)
    assert np.all(m.values[inside] == 1.0)
