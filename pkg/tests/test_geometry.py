import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brokenray.geometry import (
    AccessSet, GeometryError, Termination, UnitTangent, ball_last_intersection, billiard_map,
    billiard_map_batch, boundary_param, first_exit, point_to_param, reflect_direction,
    trace_broken_ray, trace_from_point, trace_many,
)

FULL = AccessSet.preset("full")
OPPOSITE = AccessSet.preset("opposite")


def test_boundary_param_examples():
    assert boundary_param(0.5) == pytest.approx((0.5, 0.0), abs=1e-15)
    assert boundary_param(1.25) == pytest.approx((1.0, 0.25), abs=1e-15)
    bp = point_to_param((0.0, 0.75))
    assert bp.s == pytest.approx(3.25, abs=1e-15) and bp.edge == 3 and not bp.corner_flag


@given(st.floats(0.0, 4.0, exclude_max=True))
def test_boundary_round_trip(s):
    p = boundary_param(s)
    bp = point_to_param(p)
    assert min(abs(bp.s - s), 4.0 - abs(bp.s - s)) < 1e-12


def test_point_off_boundary_rejected():
    with pytest.raises(GeometryError):
        point_to_param((0.5, 0.5))
    with pytest.raises(GeometryError):
        boundary_param(4.0)


def test_first_exit_examples():
    t, hit = first_exit((0.5, 0.5), 0.0)
    assert t == pytest.approx(0.5, abs=1e-15) and boundary_param(hit.s) == pytest.approx((1, 0.5))
    t, hit = first_exit((0.0, 0.25), math.pi / 4)
    assert t == pytest.approx(0.75 * math.sqrt(2), abs=1e-14)
    assert boundary_param(hit.s) == pytest.approx((0.75, 1.0), abs=1e-14)
    t, hit = first_exit((0.25, 0.25), math.pi / 4)
    assert t == pytest.approx(0.75 * math.sqrt(2), abs=1e-14)
    assert hit.corner_flag and boundary_param(hit.s) == pytest.approx((1.0, 1.0))


def test_first_exit_outward_rejected():
    with pytest.raises(GeometryError):
        first_exit((0.0, 0.5), math.pi)


def test_reflect_direction_examples():
    top = point_to_param((0.5, 1.0))
    right = point_to_param((1.0, 0.5))
    corner = point_to_param((1.0, 1.0))
    assert reflect_direction(math.pi / 2, top) == pytest.approx(1.5 * math.pi)
    assert reflect_direction(math.pi / 4, right) == pytest.approx(0.75 * math.pi)
    assert reflect_direction(math.pi / 4, corner) == pytest.approx(1.25 * math.pi)


@given(st.floats(0.0, 2 * math.pi, exclude_max=True), st.integers(0, 3))
def test_specular_involution(theta, edge):
    hit = point_to_param(boundary_param(edge + 0.5))
    twice = reflect_direction(reflect_direction(theta, hit), hit)
    d = abs(twice - theta) % (2 * math.pi)
    assert min(d, 2 * math.pi - d) < 1e-12


def test_billiard_map_examples():
    v = billiard_map(UnitTangent((0.5, 0.0), math.pi / 2))
    assert v.base == pytest.approx((0.5, 1.0)) and v.theta == pytest.approx(1.5 * math.pi)
    v = billiard_map(UnitTangent((0.0, 0.25), math.pi / 4))
    assert v.base == pytest.approx((0.75, 1.0), abs=1e-14)
    assert v.theta == pytest.approx(2 * math.pi - math.pi / 4)
    w = billiard_map(v)
    assert w.base == pytest.approx((1.0, 0.75), abs=1e-14)
    assert w.theta == pytest.approx(1.25 * math.pi)  # pi - (-pi/4)


def test_billiard_batch_matches_scalar(rng):
    s = rng.uniform(0, 4, 50)
    phi = rng.uniform(-1.5, 1.5, 50)
    s2, phi2, t = billiard_map_batch(s, phi)
    from brokenray.geometry import inward_theta
    for k in range(50):
        v = billiard_map(UnitTangent(boundary_param(s[k]), float(inward_theta(s[k:k + 1], phi[k:k + 1])[0])))
        assert boundary_param(s2[k]) == pytest.approx(v.base, abs=1e-12)


def test_trace_chord():
    r = trace_broken_ray(UnitTangent((0.0, 0.5), 0.0), FULL, 0)
    assert r.regular and r.n_reflections == 0 and r.signature == (1, 0)
    assert r.segments[0][1] == pytest.approx((1.0, 0.5))


def test_trace_two_bounce_opposite():
    r = trace_broken_ray(UnitTangent((0.0, 0.25), math.pi / 4), OPPOSITE, 3)
    assert r.regular and r.n_reflections == 1
    assert r.length == pytest.approx(math.sqrt(2), abs=1e-14)
    assert r.segments[-1][1] == pytest.approx((1.0, 0.75), abs=1e-14)
    assert r.signature == (1, 1)


def test_trace_near_vertical_is_irregular():
    # from (0, 0.25) the first hit lies within eps_corner of (0, 1), which is in dE
    r = trace_broken_ray(UnitTangent((0.0, 0.25), math.pi / 2 - 1e-12), OPPOSITE, 3)
    assert not r.regular and r.termination == Termination.HitBoundaryOfE
    r = trace_broken_ray(UnitTangent((0.0, 0.5), math.pi / 2 - 1e-4), OPPOSITE, 3)
    assert not r.regular and r.termination == Termination.ExceededNmax


def test_trace_rejects_base_outside_E():
    with pytest.raises(GeometryError):
        trace_broken_ray(UnitTangent((0.5, 0.0), math.pi / 2), OPPOSITE, 2)


def test_ball_last_intersection_examples():
    a = 0.5 - math.sqrt(2) / 2
    assert ball_last_intersection((0.5, 0.5), 0.0) == pytest.approx((a, 0.5), abs=1e-14)
    assert ball_last_intersection((0.5, 0.5), math.pi / 2) == pytest.approx((0.5, a), abs=1e-14)
    assert ball_last_intersection((0.9, 0.5), 0.0) == pytest.approx((a, 0.5), abs=1e-14)
    with pytest.raises(GeometryError):
        ball_last_intersection((1.5, 1.5), 0.0)


def _random_batch(rng, n, E, n_max):
    arcs = E.as_array()
    k = rng.integers(len(arcs), size=n)
    s = np.mod(arcs[k, 0] + rng.uniform(size=n) * (arcs[k, 1] - arcs[k, 0]), 4.0)
    phi = rng.uniform(-0.5 * math.pi, 0.5 * math.pi, n)
    from brokenray.geometry import inward_theta
    pts = np.array([boundary_param(v) for v in s])
    return trace_many(pts[:, 0], pts[:, 1], inward_theta(s, phi), E, n_max)


def test_contiguity_and_optics(rng):
    b = _random_batch(rng, 20000, AccessSet(((0.3, 0.8),)), 4)
    gap = 0.0
    for j in range(1, b.segs.shape[1]):
        live = b.nseg > j
        gap = max(gap, float(np.abs(b.segs[live, j, 0:2] - b.segs[live, j - 1, 2:4]).max(initial=0)))
        # specular law: direction flips sign in exactly one component at an edge
        d0 = b.segs[live, j - 1, 4:6]
        d1 = b.segs[live, j, 4:6]
        same = np.isclose(np.abs(d0), np.abs(d1), atol=1e-14)
        assert np.all(same)
    assert gap <= 1e-10


def test_at_most_two_corner_events(rng):
    # aim straight at corners so corner events actually occur
    x = rng.uniform(0.05, 0.95, (4000, 2))
    c = np.array([[0, 0], [1, 0], [1, 1], [0, 1]])[rng.integers(4, size=4000)]
    th = np.arctan2(c[:, 1] - x[:, 1], c[:, 0] - x[:, 0])
    E = AccessSet(((0.4, 0.6),))
    n_corner = 0
    for k in range(400):
        r = trace_from_point(x[k], th[k], E, 6)
        assert len(r.corner_events) <= 2
        n_corner += len(r.corner_events)
    assert n_corner > 0


def test_access_set_validation():
    with pytest.raises(GeometryError):
        AccessSet(((0.0, 1.0), (0.5, 1.5)))
    with pytest.raises(GeometryError):
        AccessSet(((1.0, 1.0),))
    E = AccessSet(((3.5, 4.5),))
    assert E.contains(0.2) and E.contains(3.9) and not E.contains(1.0)
