import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tentfield.geometry import (
    BASIS, PROJ_NORM, CurveError, GeometryError, PlaneGrid, SingularCurve, Tent, apollonius_ball,
    apollonius_inclusion_hypothesis, axis_vector, cone_membership, cone_violation, coordinate,
    derive_constants, in_apollonius_ball, line_curve, load_curve, project_to_plane, random_curve,
    tent_region_membership, to_ambient, to_plane_coords, whitney_membership,
)

finite = st.floats(-50, 50, allow_nan=False)
thetas = st.floats(0.0, math.pi / 6, exclude_max=True)


def test_basis_orthonormal_and_zero_sum():
    assert np.allclose(BASIS @ BASIS.T, np.eye(2), atol=1e-15)
    assert np.allclose(BASIS.sum(axis=1), 0.0, atol=1e-15)


@given(st.lists(finite, min_size=2, max_size=2))
def test_plane_ambient_roundtrip(y):
    y = np.array(y)
    xi = to_ambient(y)
    assert abs(xi.sum()) < 1e-12
    assert np.allclose(to_plane_coords(xi), y, atol=1e-12)
    assert math.isclose(np.linalg.norm(xi), np.linalg.norm(y), rel_tol=1e-12, abs_tol=1e-12)


@given(st.lists(finite, min_size=3, max_size=3))
def test_projection_is_idempotent(v):
    p = project_to_plane(np.array(v))
    assert np.allclose(project_to_plane(p), p, atol=1e-12)
    assert abs(p.sum()) < 1e-10


def test_axis_vectors_have_projected_length():
    for j in (1, 2, 3):
        assert math.isclose(np.linalg.norm(axis_vector(j)), PROJ_NORM, rel_tol=1e-14)
    with pytest.raises(GeometryError):
        axis_vector(4)


def test_constants_at_zero_closed_forms():
    k = derive_constants(0.0)
    t1 = math.pi / 18
    assert math.isclose(k.delta0, math.sqrt(6) / 6, rel_tol=1e-14)
    assert math.isclose(k.delta1, math.sin(t1), rel_tol=1e-14)
    assert math.isclose(k.delta2, math.sqrt(6) / 3 * math.cos(7 * math.pi / 18), rel_tol=1e-14)
    assert math.isclose(k.rho, (k.delta2 - k.delta1) / (1 + k.delta1), rel_tol=1e-14)
    assert math.isclose(k.eps, k.delta1 * k.rho ** 2 / 2, rel_tol=1e-14)


def test_constants_reject_out_of_range():
    for bad in (-0.01, math.pi / 6, 1.0):
        with pytest.raises(GeometryError):
            derive_constants(bad)


@settings(max_examples=60)
@given(thetas)
def test_constant_invariants_hold(theta0):
    k = derive_constants(theta0)
    assert all(k.invariants().values())
    assert 0 < k.eps < k.rho < k.delta1 < k.delta2
    assert k.M >= 1 and k.c >= 12


def test_constants_shrink_with_aperture():
    a, b = derive_constants(0.0), derive_constants(0.4)
    assert b.delta0 < a.delta0 and b.delta1 < a.delta1 and b.eps < a.eps


def test_plane_grid_cells():
    g = PlaneGrid.uniform((1.0, -1.0), (2.0, 1.0), (4, 2))
    assert g.shape == (4, 2) and g.size == 8
    assert math.isclose(g.areas.sum(), 8.0)
    assert np.allclose(g.points.mean(axis=0), (1.0, -1.0))
    r = g.refine(3)
    assert r.shape == (12, 6) and math.isclose(r.areas.sum(), 8.0)
    with pytest.raises(GeometryError):
        PlaneGrid.from_edges([0, 1, 1], [0, 1])


def test_cone_violation_names_pair():
    bad = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    pair = cone_violation(bad, 3, 0.1)
    assert pair == (0, 2)
    with pytest.raises(CurveError) as err:
        SingularCurve(bad, 3, 0.1, basis="uv")
    assert err.value.pair == (0, 2)
    assert "0 and 2" in str(err.value)


def test_load_curve_error_names_pair(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"cone_index": 3, "theta0": 0.1, "basis": "uv",
                             "points": [[0, 0], [0, 1], [1, 1]]}))
    with pytest.raises(CurveError, match="0 and 2"):
        load_curve(p)


def test_curve_roundtrip_and_off_plane_sample(tmp_path):
    c = random_curve(np.random.default_rng(3), 2, 0.2, n=7)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(c.to_json()))
    back = load_curve(p)
    assert np.array_equal(back.samples, c.samples) and back.j == 2
    with pytest.raises(CurveError, match="sample 1"):
        SingularCurve([[1, -1, 0], [1, 1, 1]], 3, 0.1)


def _brute_distance(curve, y, per_segment=4001):
    # dense sampling of each segment, accurate to half the sample gap
    best = np.inf
    for a, b in zip(curve.samples[:-1], curve.samples[1:]):
        t = np.linspace(0, 1, per_segment)[:, None]
        best = min(best, float(np.linalg.norm(a + t * (b - a) - y, axis=1).min()))
    return best


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(finite, min_size=2, max_size=2))
def test_distance_matches_dense_sampling(seed, y):
    curve = random_curve(np.random.default_rng(seed), 1 + seed % 3, 0.3, n=6, step=3.0)
    y = np.array(y)
    d, near = curve.distance(y)
    gap = max(np.linalg.norm(np.diff(curve.samples, axis=0), axis=1)) / 4000
    assert d <= _brute_distance(curve, y) + 1e-12
    assert d >= _brute_distance(curve, y) - gap
    assert math.isclose(np.linalg.norm(near - y), d, rel_tol=1e-9, abs_tol=1e-12)


def test_distance_tie_breaks_to_smaller_coordinate():
    # a point equidistant from both ends of a single-point-mode curve
    c = SingularCurve([[0.0, -1.0], [0.0, 1.0]], 3, 0.1, mode="points", basis="uv")
    d, near = c.distance(np.array([5.0, 0.0]))
    assert math.isclose(d, math.hypot(5, 1))
    assert coordinate(near, 3) == min(coordinate(c.samples, 3))


def test_line_curve_along_axis():
    c = line_curve(3, 0.1, (0.5, 0.0), half_length=4.0, n=5)
    direction = np.diff(c.samples, axis=0)
    assert np.allclose(direction[:, 0], 0.0)
    d, _ = c.distance(np.array([[2.5, 1.0], [-1.5, -2.0]]))
    assert np.allclose(d, [2.0, 2.0])


def test_strip_endpoints_clip_to_curve():
    c = line_curve(3, 0.1, half_length=4.0, n=3)
    lo, hi = c.coords[0], c.coords[-1]
    a, b = c.strip_endpoints(lo - 10, lo + 1)
    assert math.isclose(coordinate(a, 3), lo) and math.isclose(coordinate(b, 3), lo + 1)
    assert c.strip_endpoints(hi + 1, hi + 2) is None


@settings(max_examples=80)
@given(st.lists(finite, min_size=2, max_size=2), st.lists(finite, min_size=2, max_size=2),
       st.floats(0.05, 0.95))
def test_apollonius_ball_boundary(x0, x1, r):
    x0, x1 = np.array(x0), np.array(x1)
    if np.linalg.norm(x0 - x1) < 1e-3:
        return
    c, rad = apollonius_ball(x0, x1, r)
    for ang in np.linspace(0, 2 * np.pi, 7):
        y = c + rad * np.array([math.cos(ang), math.sin(ang)])
        lhs, rhs = np.linalg.norm(y - x0), r * np.linalg.norm(y - x1)
        assert math.isclose(lhs, rhs, rel_tol=1e-8, abs_tol=1e-8)
    assert in_apollonius_ball(c, x0, x1, r) or rad == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_apollonius_inclusion(seed):
    rng = np.random.default_rng(seed)
    x0, x1 = rng.normal(size=2), rng.normal(size=2)
    x2 = x1 + rng.uniform(0.1, 3) * (x1 - x0) / np.linalg.norm(x1 - x0) + 0.2 * rng.normal(size=2)
    r = rng.uniform(0.05, 0.95)
    if not apollonius_inclusion_hypothesis(x0, x1, x2, r):
        return
    y = x0 + rng.normal(size=(2000, 2)) * 4
    premise = r * np.linalg.norm(y - x2, axis=1) <= np.linalg.norm(y - x0, axis=1)
    concl = r * np.linalg.norm(y - x1, axis=1) <= np.linalg.norm(y - x0, axis=1) + 1e-12
    assert np.all(concl[premise])


def test_apollonius_rejects_bad_ratio():
    with pytest.raises(GeometryError):
        apollonius_ball([0, 0], [1, 0], 1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_cone_lies_in_whitney_region(seed, j):
    rng = np.random.default_rng(seed)
    k = derive_constants(0.1)
    curve = random_curve(rng, 3, 0.1, n=8)
    g = curve.random_points(1, rng)[0]
    beta = g + np.exp(rng.uniform(-5, 2, (500, 1))) * rng.normal(size=(500, 2))
    inside = cone_membership(beta, g, j, k)
    if not inside.any():
        return
    assert np.all(whitney_membership(beta[inside], g, 0.0, curve, k, tol=1e-9))


def test_tent_geometry():
    T = Tent(2.0, 4.0, (0.0, 0.0))
    assert (T.lo, T.hi, T.scale) == (0.0, 4.0, 0.25)
    assert list(T.contains_time([-0.1, 0.0, 4.0, 4.1])) == [False, True, True, False]
    with pytest.raises(GeometryError):
        Tent(0.0, 0.0, (0.0, 0.0))


def test_tent_region_membership_matches_definition():
    k = derive_constants(0.1)
    curve = line_curve(3, 0.1, half_length=50, n=3)
    T = Tent(0.0, 2.0, (0.0, 0.0))
    rng = np.random.default_rng(0)
    beta = rng.uniform(-5, 5, (400, 2))
    a = rng.uniform(-2, 2, 400)
    got = tent_region_membership(a, beta, T, curve, k)
    d = curve.distance(beta)[0]
    r = np.linalg.norm(beta, axis=1)
    want = (np.abs(a) <= 1.0) & (r >= 0.5) & (k.delta1 * r <= d)
    assert np.array_equal(got, want)
