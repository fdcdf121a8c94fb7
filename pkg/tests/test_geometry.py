"""Tests for polygons, rasterized overlap, splines and homographies."""

import math

import numpy as np
import pytest

from tpsgeom import (
    ConfigError,
    DegenerateShape,
    Homography,
    Polygon,
    SplineCurve,
    grid_inside,
    min_distance_to_segments,
    perspective_from_left_edge,
    polygon_area,
    rasterized_overlap,
    smooth_boundary,
)


def regular_polygon(n, radius=1.0, center=(0.0, 0.0)):
    ang = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(ang),
                            center[1] + radius * np.sin(ang)])


# ---------------------------------------------------------------------------
# Polygon construction and area


def test_polygon_requires_three_vertices():
    with pytest.raises(DegenerateShape):
        Polygon(np.array([[0.0, 0.0], [1.0, 0.0]]))


def test_polygon_rejects_consecutive_duplicates():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    with pytest.raises(DegenerateShape):
        Polygon(pts)


def test_polygon_rejects_wraparound_duplicate():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(DegenerateShape):
        Polygon(pts)


def test_polygon_rejects_near_zero_area():
    # collinear points enclose nothing
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]])
    with pytest.raises(DegenerateShape):
        Polygon(pts)


def test_polygon_rejects_nonfinite():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [np.nan, 1.0]])
    with pytest.raises(DegenerateShape):
        Polygon(pts)


def test_polygon_orientation_and_bounds():
    ccw = Polygon(np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [0.0, 1.0]]))
    assert ccw.orientation == "counterclockwise"
    cw = Polygon(ccw.points[::-1].copy())
    assert cw.orientation == "clockwise"
    assert ccw.bounds() == (0.0, 0.0, 2.0, 1.0)


def test_area_of_many_sided_polygon_close_to_disc():
    # a 64-gon of radius 1 encloses 32*sin(2*pi/64), about 0.16% under pi
    poly = Polygon(regular_polygon(64))
    assert abs(polygon_area(poly) - math.pi) / math.pi < 0.005


def test_area_rigid_motion_invariance():
    rng = np.random.default_rng(3)
    pts = regular_polygon(9, radius=3.0) + rng.normal(0, 0.2, (9, 2))
    base = polygon_area(Polygon(pts))
    th = 1.1
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    moved = pts @ rot.T + np.array([17.0, -4.0])
    assert polygon_area(Polygon(moved)) == pytest.approx(base, rel=1e-12)
    scaled = pts * 2.5
    assert polygon_area(Polygon(scaled)) == pytest.approx(base * 2.5**2, rel=1e-12)


def test_area_is_orientation_independent():
    pts = regular_polygon(7, radius=2.0)
    a1 = polygon_area(Polygon(pts))
    a2 = polygon_area(Polygon(pts[::-1].copy()))
    assert a1 == pytest.approx(a2, rel=1e-15)


# ---------------------------------------------------------------------------
# Point-in-polygon and rasterized overlap


def test_grid_inside_unit_square():
    poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    xs = np.array([0.5, 1.5, -0.5, 0.25])
    ys = np.array([0.5, 0.25])
    mask = grid_inside(poly, xs, ys)
    assert mask.shape == (2, 4)
    assert mask.dtype == bool
    assert mask[0, 0] and mask[1, 3]
    assert not mask[0, 1] and not mask[0, 2]


def test_grid_inside_concave():
    # L shape: the notch corner region is outside
    poly = np.array([[0, 0], [3, 0], [3, 1], [1, 1], [1, 3], [0, 3]], dtype=float)
    mask = grid_inside(poly, np.array([0.5, 2.0]), np.array([0.5, 2.0]))
    assert mask[0, 0] and mask[0, 1] and mask[1, 0]
    assert not mask[1, 1]


def test_grid_inside_on_edge_is_deterministic():
    poly = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    a = grid_inside(poly, np.array([0.0, 1.0]), np.array([0.5]))
    b = grid_inside(poly, np.array([0.0, 1.0]), np.array([0.5]))
    assert np.array_equal(a, b)
    # half-open rule claims exactly one of the two vertical edges
    assert a[0, 0] != a[0, 1]


def test_overlap_identical_convex_shapes():
    for r in (128, 512):
        poly = Polygon(regular_polygon(16, radius=5.0, center=(2.0, 3.0)))
        area_a, area_b, inter, union = rasterized_overlap(poly, poly, resolution=r)
        assert area_a == area_b
        iou = inter / union
        assert iou >= 1.0 - 4.0 / r
        assert iou <= 1.0 + 1e-12


def test_overlap_shifted_unit_squares():
    a = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    b = Polygon(np.array([[0.5, 0.0], [1.5, 0.0], [1.5, 1.0], [0.5, 1.0]]))
    area_a, area_b, inter, union = rasterized_overlap(a, b)
    assert inter / union == pytest.approx(1.0 / 3.0, abs=0.02)
    # union identity holds exactly on the shared grid
    assert union == pytest.approx(area_a + area_b - inter, abs=0.0)


def test_overlap_disjoint_shapes():
    a = Polygon(np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]))
    b = Polygon(np.array([[5.0, 5.0], [6.0, 5.0], [6.0, 6.0], [5.0, 6.0]]))
    _, _, inter, union = rasterized_overlap(a, b)
    assert inter == 0.0
    assert union > 0.0


def test_overlap_rejects_tiny_resolution():
    a = Polygon(regular_polygon(5))
    with pytest.raises(ConfigError):
        rasterized_overlap(a, a, resolution=4)


# ---------------------------------------------------------------------------
# Distance to segment chains


def brute_distance(query, boundary, closed):
    pts = np.asarray(boundary, dtype=float)
    if closed:
        segs = list(zip(pts, np.roll(pts, -1, axis=0)))
    else:
        segs = list(zip(pts[:-1], pts[1:]))
    out = []
    for q in np.asarray(query, dtype=float):
        best = np.inf
        for a, b in segs:
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0.0 else float(np.clip((q - a) @ ab / denom, 0.0, 1.0))
            best = min(best, float(np.hypot(*(q - (a + t * ab)))))
        out.append(best)
    return np.array(out)


def test_min_distance_matches_bruteforce():
    rng = np.random.default_rng(11)
    boundary = rng.uniform(-3, 3, (9, 2))
    query = rng.uniform(-4, 4, (40, 2))
    for closed in (True, False):
        got = min_distance_to_segments(query, boundary, closed=closed)
        want = brute_distance(query, boundary, closed)
        assert np.max(np.abs(got - want)) < 1e-12


def test_min_distance_chunking_is_equivalent():
    rng = np.random.default_rng(12)
    boundary = rng.uniform(0, 10, (6, 2))
    query = rng.uniform(0, 10, (25, 2))
    a = min_distance_to_segments(query, boundary, chunk=3)
    b = min_distance_to_segments(query, boundary, chunk=8192)
    assert np.array_equal(a, b)


def test_min_distance_on_boundary_is_zero():
    boundary = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 2.0], [0.0, 2.0]])
    q = np.array([[2.0, 0.0], [4.0, 1.0], [0.0, 0.0]])
    d = min_distance_to_segments(q, boundary, closed=True)
    assert np.all(d < 1e-15)


# ---------------------------------------------------------------------------
# Spline resampling and boundary smoothing


def test_spline_preserves_endpoints_exactly():
    rng = np.random.default_rng(5)
    pts = np.cumsum(rng.uniform(0.2, 1.0, (8, 2)), axis=0)
    out = SplineCurve(pts).resample(13)
    assert np.array_equal(out[0], pts[0])
    assert np.array_equal(out[-1], pts[-1])


def test_spline_arc_length_spacing_is_uniform():
    pts = np.column_stack([np.linspace(0, 4, 9), np.zeros(9)])
    out = SplineCurve(pts).resample(5)
    gaps = np.linalg.norm(np.diff(out, axis=0), axis=1)
    assert np.ptp(gaps) < 1e-6


def test_spline_tracks_sine_between_knots():
    # natural end conditions are exact for a sine over [0, pi],
    # so seven knots already pin the curve down to well under 1% of amplitude
    x = np.linspace(0.0, np.pi, 7)
    out = SplineCurve(np.column_stack([x, np.sin(x)])).resample(50)
    assert np.max(np.abs(out[:, 1] - np.sin(out[:, 0]))) < 0.01


def test_spline_rejects_short_output():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.0]])
    with pytest.raises(ConfigError):
        SplineCurve(pts).resample(1)


def sine_band(n_side=7, amp=1.0, offset=3.0):
    x = np.linspace(0.0, np.pi, n_side)
    top = np.column_stack([x, amp * np.sin(x)])
    bottom = top + np.array([0.0, offset])
    return top, bottom


def test_smooth_boundary_output_layout():
    top, bottom = sine_band()
    poly = Polygon(np.vstack([top, bottom[::-1]]))
    out = smooth_boundary(poly, 16, sides=(top, bottom))
    assert out.points.shape == (32, 2)
    # first half runs left to right along the top, second half back along the bottom
    assert np.array_equal(out.points[0], top[0])
    assert np.array_equal(out.points[15], top[-1])
    assert np.array_equal(out.points[16], bottom[-1])
    assert np.array_equal(out.points[31], bottom[0])


def test_smooth_boundary_follows_the_sides():
    top, bottom = sine_band()
    poly = Polygon(np.vstack([top, bottom[::-1]]))
    out = smooth_boundary(poly, 25, sides=(top, bottom))
    smoothed_top = out.points[:25]
    assert np.max(np.abs(smoothed_top[:, 1] - np.sin(smoothed_top[:, 0]))) < 0.01


def test_smooth_boundary_is_nearly_idempotent():
    # re-knotting error falls off like sps**-4; at 32 per side it is
    # comfortably under 1e-6 of the side length
    top, bottom = sine_band()
    poly = Polygon(np.vstack([top, bottom[::-1]]))
    once = smooth_boundary(poly, 32, sides=(top, bottom))
    t2 = once.points[:32]
    b2 = once.points[32:][::-1]
    twice = smooth_boundary(once, 32, sides=(t2, b2))
    side_len = np.linalg.norm(top[-1] - top[0])
    assert np.max(np.abs(twice.points - once.points)) < 1e-6 * side_len


def test_smooth_boundary_default_split():
    # without explicit sides an even-count ring splits down the middle
    top, bottom = sine_band(n_side=6)
    poly = Polygon(np.vstack([top, bottom[::-1]]))
    out = smooth_boundary(poly, 10)
    assert out.points.shape == (20, 2)
    assert np.array_equal(out.points[0], top[0])


def test_smooth_boundary_rejects_bad_inputs():
    top, bottom = sine_band()
    poly = Polygon(np.vstack([top, bottom[::-1]]))
    with pytest.raises(ConfigError):
        smooth_boundary(poly, 3, sides=(top, bottom))
    from tpsgeom import MalformedAnnotation
    with pytest.raises(MalformedAnnotation):
        smooth_boundary(poly, 8, sides=(top[:1], bottom))


# ---------------------------------------------------------------------------
# Homographies


def test_homography_normalizes_and_inverts():
    rng = np.random.default_rng(21)
    m = np.eye(3) + 0.05 * rng.normal(size=(3, 3))
    h = Homography(2.0 * m / m[2, 2])
    assert h.h[2, 2] == pytest.approx(1.0)
    pts = rng.uniform(-2, 2, (30, 2))
    back = h.inverse().apply(h.apply(pts))
    assert np.max(np.abs(back - pts)) < 1e-9


def test_homography_rejects_singular_matrix():
    m = np.ones((3, 3))
    with pytest.raises(ConfigError):
        Homography(m)


def test_homography_rejects_bad_shape():
    with pytest.raises(ConfigError):
        Homography(np.eye(2))


def test_perspective_zero_angle_is_identity():
    h = perspective_from_left_edge(0.0, 1024, 768)
    pts = np.array([[0.0, 0.0], [1024.0, 768.0], [512.0, 100.0]])
    assert np.max(np.abs(h.apply(pts) - pts)) < 1e-9


def test_perspective_fixes_the_left_edge():
    h = perspective_from_left_edge(45.0, 1024, 768)
    left = np.column_stack([np.zeros(5), np.linspace(0, 768, 5)])
    out = h.apply(left)
    assert np.max(np.abs(out[:, 0])) < 1e-9


def test_perspective_foreshortens_with_angle():
    # a square near the right edge loses apparent area as the tilt grows
    sq = np.array([[700.0, 300.0], [900.0, 300.0], [900.0, 500.0], [700.0, 500.0]])
    areas = []
    for ang in (0.0, 45.0, 70.0):
        h = perspective_from_left_edge(ang, 1024, 768)
        areas.append(polygon_area(Polygon(h.apply(sq))))
    assert areas[2] < areas[1] < areas[0]


def test_perspective_rejects_out_of_range_angle():
    with pytest.raises(ConfigError):
        perspective_from_left_edge(90.0, 1024, 768)
    with pytest.raises(ConfigError):
        perspective_from_left_edge(-5.0, 1024, 768)
