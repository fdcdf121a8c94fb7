"""Tests for annotation parsing, side splitting and synthetic generation."""

import base64
import io
import json
import re

import numpy as np
import pytest

from tpsgeom import (
    ConfigError,
    DegenerateShape,
    EmptyCorpus,
    IoError,
    MalformedAnnotation,
    Polygon,
    SyntheticSpec,
    TextInstance,
    generate_synthetic,
    make_correspondences,
    make_synthetic_corpus,
    parse_annotations,
    quantize_mask,
    read_pgm,
    render_svg,
    split_sides,
    write_annotations,
    write_pgm,
)


def rect_instance(ident="r0", w=10.0, h=2.0, source="generic", transcript=None):
    pts = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
    return TextInstance(id=ident, polygon=Polygon(pts), transcript=transcript, source=source)


def band_instance(n_per_side=7, source="generic"):
    x = np.linspace(0.0, 40.0, n_per_side)
    top = np.column_stack([x, 3.0 * np.sin(x / 8.0)])
    bottom = top + [0.0, 9.0]
    pts = np.vstack([top, bottom[::-1]])
    return TextInstance(id="band", polygon=Polygon(pts), source=source), top, bottom


# ---------------------------------------------------------------------------
# Instances and JSON round trips


def test_instance_rejects_unknown_source():
    with pytest.raises(MalformedAnnotation):
        rect_instance(source="icdar")


def test_ctw_instance_needs_fourteen_points():
    with pytest.raises(MalformedAnnotation):
        rect_instance(source="ctw1500")


def test_json_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(1)
    insts = []
    for i in range(3):
        pts = np.cumsum(rng.uniform(0.5, 2.0, (6, 2)), axis=0) * [10, 1]
        tr = ["hello", None, "voilà café"][i]
        insts.append(TextInstance(id=f"a{i}", polygon=Polygon(pts), transcript=tr))
    path = tmp_path / "out.json"
    write_annotations(insts, path)
    back = parse_annotations(path)
    assert back.warnings == []
    assert len(back.instances) == 3
    for a, b in zip(insts, back.instances):
        assert b.id == a.id
        assert b.transcript == a.transcript
        assert np.array_equal(b.polygon.points, a.polygon.points)


def test_parse_skips_bad_records_with_warnings(tmp_path):
    good = {"id": "ok", "points": [[0, 0], [5, 0], [5, 2], [0, 2]]}
    dup = {"id": "dup", "points": [[0, 0], [1, 0], [1, 0], [0, 1]]}
    short = {"id": "short", "points": [[0, 0], [1, 1]]}
    path = tmp_path / "mixed.json"
    path.write_text(json.dumps({"instances": [good, dup, short]}))
    res = parse_annotations(path)
    assert [i.id for i in res.instances] == ["ok"]
    assert len(res.warnings) == 2
    assert any("dup" in w for w in res.warnings)


def test_parse_raises_when_nothing_survives(tmp_path):
    path = tmp_path / "allbad.json"
    path.write_text(json.dumps({"instances": [{"id": "x", "points": [[0, 0]]}]}))
    with pytest.raises(EmptyCorpus):
        parse_annotations(path)


def test_parse_missing_file():
    with pytest.raises(IoError):
        parse_annotations("/nonexistent/nowhere.json")


def test_parse_rejects_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(MalformedAnnotation):
        parse_annotations(path)


def test_parse_rejects_unknown_format(tmp_path):
    path = tmp_path / "x.json"
    path.write_text("{}")
    with pytest.raises(ConfigError):
        parse_annotations(path, format="xml")


def test_parse_ctw_lines(tmp_path):
    xs = list(range(0, 70, 10)) + list(range(60, -10, -10))
    ys = [0, 1, 2, 2, 1, 0, 0] + [8] * 7
    flat = ",".join(str(v) for pair in zip(xs, ys) for v in pair)
    lines = [
        flat + "####wavy text",
        "",
        flat,
        "1,2,3",
    ]
    path = tmp_path / "img_17.txt"
    path.write_text("\n".join(lines))
    res = parse_annotations(path, format="ctw1500")
    assert len(res.instances) == 2
    assert len(res.warnings) == 1
    first = res.instances[0]
    # ids carry the zero-based line index so they stay stable under edits above
    assert first.id == "img_17_0000"
    assert first.transcript == "wavy text"
    assert first.source == "ctw1500"
    assert len(first.polygon) == 14
    assert np.array_equal(first.polygon.points[:, 0], xs)
    second = res.instances[1]
    assert second.id == "img_17_0002"
    assert second.transcript is None
    assert ":4:" in res.warnings[0]


# ---------------------------------------------------------------------------
# Side splitting


def test_split_rectangle_by_corner_detection():
    split = split_sides(rect_instance())
    assert np.array_equal(split.corners, [[0, 0], [10, 0], [10, 2], [0, 2]])
    assert np.array_equal(split.top[0], [0, 0])
    assert np.array_equal(split.top[-1], [10, 0])
    assert np.array_equal(split.bottom[0], [0, 2])
    assert np.array_equal(split.bottom[-1], [10, 2])


def test_split_even_count_uses_convention():
    inst, top, bottom = band_instance(n_per_side=9)
    split = split_sides(inst)
    assert np.array_equal(split.top, top)
    assert np.array_equal(split.bottom, bottom)


def test_split_ctw_is_seven_and_seven():
    x = np.linspace(0.0, 60.0, 7)
    top = np.column_stack([x, np.zeros(7)])
    bottom = np.column_stack([x, np.full(7, 12.0)])
    ring = np.vstack([top, bottom[::-1]])
    inst = TextInstance(id="c", polygon=Polygon(ring), source="ctw1500")
    split = split_sides(inst)
    assert split.top.shape == (7, 2)
    assert split.bottom.shape == (7, 2)
    assert np.array_equal(split.top, top)
    assert np.array_equal(split.bottom, bottom)


def test_split_detects_corners_on_odd_ring():
    # five vertices, one of them on a long edge; the detector keeps the
    # four that span the largest quadrilateral
    pts = np.array([[0.0, 0.0], [6.0, 0.0], [12.0, 0.1], [12.0, 4.0], [0.0, 4.0]])
    inst = TextInstance(id="odd", polygon=Polygon(pts))
    split = split_sides(inst)
    assert np.array_equal(split.corners[0], [0.0, 0.0])
    assert np.array_equal(split.corners[1], [12.0, 0.1])
    # every vertex lands in exactly one side; the midpoint joins the longer run
    assert len(split.top) + len(split.bottom) == 5
    assert np.array_equal(split.top, pts[:3])
    assert np.array_equal(split.bottom, [[0.0, 4.0], [12.0, 4.0]])


def test_split_arc_corners_land_at_ends():
    # a thick curved band sampled at 5 points per side; the band is thick
    # relative to its sag, so the largest quadrilateral uses the side ends
    th = np.linspace(-0.3, 0.3, 5)
    outer = 40.0 * np.column_stack([np.sin(th), -np.cos(th)]) + [0.0, 60.0]
    inner = 25.0 * np.column_stack([np.sin(th), -np.cos(th)]) + [0.0, 60.0]
    ring = np.vstack([outer, inner[::-1]])
    inst = TextInstance(id="arc", polygon=Polygon(ring))
    split = split_sides(inst)
    got = {tuple(p) for p in split.corners}
    want = {tuple(outer[0]), tuple(outer[-1]), tuple(inner[0]), tuple(inner[-1])}
    assert got == want
    assert len(split.top) == 5 and len(split.bottom) == 5


def test_split_rejects_tiny_and_huge_rings():
    tri = TextInstance(id="t", polygon=Polygon(np.array([[0.0, 0], [1, 0], [1, 1.0]])))
    with pytest.raises(MalformedAnnotation):
        split_sides(tri)
    th = np.linspace(0, 2 * np.pi, 20, endpoint=False)
    big = np.column_stack([np.cos(th), np.sin(th)])[:17]
    inst = TextInstance(id="big", polygon=Polygon(big))
    with pytest.raises(MalformedAnnotation):
        split_sides(inst)


# ---------------------------------------------------------------------------
# Correspondences


def test_correspondences_layout():
    inst, top, bottom = band_instance()
    split = split_sides(inst)
    src, dst = make_correspondences(split, per_side=32)
    assert src.shape == (64, 2)
    assert dst.shape == (64, 2)
    assert np.allclose(src[:32, 1], 0.0)
    assert np.allclose(src[32:, 1], 1.0)
    assert np.allclose(src[:32, 0], np.linspace(0, 1, 32))


def test_correspondences_pin_corners():
    inst, top, bottom = band_instance()
    split = split_sides(inst)
    _, dst = make_correspondences(split, per_side=16)
    assert np.array_equal(dst[0], split.corners[0])
    assert np.array_equal(dst[15], split.corners[1])
    assert np.array_equal(dst[16], split.corners[3])
    assert np.array_equal(dst[31], split.corners[2])


def test_correspondences_on_rectangle_are_affine():
    split = split_sides(rect_instance(w=20.0, h=4.0))
    src, dst = make_correspondences(split, per_side=8)
    assert np.max(np.abs(dst - src * [20.0, 4.0])) < 1e-9


def test_correspondences_reject_tiny_per_side():
    split = split_sides(rect_instance())
    with pytest.raises(ConfigError):
        make_correspondences(split, per_side=1)


# ---------------------------------------------------------------------------
# Synthetic generation


def test_flat_synthetic_is_a_rectangle():
    spec = SyntheticSpec(amplitude_frac=0.0, periods=1.0, text_height=30.0, aspect=4.0)
    inst, split, center = generate_synthetic(spec)
    assert np.ptp(split.top[:, 1]) < 1e-9
    assert np.ptp(split.bottom[:, 1]) < 1e-9
    height = split.bottom[0, 1] - split.top[0, 1]
    assert height == pytest.approx(30.0, rel=1e-9)
    width = split.top[-1, 0] - split.top[0, 0]
    assert width == pytest.approx(120.0, rel=1e-9)
    assert center.shape == (32, 2)


def test_synthetic_is_deterministic():
    spec = SyntheticSpec(amplitude_frac=0.25, periods=2.0, seed=5)
    a = generate_synthetic(spec)
    b = generate_synthetic(spec)
    assert np.array_equal(a[0].polygon.points, b[0].polygon.points)
    assert np.array_equal(a[2], b[2])


def test_synthetic_amplitude_changes_shape():
    flat = generate_synthetic(SyntheticSpec(amplitude_frac=0.0, seed=3))
    wavy = generate_synthetic(SyntheticSpec(amplitude_frac=0.3, seed=3))
    assert np.ptp(wavy[1].top[:, 1]) > 1.0
    assert np.ptp(flat[1].top[:, 1]) < 1e-9


def test_synthetic_perspective_matches_manual_warp():
    from tpsgeom import perspective_from_left_edge

    base = generate_synthetic(SyntheticSpec(amplitude_frac=0.2, seed=7))
    tilted = generate_synthetic(SyntheticSpec(amplitude_frac=0.2, seed=7,
                                              perspective_angle_deg=45.0))
    h = perspective_from_left_edge(45.0, 1024, 768)
    want = h.apply(base[0].polygon.points)
    assert np.max(np.abs(tilted[0].polygon.points - want)) < 1e-9


def test_synthetic_rejects_overfolding():
    # curvature large enough to fold the band onto itself
    spec = SyntheticSpec(amplitude_frac=0.5, periods=6.0, text_height=40.0, aspect=2.0)
    with pytest.raises(DegenerateShape):
        generate_synthetic(spec)


def test_synthetic_must_fit_in_frame():
    spec = SyntheticSpec(amplitude_frac=0.0, text_height=400.0, aspect=5.0,
                         image_w=640.0, image_h=480.0)
    with pytest.raises(ConfigError):
        generate_synthetic(spec)


def test_corpus_ids_and_determinism():
    a = make_synthetic_corpus(4, seed=42)
    b = make_synthetic_corpus(4, seed=42)
    assert [i[0].id for i in a] == ["syn_42_0000", "syn_42_0001", "syn_42_0002", "syn_42_0003"]
    for (ia, _, _), (ib, _, _) in zip(a, b):
        assert np.array_equal(ia.polygon.points, ib.polygon.points)
    c = make_synthetic_corpus(4, seed=43)
    assert not np.array_equal(a[0][0].polygon.points, c[0][0].polygon.points)


def test_corpus_instances_differ_from_each_other():
    corpus = make_synthetic_corpus(3, seed=42)
    p0 = corpus[0][0].polygon.points
    p1 = corpus[1][0].polygon.points
    assert p0.shape != p1.shape or not np.array_equal(p0, p1)


def test_corpus_rejects_empty_request():
    with pytest.raises(ConfigError):
        make_synthetic_corpus(0)


# ---------------------------------------------------------------------------
# PGM masks


def test_pgm_round_trip(tmp_path):
    rng = np.random.default_rng(9)
    values = rng.uniform(0, 1, (17, 23))
    path = tmp_path / "m.pgm"
    write_pgm(values, path)
    back = read_pgm(path)
    assert back.shape == values.shape
    assert np.max(np.abs(back - values)) <= 1.0 / 255.0
    # writing the recovered raster again is lossless
    write_pgm(back, tmp_path / "m2.pgm")
    assert np.array_equal(read_pgm(tmp_path / "m2.pgm"), back)


def test_quantize_mask_endpoints():
    q = quantize_mask(np.array([[0.0, 1.0, 0.5]]))
    assert q.dtype == np.uint8
    assert q[0, 0] == 0 and q[0, 1] == 255
    assert q[0, 2] in (127, 128)


def test_pgm_write_needs_writable_directory(tmp_path):
    with pytest.raises(IoError):
        write_pgm(np.zeros((4, 4)), tmp_path / "no" / "dir" / "m.pgm")


def test_read_pgm_rejects_other_formats(tmp_path):
    path = tmp_path / "fake.pgm"
    path.write_bytes(b"P6\n2 2\n255\n" + bytes(12))
    with pytest.raises(IoError):
        read_pgm(path)


# ---------------------------------------------------------------------------
# SVG rendering


def test_svg_draws_instances_green_and_fits_red():
    inst = rect_instance()
    ring = np.array([[0.5, 0.2], [9.5, 0.2], [9.5, 1.8], [0.5, 1.8]])
    doc = render_svg([inst], fitted={"r0": ring})
    assert doc.startswith("<svg") or doc.startswith("<?xml")
    greens = re.findall(r'<polygon[^>]*stroke="green"', doc)
    reds = re.findall(r'<polygon[^>]*stroke="red"', doc)
    assert len(greens) == 1
    assert len(reds) == 1


def test_svg_draws_control_points_as_circles():
    inst = rect_instance()
    ctrl = np.array([[1.0, 1.0], [5.0, 1.0], [9.0, 1.0]])
    doc = render_svg([inst], control_points={"r0": ctrl})
    assert doc.count("<circle") == 3
    assert 'fill="blue"' in doc


def test_svg_embeds_mask_with_exact_pgm_quantization():
    from PIL import Image

    inst = rect_instance()
    rng = np.random.default_rng(4)
    values = rng.uniform(0, 1, (8, 12))
    doc = render_svg([inst], mask=(values, (0.0, 0.0), 1.0))
    m = re.search(r'href="data:image/png;base64,([^"]+)"', doc)
    assert m is not None
    img = Image.open(io.BytesIO(base64.b64decode(m.group(1))))
    arr = np.asarray(img.convert("L"))
    assert np.array_equal(arr, quantize_mask(values))


def test_svg_requires_instances():
    with pytest.raises(ConfigError):
        render_svg([])
