"""Annotation ingestion, side splitting, correspondences, synthetic text, exports.

The canonical interchange format is the generic annotation JSON:

    {"instances": [{"id": str, "points": [[x, y], ...],
                    "transcript": str | null, "source": str}]}

with pixel coordinates, y down. CTW1500-native text files are converted on
ingest. No photographic data is ever touched; renders are synthetic SVG.
"""

import base64
import io
import itertools
import json
import os
import re
import tempfile
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConfigError,
    DegenerateShape,
    EmptyCorpus,
    IoError,
    MalformedAnnotation,
    TpsgeomError,
)
from .geometry import (
    Polygon,
    SplineCurve,
    as_point_array,
    perspective_from_left_edge,
)

__all__ = [
    "TextInstance",
    "SideSplit",
    "SyntheticSpec",
    "ParseResult",
    "parse_annotations",
    "write_annotations",
    "instance_to_dict",
    "instance_from_dict",
    "split_sides",
    "make_correspondences",
    "generate_synthetic",
    "make_synthetic_corpus",
    "render_svg",
    "quantize_mask",
    "write_pgm",
    "read_pgm",
    "atomic_write_text",
    "atomic_write_bytes",
]

SOURCES = ("ctw1500", "totaltext", "generic", "synthetic")


@dataclass(frozen=True)
class TextInstance:
    """One annotated text region."""

    id: str
    polygon: Polygon
    transcript: str | None = None
    source: str = "generic"

    def __post_init__(self):
        if self.source not in SOURCES:
            raise MalformedAnnotation(f"unknown source {self.source!r}, expected one of {SOURCES}")
        if self.source == "ctw1500" and len(self.polygon) != 14:
            raise MalformedAnnotation(
                f"ctw1500 instances need exactly 14 points, got {len(self.polygon)}"
            )


@dataclass(frozen=True)
class SideSplit:
    """Top and bottom vertex runs (both left to right) plus the 4 corners."""

    top: np.ndarray
    bottom: np.ndarray
    corners: np.ndarray  # (4, 2) in (tl, tr, br, bl) order

    def __post_init__(self):
        top = as_point_array(self.top, "top side")
        bottom = as_point_array(self.bottom, "bottom side")
        corners = as_point_array(self.corners, "corners")
        if corners.shape != (4, 2):
            raise MalformedAnnotation("corners must be 4 points")
        for arr in (top, bottom, corners):
            arr.flags.writeable = False
        object.__setattr__(self, "top", top)
        object.__setattr__(self, "bottom", bottom)
        object.__setattr__(self, "corners", corners)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic curved-text instance.

    The centerline is a sinusoid spanning `periods` full periods over the text
    width (aspect * text_height); its amplitude is amplitude_frac of the text
    height. The instance is placed at a seeded position inside a virtual
    image_w x image_h frame, then warped by the left-edge perspective
    transform when perspective_angle_deg > 0.
    """

    amplitude_frac: float = 0.3
    periods: float = 1.5
    text_height: float = 32.0
    aspect: float = 5.0
    perspective_angle_deg: float = 0.0
    seed: int = 0
    image_w: float = 1024.0
    image_h: float = 768.0

    def __post_init__(self):
        if not (0.0 <= self.amplitude_frac <= 0.5):
            raise ConfigError(f"amplitude_frac must be in [0, 0.5], got {self.amplitude_frac}")
        if not (0.0 <= self.perspective_angle_deg < 90.0):
            raise ConfigError(f"angle must be in [0, 90), got {self.perspective_angle_deg}")
        if self.text_height <= 0 or self.aspect <= 0:
            raise ConfigError("text_height and aspect must be positive")


@dataclass(frozen=True)
class ParseResult:
    instances: list
    warnings: list


def instance_to_dict(inst: TextInstance) -> dict:
    return {
        "id": inst.id,
        "points": [[float(x), float(y)] for x, y in inst.polygon.points],
        "transcript": inst.transcript,
        "source": inst.source,
    }


def instance_from_dict(d: dict) -> TextInstance:
    if not isinstance(d, dict):
        raise MalformedAnnotation(f"instance record must be an object, got {type(d).__name__}")
    try:
        ident = d["id"]
        points = d["points"]
    except KeyError as exc:
        raise MalformedAnnotation(f"instance record missing field {exc}") from exc
    if not isinstance(ident, str) or not ident:
        raise MalformedAnnotation("instance id must be a non-empty string")
    transcript = d.get("transcript")
    if transcript is not None and not isinstance(transcript, str):
        raise MalformedAnnotation("transcript must be a string or null")
    return TextInstance(
        id=ident,
        polygon=Polygon(as_point_array(points, f"instance {ident}")),
        transcript=transcript,
        source=d.get("source", "generic"),
    )


def _parse_generic(text: str, origin: str) -> ParseResult:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedAnnotation(f"{origin}: not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("instances"), list):
        raise MalformedAnnotation(f'{origin}: expected an object with an "instances" list')
    instances, warnings = [], []
    for i, rec in enumerate(doc["instances"]):
        try:
            instances.append(instance_from_dict(rec))
        except TpsgeomError as exc:
            ident = rec.get("id", f"#{i}") if isinstance(rec, dict) else f"#{i}"
            warnings.append(f"{origin}: instance {ident}: {exc}")
    return ParseResult(instances, warnings)


_CTW_LINE = re.compile(r"^\s*(?P<nums>-?\d+(?:\s*,\s*-?\d+){27})\s*(?:####(?P<tr>.*))?$")


def _parse_ctw1500(text: str, origin: str) -> ParseResult:
    stem = os.path.splitext(os.path.basename(origin))[0]
    instances, warnings = [], []
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        m = _CTW_LINE.match(line)
        if m is None:
            warnings.append(f"{origin}:{lineno + 1}: not 28 comma-separated integers")
            continue
        nums = [int(v) for v in m.group("nums").replace(" ", "").split(",")]
        pts = np.asarray(nums, dtype=np.float64).reshape(14, 2)
        transcript = m.group("tr")
        if transcript is not None:
            transcript = transcript.strip() or None
        try:
            instances.append(
                TextInstance(
                    id=f"{stem}_{lineno:04d}",
                    polygon=Polygon(pts),
                    transcript=transcript,
                    source="ctw1500",
                )
            )
        except TpsgeomError as exc:
            warnings.append(f"{origin}:{lineno + 1}: {exc}")
    return ParseResult(instances, warnings)


def parse_annotations(path, format: str = "generic") -> ParseResult:
    """Load annotations from a file.

    Parameters
    ----------
    path : str or Path
    format : "generic" (annotation JSON) or "ctw1500" (native text lines)

    Returns
    -------
    ParseResult
        instances plus a list of warning strings for malformed records;
        malformed records are reported, never silently dropped.

    Raises
    ------
    IoError
        The file cannot be read.
    MalformedAnnotation
        The file as a whole does not match the declared format.
    EmptyCorpus
        No valid instance was found.
    """
    if format not in ("generic", "ctw1500"):
        raise ConfigError(f"unknown annotation format {format!r}")
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    result = (_parse_generic if format == "generic" else _parse_ctw1500)(text, str(path))
    if not result.instances:
        raise EmptyCorpus(f"{path}: no valid instances (warnings: {len(result.warnings)})")
    return result


def write_annotations(instances, path) -> None:
    """Write instances as generic annotation JSON (atomic)."""
    doc = {"instances": [instance_to_dict(inst) for inst in instances]}
    atomic_write_text(path, json.dumps(doc, indent=2) + "\n")


def _detect_corners(pts: np.ndarray) -> tuple[int, int, int, int]:
    # exhaustive max-area quadrilateral over vertex subsets; callers cap N
    n = len(pts)
    best, best_idx = -1.0, None
    for quad in itertools.combinations(range(n), 4):
        q = pts[list(quad)]
        area = abs(
            0.5
            * np.sum(q[:, 0] * np.roll(q[:, 1], -1) - np.roll(q[:, 0], -1) * q[:, 1])
        )
        if area > best:
            best, best_idx = area, quad
    return best_idx


def _run(pts: np.ndarray, i: int, j: int) -> np.ndarray:
    # vertices from index i to j inclusive, walking forward cyclically
    n = len(pts)
    if j >= i:
        return pts[i : j + 1]
    return np.vstack([pts[i:], pts[: j + 1]])


def split_sides(instance: TextInstance) -> SideSplit:
    """Partition an instance polygon into top/bottom sides and 4 corners.

    ctw1500 and synthetic sources follow the storage convention (first half =
    top left-to-right, second half = bottom right-to-left). Other sources use
    corner detection: the 4 vertices spanning the maximum-area quadrilateral
    (exhaustive over subsets, so capped at 16 vertices), with the two
    longer opposite vertex runs taken as the sides. Polygons over 16 vertices
    fall back to the convention when the count is even.

    Raises
    ------
    MalformedAnnotation
        Fewer than 4 vertices, or an odd count where the convention is needed.
    """
    pts = instance.polygon.points
    n = len(pts)
    if n < 4:
        raise MalformedAnnotation(f"side split needs >= 4 vertices, got {n}")

    convention = instance.source in ("ctw1500", "synthetic") or (n > 16 and n % 2 == 0)
    if convention:
        if n % 2 != 0:
            raise MalformedAnnotation(f"convention split needs an even vertex count, got {n}")
        half = n // 2
        top = pts[:half]
        bottom = pts[half:][::-1]
    else:
        if n > 16:
            raise MalformedAnnotation(
                f"corner detection is capped at 16 vertices, got {n}; "
                "use an even-count convention polygon"
            )
        i0, i1, i2, i3 = _detect_corners(pts)
        runs = [_run(pts, a, b) for a, b in ((i0, i1), (i1, i2), (i2, i3), (i3, i0))]
        lengths = [float(np.sum(np.linalg.norm(np.diff(r, axis=0), axis=1))) for r in runs]
        if lengths[0] + lengths[2] >= lengths[1] + lengths[3]:
            side_a, side_b = runs[0], runs[2]
        else:
            side_a, side_b = runs[1], runs[3]
        # top = the run with the smaller mean y (y grows downward)
        if side_a[:, 1].mean() <= side_b[:, 1].mean():
            top, bottom = side_a, side_b
        else:
            top, bottom = side_b, side_a
        if top[0, 0] > top[-1, 0]:
            top = top[::-1]
        # orient bottom so its first point is the one nearer the top-left
        if np.linalg.norm(bottom[0] - top[0]) > np.linalg.norm(bottom[-1] - top[0]):
            bottom = bottom[::-1]

    if len(top) < 2 or len(bottom) < 2:
        raise MalformedAnnotation("each side needs >= 2 vertices")
    corners = np.array([top[0], top[-1], bottom[-1], bottom[0]])
    return SideSplit(top.copy(), bottom.copy(), corners)


def make_correspondences(split: SideSplit, per_side: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Resample both sides and pair them with unit-rectangle source points.

    Each side is smoothed with a natural cubic spline and resampled to
    `per_side` points uniform in arc length. Top points map to sources (t, 0)
    and bottom points to (t, 1) with t uniform in [0, 1]; the side endpoints
    (the 4 corners) appear among the targets bit-exactly.

    Returns
    -------
    (sources, targets)
        Two (2 * per_side, 2) arrays, top block first.
    """
    if per_side < 2:
        raise ConfigError(f"per_side must be >= 2, got {per_side}")
    t = np.linspace(0.0, 1.0, per_side)
    top = SplineCurve(split.top).resample(per_side)
    bottom = SplineCurve(split.bottom).resample(per_side)
    sources = np.vstack(
        [
            np.column_stack([t, np.zeros(per_side)]),
            np.column_stack([t, np.ones(per_side)]),
        ]
    )
    targets = np.vstack([top, bottom])
    return sources, targets


def generate_synthetic(spec: SyntheticSpec) -> tuple[TextInstance, SideSplit, np.ndarray]:
    """Build one synthetic curved-text instance.

    The sinusoidal centerline is offset by +-text_height/2 along its true unit
    normal to form the two sides, 32 points each; the polygon is the top side
    left-to-right followed by the bottom side right-to-left. A perspective
    warp about the virtual frame's left edge is applied when the angle is
    positive. Deterministic for a given spec.

    Returns
    -------
    (instance, split, centerline)
        centerline is the (32, 2) warped centerline polyline.

    Raises
    ------
    DegenerateShape
        The offset self-intersects (amplitude too large for the height).
    ConfigError
        The instance cannot fit inside the virtual image frame.
    """
    rng = np.random.default_rng(spec.seed)
    h = spec.text_height
    width = spec.aspect * h
    amp = spec.amplitude_frac * h
    omega = 2.0 * np.pi * spec.periods / width if width > 0 else 0.0
    # offset curve self-intersects when max curvature exceeds 2/height
    if amp * omega * omega * (h / 2.0) >= 1.0:
        raise DegenerateShape(
            f"amplitude {amp:.1f} px with {spec.periods} periods over width {width:.1f} px "
            f"self-intersects at height {h:.1f} px"
        )

    phase = rng.uniform(0.0, 2.0 * np.pi)
    margin = 2.0
    span_y = amp + h / 2.0 + margin
    max_x0 = spec.image_w - width - margin
    if max_x0 < margin or 2.0 * span_y > spec.image_h:
        raise ConfigError(
            f"instance {width:.0f}x{h:.0f} px does not fit the {spec.image_w:.0f}x"
            f"{spec.image_h:.0f} frame"
        )
    x0 = rng.uniform(margin, max_x0)
    y0 = rng.uniform(span_y, spec.image_h - span_y)

    xs = np.linspace(0.0, width, 32)
    ys = amp * np.sin(omega * xs + phase)
    slope = amp * omega * np.cos(omega * xs + phase)
    norm = np.sqrt(1.0 + slope * slope)
    normal = np.column_stack([-slope / norm, 1.0 / norm])
    center = np.column_stack([x0 + xs, y0 + ys])
    top = center - (h / 2.0) * normal
    bottom = center + (h / 2.0) * normal

    if spec.perspective_angle_deg > 0.0:
        hom = perspective_from_left_edge(
            spec.perspective_angle_deg, spec.image_w, spec.image_h, focal=spec.image_w
        )
        top, bottom, center = hom.apply(top), hom.apply(bottom), hom.apply(center)

    instance = TextInstance(
        id=f"syn#{spec.seed}",
        polygon=Polygon(np.vstack([top, bottom[::-1]])),
        transcript=None,
        source="synthetic",
    )
    corners = np.array([top[0], top[-1], bottom[-1], bottom[0]])
    return instance, SideSplit(top, bottom, corners), center


def make_synthetic_corpus(
    n: int,
    amplitude_frac: float = 0.3,
    periods: float = 1.5,
    perspective_angle_deg: float = 0.0,
    seed: int = 42,
    text_height_range: tuple[float, float] = (20.0, 44.0),
    aspect_range: tuple[float, float] = (8.0, 16.0),
    image_w: float = 1024.0,
    image_h: float = 768.0,
) -> list[tuple[TextInstance, SideSplit, np.ndarray]]:
    """Generate a deterministic corpus of n synthetic instances.

    Instance i draws its height and aspect from an independent stream keyed by
    (seed, i) and uses per-instance seed seed + i, so generation order (or
    parallelism) cannot change the output.
    """
    if n < 1:
        raise ConfigError(f"corpus size must be >= 1, got {n}")
    out = []
    for i in range(n):
        draw = np.random.default_rng([seed, i])
        spec = SyntheticSpec(
            amplitude_frac=amplitude_frac,
            periods=periods,
            text_height=draw.uniform(*text_height_range),
            aspect=draw.uniform(*aspect_range),
            perspective_angle_deg=perspective_angle_deg,
            seed=seed + i,
            image_w=image_w,
            image_h=image_h,
        )
        inst, split, center = generate_synthetic(spec)
        inst = TextInstance(
            id=f"syn_{seed}_{i:04d}", polygon=inst.polygon, transcript=None, source="synthetic"
        )
        out.append((inst, split, center))
    return out


def quantize_mask(values: np.ndarray) -> np.ndarray:
    """Quantize [0, 1] mask values to uint8, the shared PGM/SVG convention."""
    v = np.asarray(values, dtype=np.float64)
    return np.clip(np.rint(v * 255.0), 0, 255).astype(np.uint8)


def write_pgm(values: np.ndarray, path) -> None:
    """Write a [0, 1] float mask as a binary PGM (P5, 8-bit, values x 255)."""
    data = quantize_mask(values)
    if data.ndim != 2:
        raise ConfigError(f"mask must be 2-D, got shape {data.shape}")
    h, w = data.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    atomic_write_bytes(path, header + data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a binary 8-bit PGM back to float values in [0, 1]."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", blob)
    if m is None:
        raise IoError(f"{path}: not a binary PGM")
    w, h, maxval = (int(m.group(i)) for i in (1, 2, 3))
    if maxval != 255:
        raise IoError(f"{path}: only 8-bit PGM supported, maxval {maxval}")
    data = np.frombuffer(blob[m.end() :], dtype=np.uint8, count=w * h)
    return data.reshape(h, w).astype(np.float64) / 255.0


def _mask_png_data_uri(values: np.ndarray) -> str:
    from PIL import Image

    img = Image.fromarray(quantize_mask(values), mode="L")
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


def _svg_points(pts: np.ndarray) -> str:
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in pts)


def render_svg(
    instances,
    fitted: dict | None = None,
    control_points: dict | None = None,
    mask: tuple[np.ndarray, tuple[float, float], float] | None = None,
) -> str:
    """Render instances and overlays to an SVG 1.1 document string.

    Ground-truth polygons are drawn green, fitted boundaries red, control
    points as blue dots, matching the usual figure conventions.

    Parameters
    ----------
    instances : list of TextInstance
    fitted : optional dict id -> (N, 2) fitted boundary points
    control_points : optional dict id -> (M, 2) control point locations
    mask : optional (values, origin_xy, scale)
        A [0, 1] raster to embed; quantized exactly like the PGM export.
        origin_xy is the image position of the raster's top-left corner and
        scale the raster cells per image pixel.
    """
    if not instances:
        raise ConfigError("render_svg needs at least one instance")
    fitted = fitted or {}
    control_points = control_points or {}

    all_pts = [inst.polygon.points for inst in instances]
    all_pts += [np.asarray(v, float) for v in fitted.values()]
    all_pts += [np.asarray(v, float) for v in control_points.values()]
    stack = np.vstack(all_pts)
    lo = stack.min(axis=0) - 10.0
    hi = stack.max(axis=0) + 10.0
    if mask is not None:
        values, origin, scale = mask
        mh, mw = np.asarray(values).shape
        lo = np.minimum(lo, np.asarray(origin))
        hi = np.maximum(hi, np.asarray(origin) + np.array([mw, mh]) / scale)

    parts = [
        '<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'viewBox="{lo[0]:.3f} {lo[1]:.3f} {hi[0] - lo[0]:.3f} {hi[1] - lo[1]:.3f}">'
    ]
    if mask is not None:
        values, origin, scale = mask
        mh, mw = np.asarray(values).shape
        parts.append(
            f'<image x="{origin[0]:.3f}" y="{origin[1]:.3f}" '
            f'width="{mw / scale:.3f}" height="{mh / scale:.3f}" '
            'preserveAspectRatio="none" opacity="0.8" '
            f'xlink:href="{_mask_png_data_uri(values)}" '
            'xmlns:xlink="http://www.w3.org/1999/xlink"/>'
        )
    for inst in instances:
        parts.append(
            f'<polygon points="{_svg_points(inst.polygon.points)}" '
            'fill="none" stroke="green" stroke-width="1.5"/>'
        )
    for ident, boundary in fitted.items():
        parts.append(
            f'<polygon points="{_svg_points(np.asarray(boundary, float))}" '
            f'fill="none" stroke="red" stroke-width="1" data-id="{ident}"/>'
        )
    for ident, cps in control_points.items():
        for x, y in np.asarray(cps, float):
            parts.append(f'<circle cx="{x:.3f}" cy="{y:.3f}" r="2" fill="blue" data-id="{ident}"/>')
    parts.append("</svg>")
    return "\n".join(parts)


def atomic_write_text(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path, blob: bytes) -> None:
    """Write via a temp file in the target directory, then rename."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(blob)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
