"""Geometric primitives: polygons, rasterized overlap, spline smoothing, homographies.

Coordinates are image-style throughout: x right, y down, units of pixels unless
a function says otherwise. Orientation of a polygon is reported with respect to
the stored axes (positive shoelace area = counterclockwise), which looks
clockwise when rendered y-down.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigError, DegenerateShape, MalformedAnnotation

__all__ = [
    "Polygon",
    "SplineCurve",
    "Homography",
    "as_point_array",
    "polygon_area",
    "rasterized_overlap",
    "grid_inside",
    "min_distance_to_segments",
    "smooth_boundary",
    "perspective_from_left_edge",
]


def as_point_array(points, name: str = "points") -> np.ndarray:
    """Coerce to a float64 (N, 2) array and require finite entries."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise MalformedAnnotation(f"{name}: expected an (N, 2) point array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DegenerateShape(f"{name}: non-finite coordinates")
    return arr


def _signed_area(pts: np.ndarray) -> float:
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


class Polygon:
    """Ordered boundary points of a region.

    Parameters
    ----------
    points : array_like, shape (N, 2)
        Vertices in order, not repeating the first vertex at the end.

    Raises
    ------
    DegenerateShape
        Fewer than 3 vertices, non-finite coordinates, a consecutive
        duplicate vertex (cyclically), or absolute area below 1e-12.
    """

    __slots__ = ("points", "orientation", "_signed")

    def __init__(self, points):
        pts = as_point_array(points, "polygon")
        if len(pts) < 3:
            raise DegenerateShape(f"polygon needs >= 3 vertices, got {len(pts)}")
        same = np.all(pts == np.roll(pts, -1, axis=0), axis=1)
        if np.any(same):
            raise DegenerateShape("polygon has a consecutive duplicate vertex")
        signed = _signed_area(pts)
        if abs(signed) < 1e-12:
            raise DegenerateShape(f"polygon area {abs(signed):.3e} below 1e-12")
        pts.flags.writeable = False
        self.points = pts
        self._signed = signed
        self.orientation = "counterclockwise" if signed > 0 else "clockwise"

    def __len__(self) -> int:
        return len(self.points)

    def __repr__(self) -> str:
        return f"Polygon({len(self.points)} vertices, {self.orientation})"

    def bounds(self) -> tuple[float, float, float, float]:
        """Axis-aligned bounding box (xmin, ymin, xmax, ymax)."""
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


def polygon_area(p: Polygon) -> float:
    """Absolute shoelace area of a polygon.

    Raises
    ------
    DegenerateShape
        If the area is below 1e-12.
    """
    area = abs(_signed_area(p.points))
    if area < 1e-12:
        raise DegenerateShape(f"polygon area {area:.3e} below 1e-12")
    return area


def grid_inside(polygon_points: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd point-in-polygon test on a separable grid.

    Parameters
    ----------
    polygon_points : (E, 2) array
        Polygon vertices (closing edge implied).
    xs : (nx,) array
        Sample x coordinates (one per grid column).
    ys : (ny,) array
        Sample y coordinates (one per grid row).

    Returns
    -------
    (ny, nx) bool array
        True where the sample point is inside by the crossing-number rule.
        Edges are treated as half-open in y so a ray through a vertex is
        counted once; a sample exactly on an edge resolves deterministically.
    """
    pts = np.asarray(polygon_points, dtype=np.float64)
    x1, y1 = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    ny, nx = len(ys), len(xs)
    inside = np.zeros((ny, nx), dtype=bool)

    yc = ys[:, None]
    crosses = ((y1 <= yc) & (yc < y2)) | ((y2 <= yc) & (yc < y1))
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (yc - y1) / (y2 - y1)
        xcross = x1 + t * (x2 - x1)

    for r in range(ny):
        row_x = np.sort(xcross[r][crosses[r]])
        if len(row_x) == 0:
            continue
        # crossings strictly to the right of each sample x; odd count = inside
        right = len(row_x) - np.searchsorted(row_x, xs, side="right")
        inside[r] = (right & 1).astype(bool)
    return inside


def rasterized_overlap(
    a: Polygon, b: Polygon, resolution: int = 512
) -> tuple[float, float, float, float]:
    """Estimate areas and overlap of two polygons on a shared raster.

    The joint bounding box is divided into square cells, `resolution` of them
    along its longer side, and each polygon is tested at every cell center.

    Parameters
    ----------
    a, b : Polygon
    resolution : int
        Cell count along the longer side of the joint bounding box.

    Returns
    -------
    (area_a, area_b, area_intersection, area_union)
        All in squared input units; union = area_a + area_b - intersection
        holds exactly because the counts are taken on the same grid.

    Raises
    ------
    ConfigError
        If resolution < 8.
    """
    if resolution < 8:
        raise ConfigError(f"resolution must be >= 8, got {resolution}")
    ax0, ay0, ax1, ay1 = a.bounds()
    bx0, by0, bx1, by1 = b.bounds()
    x0, y0 = min(ax0, bx0), min(ay0, by0)
    x1, y1 = max(ax1, bx1), max(ay1, by1)
    w, h = x1 - x0, y1 - y0
    cell = max(w, h) / resolution
    if cell <= 0:
        raise DegenerateShape("joint bounding box has zero extent")
    nx = max(1, int(np.ceil(w / cell - 1e-9)))
    ny = max(1, int(np.ceil(h / cell - 1e-9)))
    xs = x0 + (np.arange(nx) + 0.5) * cell
    ys = y0 + (np.arange(ny) + 0.5) * cell

    in_a = grid_inside(a.points, xs, ys)
    in_b = grid_inside(b.points, xs, ys)
    ca = int(np.count_nonzero(in_a))
    cb = int(np.count_nonzero(in_b))
    ci = int(np.count_nonzero(in_a & in_b))
    cu = ca + cb - ci
    scale = cell * cell
    return ca * scale, cb * scale, ci * scale, cu * scale


def min_distance_to_segments(
    query: np.ndarray, boundary: np.ndarray, closed: bool = True, chunk: int = 8192
) -> np.ndarray:
    """Minimum Euclidean distance from each query point to a polyline.

    Parameters
    ----------
    query : (M, 2) array
    boundary : (N, 2) array
        Polyline vertices; the closing segment is included when `closed`.
    chunk : int
        Query batch size bounding the (chunk, N) temporaries.

    Returns
    -------
    (M,) array of distances.
    """
    q = np.asarray(query, dtype=np.float64)
    p = np.asarray(boundary, dtype=np.float64)
    a = p if closed else p[:-1]
    b = np.roll(p, -1, axis=0) if closed else p[1:]
    ab = b - a
    denom = np.maximum(np.sum(ab * ab, axis=1), 1e-300)

    out = np.empty(len(q), dtype=np.float64)
    for lo in range(0, len(q), chunk):
        qc = q[lo : lo + chunk]
        diff = qc[:, None, :] - a[None, :, :]
        t = np.clip(np.sum(diff * ab[None, :, :], axis=2) / denom, 0.0, 1.0)
        proj = diff - t[:, :, None] * ab[None, :, :]
        d2 = np.sum(proj * proj, axis=2)
        out[lo : lo + chunk] = np.sqrt(d2.min(axis=1))
    return out


class SplineCurve:
    """Natural cubic spline through a point sequence, chord-length parameterized.

    Interpolates the input points exactly and is C2 at interior knots. With
    two input points it degenerates to the straight segment.
    """

    __slots__ = ("knots", "coeffs", "_pp", "_ends")

    def __init__(self, points):
        pts = as_point_array(points, "spline points")
        if len(pts) < 2:
            raise MalformedAnnotation(f"spline needs >= 2 points, got {len(pts)}")
        chord = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if np.any(chord <= 0):
            raise DegenerateShape("spline input has coincident consecutive points")
        knots = np.concatenate([[0.0], np.cumsum(chord)])
        pp = CubicSpline(knots, pts, bc_type="natural", axis=0)
        self.knots = knots
        self.coeffs = pp.c
        self._pp = pp
        self._ends = (pts[0].copy(), pts[-1].copy())

    def __call__(self, s):
        """Evaluate the curve at parameter(s) s (chord-length units)."""
        return self._pp(s)

    def resample(self, n: int, dense: int = 4096) -> np.ndarray:
        """Resample to n points uniformly spaced by arc length.

        Arc length is measured on a dense polyline of the spline and inverted
        by linear interpolation; endpoints are returned bit-exactly.
        """
        if n < 2:
            raise ConfigError(f"resample needs n >= 2, got {n}")
        u = np.linspace(0.0, self.knots[-1], dense)
        dp = self._pp(u)
        seg = np.linalg.norm(np.diff(dp, axis=0), axis=1)
        ell = np.concatenate([[0.0], np.cumsum(seg)])
        targets = np.linspace(0.0, ell[-1], n)
        ut = np.interp(targets, ell, u)
        out = self._pp(ut)
        out[0], out[-1] = self._ends
        return out


def _default_side_split(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # even-count convention: first half top left-to-right, second half bottom
    # right-to-left (reversed here so both run left-to-right)
    n = len(pts)
    if n % 2 != 0:
        raise MalformedAnnotation(
            f"default side split needs an even vertex count, got {n}; pass sides explicitly"
        )
    half = n // 2
    return pts[:half], pts[half:][::-1]


def smooth_boundary(p: Polygon, samples_per_side: int, sides=None) -> Polygon:
    """Densify a two-sided boundary polygon with natural cubic splines.

    Each long side is interpolated by a chord-length-parameterized natural
    cubic spline and resampled to `samples_per_side` points uniform in arc
    length. Corner vertices are preserved exactly.

    Parameters
    ----------
    p : Polygon
    samples_per_side : int
        Points per side in the output; >= 4.
    sides : optional pair of (ni, 2) arrays
        Top and bottom vertex runs, both left-to-right. When omitted, the
        polygon is split by the even-count convention (first half = top).

    Returns
    -------
    Polygon with 2 * samples_per_side vertices: resampled top left-to-right,
    then resampled bottom right-to-left.

    Raises
    ------
    ConfigError
        samples_per_side < 4.
    MalformedAnnotation
        A side with fewer than 2 points.
    """
    if samples_per_side < 4:
        raise ConfigError(f"samples_per_side must be >= 4, got {samples_per_side}")
    if sides is None:
        top, bottom = _default_side_split(p.points)
    else:
        top, bottom = (as_point_array(s, "side") for s in sides)
    if len(top) < 2 or len(bottom) < 2:
        raise MalformedAnnotation("each side needs >= 2 points to smooth")
    new_top = SplineCurve(top).resample(samples_per_side)
    new_bottom = SplineCurve(bottom).resample(samples_per_side)
    return Polygon(np.vstack([new_top, new_bottom[::-1]]))


class Homography:
    """A 3x3 projective plane transform, normalized so h[2][2] = 1."""

    __slots__ = ("h",)

    def __init__(self, h):
        m = np.asarray(h, dtype=np.float64)
        if m.shape != (3, 3):
            raise ConfigError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ConfigError("homography has non-finite entries")
        if abs(m[2, 2]) < 1e-12:
            raise ConfigError("homography h[2][2] too close to zero to normalize")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise ConfigError("homography is not invertible")
        m.flags.writeable = False
        self.h = m

    def apply(self, points) -> np.ndarray:
        """Map (N, 2) points through the homography."""
        pts = as_point_array(points, "points")
        ones = np.ones((len(pts), 1))
        hom = np.hstack([pts, ones]) @ self.h.T
        return hom[:, :2] / hom[:, 2:3]

    def inverse(self) -> "Homography":
        return Homography(np.linalg.inv(self.h))

    def __repr__(self) -> str:
        return f"Homography({self.h.tolist()})"


def perspective_from_left_edge(
    angle_deg: float, image_w: float, image_h: float, focal: float | None = None
) -> Homography:
    """Homography of rotating the image about its left edge, then reprojecting.

    A pinhole camera sits at distance `focal` in front of the left edge, its
    optical axis through the edge's midpoint. The image sheet is rotated by
    `angle_deg` about the left vertical edge, away from the camera, and
    reprojected. Angle 0 gives the identity; the left edge is always fixed.

    Parameters
    ----------
    angle_deg : float in [0, 90)
    image_w, image_h : float
        Source image dimensions in pixels.
    focal : float, optional
        Camera focal length in pixels; defaults to image_w.

    Raises
    ------
    ConfigError
        Angle outside [0, 90), or a non-positive dimension/focal.
    """
    if not (0.0 <= angle_deg < 90.0):
        raise ConfigError(f"angle must be in [0, 90), got {angle_deg}")
    if image_w <= 0 or image_h <= 0:
        raise ConfigError("image dimensions must be positive")
    f = float(image_w) if focal is None else float(focal)
    if f <= 0:
        raise ConfigError(f"focal must be positive, got {f}")
    theta = np.deg2rad(angle_deg)
    sin_t, cos_t = np.sin(theta), np.cos(theta)
    h = np.array(
        [
            [cos_t, 0.0, 0.0],
            [image_h * sin_t / (2.0 * f), 1.0, 0.0],
            [sin_t / f, 0.0, 1.0],
        ]
    )
    return Homography(h)
