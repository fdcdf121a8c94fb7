"""Border Alignment Loss stack, Gaussian text-center maps, soft cross-entropy.

Everything here is a pure function with analytic gradients where a gradient
is defined; no network machinery. Masks live on their own raster whose cell
(r, c) has center (c + 0.5, r + 0.5) in raster coordinates.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateShape
from .geometry import Polygon, grid_inside, min_distance_to_segments
from .tps import ShapeGrid, TpsParams, basis_matrix, decode, decode_points, unit_lattice

__all__ = [
    "BorderMask",
    "GtcMap",
    "BoundarySamples",
    "make_border_mask",
    "instance_border_mask",
    "bilinear_sample",
    "boundary_samples",
    "ba_loss",
    "corner_loss",
    "reg_loss",
    "make_gtc",
    "soft_cross_entropy",
    "boundary_loss_grad",
    "descend_boundary",
    "gradient_check_report",
]


@dataclass(frozen=True)
class BorderMask:
    """Border-distance field M and its relaxed variant M' on a raster.

    values holds M (1 on the boundary, linear decay to 0 at normalized
    distance t_b); relaxed holds M' (plateau of 1 where M >= t_r, M / t_r
    elsewhere).
    """

    width: int
    height: int
    values: np.ndarray
    relaxed: np.ndarray
    t_b: float
    t_r: float
    text_height_s: float

    def __post_init__(self):
        for name in ("values", "relaxed"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != (self.height, self.width):
                raise ConfigError(f"{name} must be ({self.height}, {self.width})")
            if arr.min() < 0.0 or arr.max() > 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class GtcMap:
    """Gaussian text-center map: a warped Gaussian, zero outside the shape."""

    width: int
    height: int
    values: np.ndarray
    sigma_frac: tuple[float, float]

    def __post_init__(self):
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (self.height, self.width):
            raise ConfigError(f"values must be ({self.height}, {self.width})")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ConfigError("GTC values must lie in [0, 1]")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)


@dataclass(frozen=True)
class BoundarySamples:
    """Decoded boundary points paired with their sampled mask values."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if len(self.points) != len(self.values):
            raise ConfigError("one sampled value per boundary point required")


def make_border_mask(
    boundary,
    s: float,
    width: int,
    height: int,
    t_b: float = 0.6,
    t_r: float = 0.8,
) -> BorderMask:
    """Rasterize the border mask of a smoothed boundary polygon.

    For every raster cell center, d is the exact minimum point-to-segment
    distance to the closed boundary (no distance transform), and

        M  = 0            if d / s >= t_b, else 1 - d / (s * t_b)
        M' = 1            if M >= t_r,     else M / t_r

    Parameters
    ----------
    boundary : Polygon or (N, 2) array, in raster coordinates
    s : instance height in raster units (> 0)
    width, height : raster dims (>= 2 each)
    t_b : distance threshold as a fraction of s (default 0.6)
    t_r : relax threshold (default 0.8), in (0, 1]
    """
    if s <= 0:
        raise ConfigError(f"text height s must be positive, got {s}")
    if t_b <= 0:
        raise ConfigError(f"t_b must be positive, got {t_b}")
    if not (0.0 < t_r <= 1.0):
        raise ConfigError(f"t_r must be in (0, 1], got {t_r}")
    if width < 2 or height < 2:
        raise ConfigError(f"raster dims must be >= 2, got {width}x{height}")
    pts = boundary.points if isinstance(boundary, Polygon) else np.asarray(boundary, float)

    cx = np.arange(width) + 0.5
    cy = np.arange(height) + 0.5
    gx, gy = np.meshgrid(cx, cy)
    centers = np.column_stack([gx.ravel(), gy.ravel()])
    d = min_distance_to_segments(centers, pts, closed=True).reshape(height, width)

    ratio = d / (s * t_b)
    values = np.where(d / s >= t_b, 0.0, 1.0 - ratio)
    relaxed = np.where(values >= t_r, 1.0, values / t_r)
    return BorderMask(width, height, values, relaxed, t_b, t_r, s)


def instance_border_mask(
    boundary,
    s: float,
    t_b: float = 0.6,
    t_r: float = 0.8,
    scale: float = 1.0,
    pad: float | None = None,
) -> tuple[BorderMask, np.ndarray]:
    """Build a border mask on a bbox-local raster around an instance.

    Returns (mask, origin): raster coordinates are (p - origin) * scale for an
    image point p. The default padding covers the whole decay ramp.
    """
    if scale <= 0:
        raise ConfigError(f"scale must be positive, got {scale}")
    pts = boundary.points if isinstance(boundary, Polygon) else np.asarray(boundary, float)
    if pad is None:
        pad = 1.05 * s * t_b + 8.0
    lo = pts.min(axis=0) - pad
    hi = pts.max(axis=0) + pad
    origin = np.floor(lo)
    width = int(np.ceil((hi[0] - origin[0]) * scale)) + 1
    height = int(np.ceil((hi[1] - origin[1]) * scale)) + 1
    mask = make_border_mask((pts - origin) * scale, s * scale, width, height, t_b, t_r)
    return mask, origin


def bilinear_sample(values: np.ndarray, points) -> tuple[np.ndarray, np.ndarray]:
    """Bilinearly interpolate a raster at points, with analytic gradients.

    Interpolation is over the 4 surrounding cell centers; cell (r, c) has
    center (c + 0.5, r + 0.5). Points beyond the outermost cell centers clamp
    per axis to the border value with zero gradient along the clamped axis.
    At an exact cell edge the right/lower cell pair is used (right-continuous
    choice), so gradients there are one-sided.

    Returns
    -------
    (values, grads)
        (M,) interpolated values and (M, 2) gradients d value / d point.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 2 or v.shape[0] < 2 or v.shape[1] < 2:
        raise ConfigError(f"raster must be 2-D with dims >= 2, got shape {v.shape}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ConfigError(f"points must be (M, 2), got {pts.shape}")
    h, w = v.shape

    fx = pts[:, 0] - 0.5
    fy = pts[:, 1] - 0.5
    live_x = (fx > 0.0) & (fx < w - 1.0)
    live_y = (fy > 0.0) & (fy < h - 1.0)
    fx = np.clip(fx, 0.0, w - 1.0)
    fy = np.clip(fy, 0.0, h - 1.0)
    c0 = np.minimum(np.floor(fx).astype(np.intp), w - 2)
    r0 = np.minimum(np.floor(fy).astype(np.intp), h - 2)
    tx = fx - c0
    ty = fy - r0

    v00 = v[r0, c0]
    v01 = v[r0, c0 + 1]
    v10 = v[r0 + 1, c0]
    v11 = v[r0 + 1, c0 + 1]
    vals = (1 - ty) * ((1 - tx) * v00 + tx * v01) + ty * ((1 - tx) * v10 + tx * v11)
    gx = np.where(live_x, (1 - ty) * (v01 - v00) + ty * (v11 - v10), 0.0)
    gy = np.where(live_y, (1 - tx) * (v10 - v00) + tx * (v11 - v01), 0.0)
    return vals, np.column_stack([gx, gy])


def boundary_samples(mask: BorderMask, points) -> BoundarySamples:
    """Sample the relaxed mask at boundary points (values only, for inspection)."""
    vals, _ = bilinear_sample(mask.relaxed, points)
    return BoundarySamples(np.asarray(points, dtype=np.float64), vals)


def ba_loss(mask: BorderMask, points) -> tuple[float, np.ndarray]:
    """Border alignment loss over decoded boundary points.

    loss = (1/|B|) sum (1 - M'(p)); the per-point gradient is the negated
    sampling gradient divided by |B|. Points on the M' = 1 plateau contribute
    no loss and no gradient.

    Returns (loss, (M, 2) gradients with respect to the points).
    """
    pts = np.asarray(points, dtype=np.float64)
    if len(pts) < 1:
        raise ConfigError("ba_loss needs at least one boundary point")
    vals, grads = bilinear_sample(mask.relaxed, pts)
    loss = float(np.mean(1.0 - vals))
    return loss, -grads / len(pts)


def corner_loss(pred_corners, gt_corners) -> tuple[float, np.ndarray]:
    """Mean Euclidean distance of the 4 corners to their ground truth.

    loss = (1/4) sum ||p_i - g_i||; gradient per corner is the unit offset
    divided by 4, zero at exact coincidence.
    """
    pred = np.asarray(pred_corners, dtype=np.float64)
    gt = np.asarray(gt_corners, dtype=np.float64)
    if pred.shape != (4, 2) or gt.shape != (4, 2):
        raise ConfigError("corner_loss needs two (4, 2) arrays")
    diff = pred - gt
    norms = np.linalg.norm(diff, axis=1)
    loss = float(np.mean(norms))
    safe = np.where(norms > 1e-300, norms, 1.0)
    grads = np.where(norms[:, None] > 1e-300, diff / (4.0 * safe[:, None]), 0.0)
    return loss, grads


def _shape_boundary_and_corners(shape) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(shape, TpsParams):
        grid = decode(shape, 3, 32)
    elif isinstance(shape, ShapeGrid):
        grid = shape
    else:
        raise ConfigError(f"expected TpsParams or ShapeGrid, got {type(shape).__name__}")
    return grid.boundary_points(), grid.corners()


def reg_loss(instances) -> float:
    """Area-normalized batch regression loss.

    instances is a sequence of (shape, mask, gt_corners, area) tuples where
    shape is a TpsParams or ShapeGrid whose raster frame matches the mask.
    Returns (1/N) sum (L_BA + L_cor) / area. The exactly rounded summation
    makes the result independent of instance ordering.
    """
    items = list(instances)
    if not items:
        raise ConfigError("reg_loss needs at least one instance")
    terms = []
    for shape, mask, gt_corners, area in items:
        if area <= 0:
            raise DegenerateShape(f"instance area must be positive, got {area}")
        boundary, corners = _shape_boundary_and_corners(shape)
        ba, _ = ba_loss(mask, boundary)
        cor, _ = corner_loss(corners, np.asarray(gt_corners, dtype=np.float64))
        terms.append((ba + cor) / float(area))
    return math.fsum(terms) / len(items)


def make_gtc(
    params: TpsParams,
    width: int,
    height: int,
    sigma_frac: tuple[float, float] = (0.25, 0.25),
    oversample: int = 4,
) -> GtcMap:
    """Warp a unit-rectangle Gaussian through the shape transform.

    A Gaussian centered at (0.5, 0.5) with per-axis sigma `sigma_frac` (in
    unit-rectangle fractions, peak value 1) is evaluated on a uniform
    cell-centered lattice over the unit rectangle, each lattice point is
    mapped through the shape transform, and the warped values are splatted
    to nearest raster cells with max-combine, then zeroed outside the
    decoded boundary polygon.

    The lattice has `oversample` points per axis for every raster cell the
    decoded bounding box spans, so sample images stay dense inside the
    shape no matter how the deformation stretches. Max-combine takes the
    brightest sample in each cell, which sits at most half a lattice step
    plus the sub-cell offset away from the cell center; the resulting
    overshoot is bounded by the Gaussian's peak slope times half a cell
    and shrinks as the raster grows.
    """
    if width < 2 or height < 2:
        raise ConfigError(f"raster dims must be >= 2, got {width}x{height}")
    sx, sy = float(sigma_frac[0]), float(sigma_frac[1])
    if sx <= 0 or sy <= 0:
        raise ConfigError(f"sigma_frac must be positive, got {sigma_frac}")
    if oversample < 1:
        raise ConfigError(f"oversample must be >= 1, got {oversample}")

    boundary = decode(params, 3, 32).boundary_points()
    lo = boundary.min(axis=0)
    hi = boundary.max(axis=0)
    x0 = int(np.clip(np.floor(lo[0]), 0, width - 1))
    x1 = int(np.clip(np.ceil(hi[0]), x0 + 1, width))
    y0 = int(np.clip(np.floor(lo[1]), 0, height - 1))
    y1 = int(np.clip(np.ceil(hi[1]), y0 + 1, height))
    nx = min((x1 - x0) * oversample, 4096)
    ny = min((y1 - y0) * oversample, 4096)

    ux = (np.arange(nx) + 0.5) / nx
    uy = (np.arange(ny) + 0.5) / ny
    gauss = np.outer(
        np.exp(-((uy - 0.5) ** 2) / (2.0 * sy * sy)),
        np.exp(-((ux - 0.5) ** 2) / (2.0 * sx * sx)),
    ).ravel()
    gx, gy = np.meshgrid(ux, uy)
    src = np.column_stack([gx.ravel(), gy.ravel()])
    mapped = decode_points(params, src)
    ix = np.floor(mapped[:, 0]).astype(np.intp)
    iy = np.floor(mapped[:, 1]).astype(np.intp)
    keep = (ix >= 0) & (ix < width) & (iy >= 0) & (iy < height)

    out = np.zeros((height, width))
    np.maximum.at(out, (iy[keep], ix[keep]), gauss[keep])
    inside = grid_inside(boundary, np.arange(width) + 0.5, np.arange(height) + 0.5)
    out[~inside] = 0.0
    return GtcMap(width, height, out, (sx, sy))


def soft_cross_entropy(y, p) -> float:
    """Soft binary cross-entropy, summed over elements.

    -sum(y log p + (1 - y) log(1 - p)) with p clamped to [1e-7, 1 - 1e-7].
    For fixed y the minimizer over p is p = y.
    """
    y = np.asarray(y, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if y.shape != p.shape:
        raise ConfigError(f"shape mismatch: y {y.shape} vs p {p.shape}")
    if y.size == 0:
        return 0.0
    if y.min() < 0.0 or y.max() > 1.0:
        raise ConfigError("targets y must lie in [0, 1]")
    p = np.clip(p, 1e-7, 1.0 - 1e-7)
    return float(-np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def boundary_loss_grad(
    params: TpsParams,
    mask: BorderMask,
    gt_corners,
    rows: int = 3,
    cols: int = 32,
) -> tuple[float, np.ndarray]:
    """L_BA + L_cor of a decoded boundary, with the gradient in parameter space.

    The decoded boundary points are linear in T, so the chain rule reduces to
    accumulating outer products of per-point gradients with basis rows.
    Returns (loss, (2, k+3) gradient with respect to T). The mask raster frame
    must match the decode frame.
    """
    unit = ShapeGrid(rows, cols, unit_lattice(rows, cols))
    src_b = unit.boundary_points()
    src_c = unit.corners()
    phi_b = basis_matrix(params.config, src_b)
    phi_c = basis_matrix(params.config, src_c)
    pts_b = phi_b @ params.t.T
    pts_c = phi_c @ params.t.T

    ba, g_b = ba_loss(mask, pts_b)
    cor, g_c = corner_loss(pts_c, np.asarray(gt_corners, dtype=np.float64))
    grad_t = g_b.T @ phi_b + g_c.T @ phi_c
    return ba + cor, grad_t


def descend_boundary(
    params: TpsParams,
    mask: BorderMask,
    gt_corners,
    steps: int = 200,
    lr: float = 0.3,
    rows: int = 2,
    cols: int = 32,
) -> tuple[TpsParams, list[float]]:
    """First-order descent on the combined boundary loss in parameter space.

    Adam-style updates (decay 0.9 / 0.999 with bias correction). The corner
    term is a mean of unsquared distances, so its gradient keeps a constant
    magnitude arbitrarily close to the optimum; raw-gradient steps stall there
    because every direction that helps the border term first hurts a corner.
    The running moment estimates average those alternating corner kicks away
    while the coherent border pull accumulates.

    Returns (updated params, per-step loss values including the initial one).
    The loss is not forced monotone step to step; over a full run it ends
    below where it started.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    if lr <= 0:
        raise ConfigError(f"lr must be positive, got {lr}")
    gt = np.asarray(gt_corners, dtype=np.float64)
    t = params.t.copy()
    cfg = params.config
    m = np.zeros_like(t)
    v = np.zeros_like(t)
    b1, b2, eps = 0.9, 0.999, 1e-8
    loss, grad = boundary_loss_grad(TpsParams(t, cfg), mask, gt, rows, cols)
    trace = [loss]
    for it in range(1, steps + 1):
        m = b1 * m + (1.0 - b1) * grad
        v = b2 * v + (1.0 - b2) * grad * grad
        m_hat = m / (1.0 - b1**it)
        v_hat = v / (1.0 - b2**it)
        t = t - lr * m_hat / (np.sqrt(v_hat) + eps)
        loss, grad = boundary_loss_grad(TpsParams(t, cfg), mask, gt, rows, cols)
        trace.append(loss)
    return TpsParams(t, cfg), trace


def _rel_errors(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-9)
    err = np.abs(analytic - numeric) / denom
    # both effectively zero: agreement, not error
    err[np.maximum(np.abs(analytic), np.abs(numeric)) < 1e-9] = 0.0
    return err


def gradient_check_report(seed: int = 0, trials: int = 1000, corrupt: bool = False) -> dict:
    """Finite-difference check of ba_loss and corner_loss gradients.

    Uses central differences with h = 1e-5; sampled points keep away from
    bilinear cell edges and corner coincidences, where the one-sided gradient
    convention makes finite differences meaningless. `corrupt` deliberately
    scales the analytic ba gradients to exercise the failure path.

    Returns a dict with max relative errors, the tolerance, and an "ok" flag.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    h = 1e-5
    tol = 1e-3
    ba_max = 0.0
    corner_max = 0.0

    mask_h, mask_w = 24, 32
    raster = rng.random((mask_h, mask_w))
    mask = BorderMask(mask_w, mask_h, raster, raster, 0.6, 0.8, 10.0)

    for _ in range(trials):
        m = int(rng.integers(1, 9))
        cells = np.column_stack(
            [rng.integers(0, mask_w - 1, m), rng.integers(0, mask_h - 1, m)]
        ).astype(np.float64)
        frac = rng.uniform(0.05, 0.95, (m, 2))
        pts = cells + 0.5 + frac

        _, grads = ba_loss(mask, pts)
        if corrupt:
            grads = grads * 1.02 + 1e-4
        numeric = np.zeros_like(grads)
        for i in range(m):
            for axis in range(2):
                for sign, store in ((1.0, 1), (-1.0, -1)):
                    shifted = pts.copy()
                    shifted[i, axis] += sign * h
                    val, _ = ba_loss(mask, shifted)
                    numeric[i, axis] += store * val
        numeric /= 2.0 * h
        ba_max = max(ba_max, float(_rel_errors(grads, numeric).max()))

        pred = rng.uniform(0.0, 100.0, (4, 2))
        gt = pred + rng.uniform(1.0, 20.0, (4, 2)) * rng.choice([-1.0, 1.0], (4, 2))
        _, cgrads = corner_loss(pred, gt)
        cnumeric = np.zeros_like(cgrads)
        for i in range(4):
            for axis in range(2):
                for sign, store in ((1.0, 1), (-1.0, -1)):
                    shifted = pred.copy()
                    shifted[i, axis] += sign * h
                    val, _ = corner_loss(shifted, gt)
                    cnumeric[i, axis] += store * val
        cnumeric /= 2.0 * h
        corner_max = max(corner_max, float(_rel_errors(cgrads, cnumeric).max()))

    return {
        "trials": trials,
        "h": h,
        "tolerance": tol,
        "ba_max_rel_error": ba_max,
        "corner_max_rel_error": corner_max,
        "ok": ba_max < tol and corner_max < tol,
    }
