"""Thin-plate-spline shape representation.

A shape is encoded by a 2x(k+3) parameter matrix T acting on the basis
phi(x, y) = [1, x, y, r(d_1), ..., r(d_k)] where d_i is the distance from
(x, y) to the i-th fiducial point on the unit rectangle [0,1]^2 and
r(d) = d^2 ln d (r(0) = 0). Decoding maps unit-rectangle points to image
coordinates as (x', y')^T = T . phi(x, y).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .errors import ConfigError, SingularFit
from .geometry import Polygon, as_point_array

__all__ = [
    "FiducialConfig",
    "TpsParams",
    "ShapeGrid",
    "DISTRIBUTIONS",
    "radial",
    "make_fiducials",
    "eval_basis",
    "basis_matrix",
    "unit_lattice",
    "decode",
    "decode_points",
    "fit",
    "decompose",
    "rectification_grid",
]

DISTRIBUTIONS = ("edge", "cross", "center")

_CORNERS = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def radial(d):
    """TPS radial basis r(d) = d^2 ln d, with r(0) = 0."""
    d = np.asarray(d, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(d > 0.0, d * d * np.log(np.where(d > 0.0, d, 1.0)), 0.0)
    return out


@dataclass(frozen=True)
class FiducialConfig:
    """The k fixed points on the unit rectangle that define the TPS basis."""

    distribution: str
    k: int
    fiducials: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        fid = as_point_array(self.fiducials, "fiducials")
        if len(fid) != self.k:
            raise ConfigError(f"expected {self.k} fiducials, got {len(fid)}")
        present = {tuple(np.round(p, 12)) for p in fid}
        for corner in _CORNERS:
            if tuple(corner) not in present:
                raise ConfigError(f"fiducials must include rectangle corner {tuple(corner)}")
        fid.flags.writeable = False
        object.__setattr__(self, "fiducials", fid)
        # classical interpolation system [[K, P], [P^T, 0]] must be solvable
        kmat = radial(cdist(fid, fid))
        pmat = np.hstack([np.ones((self.k, 1)), fid])
        sys = np.zeros((self.k + 3, self.k + 3))
        sys[: self.k, : self.k] = kmat
        sys[: self.k, self.k :] = pmat
        sys[self.k :, : self.k] = pmat.T
        if np.linalg.cond(sys) >= 1e12:
            raise ConfigError("fiducial layout makes the TPS system singular")

    def basis_for_lattice(self, rows: int, cols: int) -> np.ndarray:
        """Basis matrix over the predefined rows x cols unit lattice, memoized."""
        key = (rows, cols)
        cached = self._cache.get(key)
        if cached is None:
            cached = basis_matrix(self, unit_lattice(rows, cols).reshape(-1, 2))
            cached.flags.writeable = False
            self._cache[key] = cached
        return cached


def make_fiducials(distribution: str, k: int = 8) -> FiducialConfig:
    """Build one of the three fiducial layouts on the unit rectangle.

    edge   : k/2 points evenly spaced on the top edge, k/2 on the bottom.
    center : the 4 corners plus k-4 points evenly spaced on the midline y=0.5.
    cross  : the 4 corners plus k-4 interior points at x = i/(k-3) cycling
             top edge, midline, midline, bottom edge, so edge anchors and
             midline anchors interleave along the run of the text.

    All layouts contain the 4 rectangle corners.

    Raises
    ------
    ConfigError
        Unknown distribution, k odd, or k < 4.
    """
    name = str(distribution).lower()
    if name not in DISTRIBUTIONS:
        raise ConfigError(f"unknown distribution {distribution!r}, expected one of {DISTRIBUTIONS}")
    if k < 4 or k % 2 != 0:
        raise ConfigError(f"k must be even and >= 4, got {k}")

    if name == "edge":
        xs = np.linspace(0.0, 1.0, k // 2)
        top = np.column_stack([xs, np.zeros(k // 2)])
        bottom = np.column_stack([xs, np.ones(k // 2)])
        pts = np.vstack([top, bottom])
    elif name == "center":
        xs = np.arange(1, k - 3) / (k - 3)
        mid = np.column_stack([xs, np.full(k - 4, 0.5)])
        pts = np.vstack([_CORNERS, mid])
    else:
        xs = np.arange(1, k - 3) / (k - 3)
        cycle = np.array([0.0, 0.5, 0.5, 1.0])
        ys = cycle[np.arange(k - 4) % 4]
        pts = np.vstack([_CORNERS, np.column_stack([xs, ys])])
    return FiducialConfig(name, k, pts)


def basis_matrix(cfg: FiducialConfig, points) -> np.ndarray:
    """Evaluate phi row-wise for (M, 2) unit-rectangle points; returns (M, k+3)."""
    pts = as_point_array(points, "basis points")
    r = radial(cdist(pts, cfg.fiducials))
    return np.hstack([np.ones((len(pts), 1)), pts, r])


def eval_basis(cfg: FiducialConfig, p) -> np.ndarray:
    """Basis vector phi = [1, x, y, r(d_1), ..., r(d_k)] for one point."""
    return basis_matrix(cfg, np.asarray(p, dtype=np.float64).reshape(1, 2))[0]


@dataclass(frozen=True)
class TpsParams:
    """The 2x(k+3) parameter matrix T plus the fiducial config it refers to.

    Row 0 produces x', row 1 produces y'. Columns are [c, a1, a2, w_1..w_k].
    """

    t: np.ndarray
    config: FiducialConfig

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.float64)
        expected = (2, self.config.k + 3)
        if t.shape != expected:
            raise ConfigError(f"params must have shape {expected}, got {t.shape}")
        if not np.all(np.isfinite(t)):
            raise ConfigError("params contain non-finite entries")
        t = t.copy()
        t.flags.writeable = False
        object.__setattr__(self, "t", t)

    def to_dict(self) -> dict:
        return {
            "k": self.config.k,
            "distribution": self.config.distribution,
            "t": [list(map(float, row)) for row in self.t],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TpsParams":
        try:
            cfg = make_fiducials(d["distribution"], int(d["k"]))
            t = np.asarray(d["t"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad TPS params object: {exc}") from exc
        return cls(t, cfg)


@dataclass(frozen=True)
class ShapeGrid:
    """A rows x cols lattice of image points decoded from the unit rectangle."""

    rows: int
    cols: int
    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (self.rows, self.cols, 2):
            raise ConfigError(f"grid points must be ({self.rows}, {self.cols}, 2), got {pts.shape}")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    def corners(self) -> np.ndarray:
        """The 4 grid corners in (tl, tr, br, bl) order."""
        p = self.points
        return np.array([p[0, 0], p[0, -1], p[-1, -1], p[-1, 0]])

    def boundary_points(self) -> np.ndarray:
        """Perimeter traversal: top row, right column, bottom row, left column."""
        p = self.points
        top = p[0, :]
        right = p[1:, -1]
        bottom = p[-1, -2::-1]
        left = p[-2:0:-1, 0]
        return np.vstack([top, right, bottom, left])

    def boundary(self) -> Polygon:
        return Polygon(self.boundary_points())


def unit_lattice(rows: int, cols: int) -> np.ndarray:
    """The predefined uniform (rows, cols, 2) lattice on the unit rectangle."""
    if rows < 2 or cols < 2:
        raise ConfigError(f"lattice dims must be >= 2, got {rows}x{cols}")
    x = np.linspace(0.0, 1.0, cols)
    y = np.linspace(0.0, 1.0, rows)
    gx, gy = np.meshgrid(x, y)
    return np.stack([gx, gy], axis=-1)


def decode_points(params: TpsParams, points) -> np.ndarray:
    """Map (M, 2) unit-rectangle points to image coordinates via T . phi."""
    phi = basis_matrix(params.config, points)
    return phi @ params.t.T


def decode(params: TpsParams, grid_rows: int = 3, grid_cols: int = 32) -> ShapeGrid:
    """Decode T over the predefined unit lattice into an image-space grid.

    The default 3x32 grid's perimeter is the 66-point boundary polygon used
    for losses and evaluation.
    """
    phi = params.config.basis_for_lattice(grid_rows, grid_cols)
    pts = (phi @ params.t.T).reshape(grid_rows, grid_cols, 2)
    return ShapeGrid(grid_rows, grid_cols, pts)


def rectification_grid(params: TpsParams, out_h: int, out_w: int) -> ShapeGrid:
    """Sampling grid for rectification: an out_h x out_w lattice decoded by T.

    Sampling the source image at these points produces the straightened crop.
    """
    return decode(params, out_h, out_w)


def fit(
    cfg: FiducialConfig,
    sources,
    targets,
    regularization: float = 1e-4,
) -> tuple[TpsParams, float]:
    """Least-squares fit of T from unit-rectangle/image correspondences.

    Minimizes sum ||T phi(x_j, y_j) - (x'_j, y'_j)||^2 + regularization ||w||^2
    with the ridge applied to the radial weight block only, never the affine
    block. Solved by normal equations with a Cholesky factorization; falls
    back to column-pivoted QR when the normal matrix condition exceeds 1e10.

    Parameters
    ----------
    cfg : FiducialConfig
    sources : (m, 2) array of points on the unit rectangle
    targets : (m, 2) array of corresponding image points
    regularization : nonnegative ridge weight (default 1e-4)

    Returns
    -------
    (params, residual)
        residual is the root-mean-square point distance over correspondences.

    Raises
    ------
    SingularFit
        m < k+3, or condition number above 1e12 after regularization.
    ConfigError
        Negative regularization or mismatched input lengths.
    """
    src = as_point_array(sources, "sources")
    dst = as_point_array(targets, "targets")
    if len(src) != len(dst):
        raise ConfigError(f"got {len(src)} sources but {len(dst)} targets")
    if regularization < 0:
        raise ConfigError(f"regularization must be >= 0, got {regularization}")
    n = cfg.k + 3
    if len(src) < n:
        raise SingularFit(f"need at least {n} correspondences for k={cfg.k}, got {len(src)}")

    phi = basis_matrix(cfg, src)
    ridge = np.zeros(n)
    ridge[3:] = regularization
    normal = phi.T @ phi + np.diag(ridge)
    cond = np.linalg.cond(normal)
    if cond > 1e12:
        raise SingularFit(f"normal matrix condition {cond:.3e} exceeds 1e12")
    if cond > 1e10:
        # augment with sqrt-ridge rows so the QR path solves the same problem
        aug_rows = np.diag(np.sqrt(ridge))[3:]
        a = np.vstack([phi, aug_rows])
        b = np.vstack([dst, np.zeros((n - 3, 2))])
        x, _, rank, _ = scipy.linalg.lstsq(a, b, lapack_driver="gelsy")
        if rank < n:
            raise SingularFit(f"rank-deficient system: rank {rank} < {n}")
    else:
        chol = scipy.linalg.cho_factor(normal)
        x = scipy.linalg.cho_solve(chol, phi.T @ dst)

    params = TpsParams(x.T, cfg)
    diff = phi @ x - dst
    residual = float(np.sqrt(np.mean(np.sum(diff * diff, axis=1))))
    return params, residual


def decompose(params: TpsParams) -> tuple[np.ndarray, np.ndarray]:
    """Split T into the global affine block [c | a1 | a2] and the local weights.

    decode(params) equals affine . [1, x, y]^T plus weights . [r(d_1)..r(d_k)]^T
    pointwise; the split is by column.
    """
    return params.t[:, :3].copy(), params.t[:, 3:].copy()
