"""Two-curve Bezier text representation, the head-to-head baseline.

Each long side of the text is an independent Bezier curve (degree 3 by
default, so 8 control points per instance). Fitting consumes the same
unit-rectangle correspondences as the TPS fit so the two representations can
be compared on identical inputs.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import comb

from .errors import ConfigError, SingularFit
from .geometry import Polygon, as_point_array

__all__ = ["BezierParams", "bernstein", "bezier_decode", "bezier_fit", "bezier_points"]


def bernstein(i: int, n: int, t):
    """Bernstein basis polynomial C(n,i) t^i (1-t)^(n-i).

    Accepts scalar or array t in [0, 1].
    """
    if not (0 <= i <= n):
        raise ConfigError(f"bernstein index must satisfy 0 <= i <= n, got i={i}, n={n}")
    t = np.asarray(t, dtype=np.float64)
    c = comb(n, i, exact=True)
    out = c * t**i * (1.0 - t) ** (n - i)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class BezierParams:
    """Control points for the two boundary curves, top and bottom."""

    top: np.ndarray
    bottom: np.ndarray

    def __post_init__(self):
        top = as_point_array(self.top, "top control points")
        bottom = as_point_array(self.bottom, "bottom control points")
        if len(top) != len(bottom) or len(top) < 2:
            raise ConfigError(
                f"sides need equal control counts >= 2, got {len(top)} and {len(bottom)}"
            )
        top.flags.writeable = False
        bottom.flags.writeable = False
        object.__setattr__(self, "top", top)
        object.__setattr__(self, "bottom", bottom)

    @property
    def degree(self) -> int:
        return len(self.top) - 1

    def to_dict(self) -> dict:
        return {
            "top": [list(map(float, p)) for p in self.top],
            "bottom": [list(map(float, p)) for p in self.bottom],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BezierParams":
        try:
            return cls(np.asarray(d["top"], float), np.asarray(d["bottom"], float))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad Bezier params object: {exc}") from exc


def _design(n: int, t: np.ndarray) -> np.ndarray:
    # (len(t), n+1) Bernstein design matrix
    return np.column_stack([bernstein(i, n, t) for i in range(n + 1)])


def _eval_curve(control: np.ndarray, t: np.ndarray) -> np.ndarray:
    return _design(len(control) - 1, t) @ control


def bezier_decode(params: BezierParams, samples_per_side: int) -> Polygon:
    """Sample both curves at uniform t and assemble the closed boundary.

    Returns a polygon of 2 * samples_per_side points: top curve forward, then
    bottom curve reversed. Curve endpoints equal the endpoint control points
    exactly (Bernstein basis collapses at t = 0 and t = 1).
    """
    if samples_per_side < 2:
        raise ConfigError(f"samples_per_side must be >= 2, got {samples_per_side}")
    t = np.linspace(0.0, 1.0, samples_per_side)
    top = _eval_curve(params.top, t)
    bottom = _eval_curve(params.bottom, t)
    return Polygon(np.vstack([top, bottom[::-1]]))


def bezier_points(params: BezierParams, sources) -> np.ndarray:
    """Evaluate the two curves at correspondence sources.

    Sources use the same convention as the fit: (t, 0) addresses the top curve
    at parameter t, (t, 1) the bottom curve. Returns the (M, 2) curve points.
    """
    src = as_point_array(sources, "sources")
    on_top = src[:, 1] == 0.0
    on_bottom = src[:, 1] == 1.0
    if not np.all(on_top | on_bottom):
        raise ConfigError("sources must lie on the unit rectangle's top or bottom edge")
    out = np.empty_like(src)
    out[on_top] = _eval_curve(params.top, src[on_top, 0])
    out[on_bottom] = _eval_curve(params.bottom, src[on_bottom, 0])
    return out


def bezier_fit(sources, targets, degree: int = 3) -> tuple[BezierParams, float]:
    """Least-squares Bezier fit from unit-rectangle correspondences.

    Sources label each target with its side and arc-length parameter: a source
    (t, 0) is a top-side point at parameter t, (t, 1) a bottom-side point.
    Endpoint control points are pinned to the extreme-parameter points of each
    side (the corners); only interior control points are solved for.

    Returns
    -------
    (params, residual)
        residual is the root-mean-square point distance over all
        correspondences, same convention as the TPS fit.

    Raises
    ------
    ConfigError
        degree < 1 or a source point not on the top/bottom edge.
    SingularFit
        A side with fewer than degree+1 points or a rank-deficient system.
    """
    if degree < 1:
        raise ConfigError(f"degree must be >= 1, got {degree}")
    src = as_point_array(sources, "sources")
    dst = as_point_array(targets, "targets")
    if len(src) != len(dst):
        raise ConfigError(f"got {len(src)} sources but {len(dst)} targets")
    on_top = src[:, 1] == 0.0
    on_bottom = src[:, 1] == 1.0
    if not np.all(on_top | on_bottom):
        raise ConfigError("bezier fit needs sources on the unit rectangle's top or bottom edge")

    controls = []
    sq_sum = 0.0
    for side_mask in (on_top, on_bottom):
        t = src[side_mask, 0]
        pts = dst[side_mask]
        if len(t) < degree + 1:
            raise SingularFit(f"side needs >= {degree + 1} points, got {len(t)}")
        order = np.argsort(t, kind="stable")
        t, pts = t[order], pts[order]
        first, last = pts[0], pts[-1]

        design = _design(degree, t)
        if degree == 1:
            control = np.vstack([first, last])
        else:
            rhs = pts - np.outer(design[:, 0], first) - np.outer(design[:, degree], last)
            interior, _, rank, _ = np.linalg.lstsq(design[:, 1:degree], rhs, rcond=None)
            if rank < degree - 1:
                raise SingularFit(f"rank-deficient bezier system: rank {rank} < {degree - 1}")
            control = np.vstack([first, interior, last])
        controls.append(control)
        diff = _design(degree, t) @ control - pts
        sq_sum += float(np.sum(diff * diff))

    params = BezierParams(controls[0], controls[1])
    residual = float(np.sqrt(sq_sum / len(src)))
    return params, residual
