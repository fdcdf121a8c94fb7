"""Thin-plate-spline text-shape toolkit.

Fitting and decoding of TPS shape parameters, a Bezier baseline, the border
alignment loss stack with analytic gradients, Gaussian text-center maps,
rasterized IoU/TIoU evaluation, synthetic curved-text generation, and
perspective augmentation.
"""

from .bezier import BezierParams, bernstein, bezier_decode, bezier_fit, bezier_points
from .dataio import (
    ParseResult,
    SideSplit,
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
from .errors import (
    ConfigError,
    DegenerateShape,
    EmptyCorpus,
    IoError,
    MalformedAnnotation,
    SingularFit,
    TpsgeomError,
)
from .geometry import (
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
from .losses import (
    BorderMask,
    BoundarySamples,
    GtcMap,
    ba_loss,
    bilinear_sample,
    boundary_loss_grad,
    boundary_samples,
    corner_loss,
    descend_boundary,
    gradient_check_report,
    instance_border_mask,
    make_border_mask,
    make_gtc,
    reg_loss,
    soft_cross_entropy,
)
from .metrics import FitReport, InstanceScore, fit_evaluate, format_table, iou, tiou
from .tps import (
    FiducialConfig,
    ShapeGrid,
    TpsParams,
    basis_matrix,
    decode,
    decode_points,
    decompose,
    eval_basis,
    fit,
    make_fiducials,
    radial,
    rectification_grid,
    unit_lattice,
)

__version__ = "0.1.0"
