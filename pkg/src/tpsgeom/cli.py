"""Command-line surface: fit, eval, masks, augment, rectify, viz, losscheck.

Config precedence is flag > TPSGEOM_<NAME> environment variable > built-in
default. Exit codes: 0 success, 1 check failure, 2 input error. Progress and
warnings go to stderr; results and tables to stdout. Output files are written
atomically.
"""

import argparse
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import dataio, losses, metrics
from .bezier import BezierParams, bezier_decode, bezier_fit, bezier_points
from .errors import ConfigError, TpsgeomError
from .geometry import Polygon, perspective_from_left_edge, smooth_boundary
from .tps import TpsParams, decode, decode_points, fit, make_fiducials, rectification_grid

PROG = "tpsgeom"


def _env(name: str, fallback, cast):
    raw = os.environ.get("TPSGEOM_" + name)
    if raw is None:
        return fallback
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad TPSGEOM_{name} value {raw!r}: {exc}") from exc


def _threads(value) -> int:
    if value == "auto":
        return os.cpu_count() or 1
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError(f"threads must be >= 1 or 'auto', got {value}")
    return n


def _angles(value) -> list[float]:
    try:
        return [float(v) for v in str(value).split(",") if v.strip() != ""]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad angle list {value!r}") from exc


def _safe_name(ident: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]", "_", ident)


def _add_input_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("annotations", help="annotation file (generic JSON or ctw1500 text)")
    p.add_argument(
        "--format",
        choices=("generic", "ctw1500"),
        default=_env("FORMAT", "generic", str),
        help="annotation format (default: %(default)s)",
    )


def _add_fit_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--rep",
        choices=("tps", "bezier"),
        default=_env("REP", "tps", str),
        help="shape representation (default: %(default)s)",
    )
    p.add_argument(
        "--distribution",
        choices=("edge", "cross", "center"),
        default=_env("DISTRIBUTION", "cross", str),
        help="fiducial distribution for tps (default: %(default)s)",
    )
    p.add_argument(
        "--k",
        type=int,
        default=_env("K", 8, int),
        help="number of fiducial points (default: %(default)s)",
    )
    p.add_argument(
        "--per-side",
        type=int,
        default=_env("PER_SIDE", 32, int),
        help="correspondence points per side (default: %(default)s)",
    )
    p.add_argument(
        "--regularization",
        type=float,
        default=_env("REGULARIZATION", 1e-4, float),
        help="ridge weight on the radial block (default: %(default)s)",
    )


def _add_out_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--out",
        default=_env("OUT", "tpsgeom-out", str),
        help="output directory (default: %(default)s)",
    )


def _add_threads_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--threads",
        type=_threads,
        default=_env("THREADS", 1, _threads),
        help="worker threads, or 'auto' (default: %(default)s)",
    )


def _load(args) -> list:
    result = dataio.parse_annotations(args.annotations, args.format)
    for warning in result.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    return result.instances


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _map(threads: int, fn, items):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def _fit_config(args):
    """Validate shared fit settings once, so mistakes exit 2 instead of
    showing up as per-instance failures. Returns the fiducial config, or
    None for the bezier representation."""
    if args.per_side < 2:
        raise ConfigError(f"--per-side must be >= 2, got {args.per_side}")
    if args.regularization < 0:
        raise ConfigError(f"--regularization must be >= 0, got {args.regularization}")
    if args.rep == "tps":
        return make_fiducials(args.distribution, args.k)
    return None


def _fit_instance(inst, args, cfg):
    split = dataio.split_sides(inst)
    sources, targets = dataio.make_correspondences(split, args.per_side)
    if cfg is not None:
        params, residual = fit(cfg, sources, targets, args.regularization)
    else:
        params, residual = bezier_fit(sources, targets)
    return params, residual


def cmd_fit(args) -> int:
    cfg = _fit_config(args)
    instances = _load(args)
    out = _outdir(args)

    def run(inst):
        try:
            params, residual = _fit_instance(inst, args, cfg)
            path = os.path.join(out, f"{_safe_name(inst.id)}.{args.rep}.json")
            dataio.atomic_write_text(path, json.dumps(params.to_dict(), indent=2) + "\n")
            return (inst.id, residual, None)
        except TpsgeomError as exc:
            return (inst.id, None, f"{type(exc).__name__}: {exc}")

    results = _map(args.threads, run, instances)
    ok = [(i, r) for i, r, err in results if err is None]
    failed = [(i, err) for i, _, err in results if err is not None]

    width = max(len(i) for i, _, _ in results)
    print(f"{'id'.ljust(width)}  residual")
    for ident, residual, err in results:
        detail = f"{residual:.6g}" if err is None else f"FAILED ({err})"
        print(f"{ident.ljust(width)}  {detail}")
    mean_residual = float(np.mean([r for _, r in ok])) if ok else None
    if mean_residual is not None:
        print(f"mean residual over {len(ok)} instances: {mean_residual:.6g}")
    summary = {
        "rep": args.rep,
        "instances": [{"id": i, "residual": r} for i, r in ok],
        "failures": [[i, e] for i, e in failed],
        "mean_residual": mean_residual,
    }
    dataio.atomic_write_text(
        os.path.join(out, "fit_summary.json"), json.dumps(summary, indent=2) + "\n"
    )
    if failed:
        print(f"warning: {len(failed)} of {len(results)} instances failed", file=sys.stderr)
    return 0 if ok else 1


def _params_from_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read params file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON: {exc}") from exc
    if "t" in doc:
        return TpsParams.from_dict(doc)
    if "top" in doc:
        return BezierParams.from_dict(doc)
    raise ConfigError(f"{path}: neither TPS nor Bezier params")


def cmd_eval(args) -> int:
    instances = _load(args)
    out = _outdir(args)

    if args.params_dir is not None:
        missing = [
            inst.id
            for inst in instances
            if not os.path.exists(
                os.path.join(args.params_dir, f"{_safe_name(inst.id)}.{args.rep}.json")
            )
        ]
        if missing:
            raise ConfigError(
                f"params dir {args.params_dir} is missing ids: {', '.join(sorted(missing))}"
            )

        def run(inst):
            try:
                path = os.path.join(args.params_dir, f"{_safe_name(inst.id)}.{args.rep}.json")
                params = _params_from_file(path)
                split = dataio.split_sides(inst)
                sources, targets = dataio.make_correspondences(split, args.per_side)
                if isinstance(params, TpsParams):
                    boundary = decode(params, 3, 32).boundary()
                    pred = decode_points(params, sources)
                else:
                    boundary = bezier_decode(params, 33)
                    pred = bezier_points(params, sources)
                residual = float(np.sqrt(np.mean(np.sum((pred - targets) ** 2, axis=1))))
                i, rt, pt = metrics._overlap_scores(boundary, inst.polygon, args.resolution)
                return metrics.InstanceScore(inst.id, i, rt, pt, residual)
            except TpsgeomError as exc:
                return (inst.id, f"{type(exc).__name__}: {exc}")

        results = _map(args.threads, run, instances)
        scores = [r for r in results if isinstance(r, metrics.InstanceScore)]
        failures = [r for r in results if not isinstance(r, metrics.InstanceScore)]
        report = metrics.FitReport(scores, args.resolution, failures)
    else:
        report = metrics.fit_evaluate(
            instances,
            rep=args.rep,
            distribution=args.distribution,
            k=args.k,
            per_side=args.per_side,
            regularization=args.regularization,
            resolution=args.resolution,
            threads=args.threads,
        )

    table = metrics.format_table({args.rep: report})
    print(table)
    dataio.atomic_write_text(
        os.path.join(out, "report.json"), json.dumps(report.to_dict(), indent=2) + "\n"
    )
    dataio.atomic_write_text(os.path.join(out, "report.txt"), table + "\n")
    if report.failures:
        print(f"warning: {len(report.failures)} instances failed", file=sys.stderr)
    return 0


def cmd_masks(args) -> int:
    if args.rep != "tps":
        raise ConfigError("masks need --rep tps: the center map samples a TPS interior")
    cfg = _fit_config(args)
    if args.per_side < 4:
        raise ConfigError(f"boundary smoothing needs --per-side >= 4, got {args.per_side}")
    instances = _load(args)
    out = _outdir(args)

    def run(inst):
        try:
            split = dataio.split_sides(inst)
            smoothed = smooth_boundary(
                inst.polygon, args.per_side, sides=(split.top, split.bottom)
            )
            half = args.per_side
            top = smoothed.points[:half]
            bottom = smoothed.points[half:][::-1]
            s = float(np.mean(np.linalg.norm(top - bottom, axis=1)))
            mask, origin = losses.instance_border_mask(
                smoothed, s, t_b=args.tb, t_r=args.tr, scale=args.scale
            )
            name = _safe_name(inst.id)
            dataio.write_pgm(mask.relaxed, os.path.join(out, f"{name}.border.pgm"))

            # the center map peaks at the pre-image of (0.5, 0.5), so the fit
            # must constrain the interior: include the centerline row as well
            xs = np.linspace(0.0, 1.0, half)
            sources = np.vstack(
                [
                    np.column_stack([xs, np.zeros(half)]),
                    np.column_stack([xs, np.full(half, 0.5)]),
                    np.column_stack([xs, np.ones(half)]),
                ]
            )
            targets = np.vstack([top, 0.5 * (top + bottom), bottom])
            params, _ = fit(cfg, sources, targets, args.regularization)
            t_raster = params.t * args.scale
            t_raster[:, 0] -= origin * args.scale
            gtc = losses.make_gtc(
                TpsParams(t_raster, cfg),
                mask.width,
                mask.height,
                sigma_frac=(args.sigma, args.sigma),
            )
            dataio.write_pgm(gtc.values, os.path.join(out, f"{name}.gtc.pgm"))
            return None
        except TpsgeomError as exc:
            return f"{inst.id}: {type(exc).__name__}: {exc}"

    failures = [f for f in _map(args.threads, run, instances) if f is not None]
    for failure in failures:
        print(f"warning: {failure}", file=sys.stderr)
    done = len(instances) - len(failures)
    print(f"wrote border+gtc masks for {done} of {len(instances)} instances to {out}")
    return 0 if done else 1


def cmd_augment(args) -> int:
    instances = _load(args)
    out = _outdir(args)
    stem = os.path.splitext(os.path.basename(args.annotations))[0]
    for angle in args.angles:
        hom = perspective_from_left_edge(angle, args.image_w, args.image_h, args.focal)
        warped = [
            dataio.TextInstance(
                id=inst.id,
                polygon=Polygon(hom.apply(inst.polygon.points)),
                transcript=inst.transcript,
                source=inst.source,
            )
            for inst in instances
        ]
        path = os.path.join(out, f"{stem}.angle{angle:g}.json")
        dataio.write_annotations(warped, path)
        print(f"wrote {path}")
    return 0


def cmd_rectify(args) -> int:
    params = _params_from_file(args.params)
    if not isinstance(params, TpsParams):
        raise ConfigError("rectification grids need TPS params, got Bezier params")
    grid = rectification_grid(params, args.rows, args.cols)
    out = _outdir(args)
    stem = os.path.splitext(os.path.basename(args.params))[0]
    doc = {
        "rows": grid.rows,
        "cols": grid.cols,
        # nested rows x cols x 2 so grid["points"][r][c] reads directly
        "points": grid.points.tolist(),
    }
    path = os.path.join(out, f"{stem}.grid.json")
    dataio.atomic_write_text(path, json.dumps(doc, indent=2) + "\n")
    print(f"wrote {path}")
    return 0


def cmd_viz(args) -> int:
    args.rep = args.overlay if args.overlay != "none" else args.rep
    cfg = _fit_config(args) if args.overlay == "tps" else None
    if args.with_mask and args.per_side < 4:
        raise ConfigError(f"boundary smoothing needs --per-side >= 4, got {args.per_side}")
    instances = _load(args)
    out = _outdir(args)

    def run(inst):
        try:
            fitted = None
            control = None
            mask = None
            if args.overlay != "none":
                split = dataio.split_sides(inst)
                sources, targets = dataio.make_correspondences(split, args.per_side)
                if args.overlay == "tps":
                    params, _ = fit(cfg, sources, targets, args.regularization)
                    fitted = {inst.id: decode(params, 3, 32).boundary_points()}
                    control = {inst.id: decode_points(params, cfg.fiducials)}
                else:
                    params, _ = bezier_fit(sources, targets)
                    fitted = {inst.id: bezier_decode(params, 33).points}
                    control = {inst.id: np.vstack([params.top, params.bottom])}
            if args.with_mask:
                split = dataio.split_sides(inst)
                smoothed = smooth_boundary(
                    inst.polygon, args.per_side, sides=(split.top, split.bottom)
                )
                half = args.per_side
                s = float(
                    np.mean(
                        np.linalg.norm(
                            smoothed.points[:half] - smoothed.points[half:][::-1], axis=1
                        )
                    )
                )
                border, origin = losses.instance_border_mask(smoothed, s, args.tb, args.tr)
                mask = (border.relaxed, (float(origin[0]), float(origin[1])), 1.0)
            svg = dataio.render_svg([inst], fitted=fitted, control_points=control, mask=mask)
            dataio.atomic_write_text(os.path.join(out, f"{_safe_name(inst.id)}.svg"), svg)
            return None
        except TpsgeomError as exc:
            return f"{inst.id}: {type(exc).__name__}: {exc}"

    failures = [f for f in _map(args.threads, run, instances) if f is not None]
    for failure in failures:
        print(f"warning: {failure}", file=sys.stderr)
    done = len(instances) - len(failures)
    print(f"wrote {done} of {len(instances)} SVG files to {out}")
    return 0 if done else 1


def cmd_losscheck(args) -> int:
    report = losses.gradient_check_report(seed=args.seed, trials=args.trials, corrupt=args.corrupt)
    print(f"trials:                 {report['trials']}")
    print(f"finite-difference h:    {report['h']:g}")
    print(f"tolerance:              {report['tolerance']:g}")
    print(f"ba_loss max rel error:  {report['ba_max_rel_error']:.3e}")
    print(f"corner_loss max rel:    {report['corner_max_rel_error']:.3e}")
    print("result: PASS" if report["ok"] else "result: FAIL")
    return 0 if report["ok"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Thin-plate-spline text-shape fitting, losses, and evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit shape parameters to annotations")
    _add_input_flags(p)
    _add_fit_flags(p)
    _add_out_flag(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="fit (or load params) and score IoU/TIoU")
    _add_input_flags(p)
    _add_fit_flags(p)
    p.add_argument("--params-dir", default=None, help="directory of fitted params JSON files")
    p.add_argument(
        "--resolution",
        type=int,
        default=_env("RESOLUTION", 512, int),
        help="overlap raster resolution (default: %(default)s)",
    )
    _add_out_flag(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("masks", help="write border and text-center masks as PGM")
    _add_input_flags(p)
    _add_fit_flags(p)
    p.add_argument(
        "--tb",
        type=float,
        default=_env("TB", 0.6, float),
        help="border distance threshold (default: %(default)s)",
    )
    p.add_argument(
        "--tr",
        type=float,
        default=_env("TR", 0.8, float),
        help="border relax threshold (default: %(default)s)",
    )
    p.add_argument(
        "--scale",
        type=float,
        default=_env("SCALE", 1.0, float),
        help="raster cells per image pixel (default: %(default)s)",
    )
    p.add_argument(
        "--sigma",
        type=float,
        default=_env("SIGMA", 0.25, float),
        help="center-map sigma as a unit-rectangle fraction (default: %(default)s)",
    )
    _add_out_flag(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_masks)

    p = sub.add_parser("augment", help="apply left-edge perspective warps to annotations")
    _add_input_flags(p)
    p.add_argument(
        "--angles",
        type=_angles,
        default=_env("ANGLES", [0.0, 45.0, 70.0], _angles),
        help="comma-separated rotation angles in degrees (default: 0,45,70)",
    )
    p.add_argument(
        "--image-w",
        type=float,
        default=_env("IMAGE_W", 1024.0, float),
        help="image width in pixels (default: %(default)s)",
    )
    p.add_argument(
        "--image-h",
        type=float,
        default=_env("IMAGE_H", 768.0, float),
        help="image height in pixels (default: %(default)s)",
    )
    p.add_argument(
        "--focal",
        type=float,
        default=None,
        help="camera focal length in pixels (default: image width)",
    )
    _add_out_flag(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("rectify", help="emit a rectification sampling grid from TPS params")
    p.add_argument("params", help="fitted TPS params JSON file")
    p.add_argument("--rows", type=int, default=8, help="grid rows (default: %(default)s)")
    p.add_argument("--cols", type=int, default=64, help="grid cols (default: %(default)s)")
    _add_out_flag(p)
    p.set_defaults(func=cmd_rectify)

    p = sub.add_parser("viz", help="render annotations and overlays to SVG")
    _add_input_flags(p)
    _add_fit_flags(p)
    p.add_argument(
        "--overlay",
        choices=("none", "tps", "bezier"),
        default="none",
        help="fit and draw a boundary overlay (default: %(default)s)",
    )
    p.add_argument("--with-mask", action="store_true", help="embed the border mask raster")
    p.add_argument("--tb", type=float, default=_env("TB", 0.6, float), help=argparse.SUPPRESS)
    p.add_argument("--tr", type=float, default=_env("TR", 0.8, float), help=argparse.SUPPRESS)
    _add_out_flag(p)
    _add_threads_flag(p)
    p.set_defaults(func=cmd_viz)

    p = sub.add_parser("losscheck", help="finite-difference check of loss gradients")
    p.add_argument(
        "--seed",
        type=int,
        default=_env("SEED", 0, int),
        help="random seed (default: %(default)s)",
    )
    p.add_argument(
        "--trials",
        type=int,
        default=_env("TRIALS", 1000, int),
        help="random configurations per loss (default: %(default)s)",
    )
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_losscheck)

    return parser


def main(argv=None) -> int:
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        return args.func(args)
    except TpsgeomError as exc:
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
