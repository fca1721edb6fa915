"""Command-line surface.

Exit codes: 0 success, 1 usage error, 2 data error. All diagnostics go to
stderr. The seed precedence is: --seed flag > DTOF_SEED env var > config.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import align, anomaly, io, metrics
from .core import (DEPTH_LIKE, INVERSE_DEPTH, RelativeDepthMap, ToolkitError,
                   pair_points)
from .simulate import simulate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _load_config(path, seed_flag=None):
    cfg = io.RunConfig.load(path) if path else io.RunConfig()
    seed = seed_flag
    if seed is None and "DTOF_SEED" in os.environ:
        try:
            seed = int(os.environ["DTOF_SEED"])
        except ValueError:
            raise io.FormatError(f"DTOF_SEED is not an integer: {os.environ['DTOF_SEED']!r}")
    if seed is not None:
        cfg = replace(cfg, seed=seed, sim=replace(cfg.sim, seed=seed))
    return cfg


def _read_rel(path, inverse: bool) -> RelativeDepthMap:
    dense = io.read_dense_depth(path)
    values = np.array(dense.values)  # invalid pixels read back as 0, kept as-is
    return RelativeDepthMap(values, INVERSE_DEPTH if inverse else DEPTH_LIKE)


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    gt = io.read_dense_depth(args.gt)
    out = simulate(gt, cfg.sim)
    io.write_points(out.points, args.out_points)
    io.write_points(out.points, args.out_labels, labels=out.labels)
    return EXIT_OK


def _detection_record(result: anomaly.AnomalyResult) -> dict:
    return {
        "n_points": result.inlier.size,
        "spearman": float(result.spearman),
        "otsu_threshold": float(result.otsu_threshold),
        "stat_threshold": float(result.stat_threshold),
        "threshold": float(result.threshold),
        "flagged": int(np.sum(~result.inlier)),
        "max_score": float(result.total_scores.max()),
        "mean_score": float(result.total_scores.mean()),
    }


def _cmd_detect(args) -> int:
    cfg = _load_config(args.config, None)
    rel = _read_rel(args.rel, args.rel_inverse)
    pts, _ = io.read_points(args.points, rel.height, rel.width)
    paired = pair_points(pts, rel)
    result = anomaly.detect(paired, cfg.detector)
    kept = anomaly.mask_points(paired, result)
    io.write_points(kept, args.out)
    if args.report:
        io.write_report(_detection_record(result), args.report)
    return EXIT_OK


def _cmd_complete(args) -> int:
    cfg = _load_config(args.config, None)
    rel = _read_rel(args.rel, args.rel_inverse)
    pts, _ = io.read_points(args.points, rel.height, rel.width)
    paired = pair_points(pts, rel)
    if args.detect:
        result = anomaly.detect(paired, cfg.detector)
        paired = anomaly.mask_points(paired, result)
    domain = align.DOMAIN_DEPTH if cfg.fit_domain == "depth" else align.DOMAIN_INVERSE
    fit = align.fit_affine(paired, rel, domain=domain,
                           robust=args.robust or cfg.robust)
    if args.residuals:
        dense = align.complete_with_residuals(rel, fit, paired, cfg.sensor)
    else:
        dense = align.complete(rel, fit, cfg.sensor)
    io.write_dense_depth(dense, args.out)
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    pred = io.read_dense_depth(args.pred)
    gt = io.read_dense_depth(args.gt)
    mask = io.read_dense_depth(args.mask).valid if args.mask else None
    report = metrics.evaluate(pred, gt, mask, region="mask" if args.mask else "all")
    io.write_report(report.as_dict(), args.report)
    return EXIT_OK


def _cmd_colorize(args) -> int:
    depth = io.read_dense_depth(args.infile)
    io.colorize(depth, args.min, args.max, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dtofkit",
                     description="Sparse dToF simulation, anomaly detection, "
                                 "completion and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate sparse dToF points from dense GT")
    p.add_argument("--gt", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-points", required=True)
    p.add_argument("--out-labels", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("detect", help="flag anomalous depth points")
    p.add_argument("--points", required=True)
    p.add_argument("--rel", required=True)
    p.add_argument("--rel-inverse", action="store_true",
                   help="treat the relative map as inverse depth")
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("complete", help="dense completion by affine alignment")
    p.add_argument("--points", required=True)
    p.add_argument("--rel", required=True)
    p.add_argument("--rel-inverse", action="store_true")
    p.add_argument("--config", default=None)
    p.add_argument("--detect", action="store_true",
                   help="run anomaly detection before fitting")
    p.add_argument("--robust", action="store_true", help="Huber IRLS fit")
    p.add_argument("--residuals", action="store_true",
                   help="add local residual correction")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_complete)

    p = sub.add_parser("evaluate", help="depth metrics against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", default=None)
    p.add_argument("--report", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("colorize", help="render a depth map to a color image")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--min", type=float, required=True)
    p.add_argument("--max", type=float, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_colorize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except ToolkitError as e:
        print(f"dtofkit: {e}", file=sys.stderr)
        return EXIT_DATA
    except OSError as e:
        print(f"dtofkit: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
