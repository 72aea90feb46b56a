"""Command-line entry point: ``vfuse <command> [options]``.

Exit codes: 0 success, 2 bad arguments or config, 3 IO or file-format
error, 4 numeric or validation failure.
"""

import argparse
import csv
import os
import sys

import numpy as np

from . import analytics, scenegen
from .calib import project_points
from .config import load_config
from .errors import FormatError, NumericError
from .gradcheck import gradcheck
from .pipeline import DEFAULT_SWEEPS, SWEEP_COLUMNS, SWEEP_PARAMS, run_pipeline, sweep
from .tensor import npy_write
from .voxelgrid import save_sparse

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_IO = 3
EXIT_NUMERIC = 4


class ArgumentError(Exception):
    pass


def _config(args):
    overrides = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        overrides.append(f"run.seed={args.seed}")
    return load_config(args.config, overrides)


def _summary_text(summary):
    return "".join(f"{k}: {v}\n" for k, v in summary.items())


def _require_dir(path):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"scene directory not found: {path}")


def cmd_synth(args):
    cfg = _config(args)
    spec = scenegen.SceneSpec(seed=cfg.seed, n_objects=args.objects, beams=args.beams)
    scene = scenegen.generate_scene(spec)
    fmap = scenegen.generate_feature_map(spec, cfg.channels)
    for path in scenegen.write_scene(scene, fmap, args.out):
        print(path)
    return EXIT_OK


def cmd_project(args):
    _require_dir(args.scene)
    points, calib, _, _, _ = scenegen.read_scene(args.scene)
    pixels, depths, valid = project_points(points[:, :3], calib)
    os.makedirs(args.out, exist_ok=True)
    out = np.column_stack([pixels, depths, valid.astype(np.float64)])
    npy_write(out, os.path.join(args.out, "projection.npy"))
    summary = {"points": int(points.shape[0]), "valid": int(valid.sum())}
    with open(os.path.join(args.out, "summary.txt"), "w", encoding="ascii") as fh:
        fh.write(_summary_text(summary))
    sys.stdout.write(_summary_text(summary))
    return EXIT_OK


def write_fuse_outputs(result, out_dir, dump=False):
    """Write fused tensors, the summary and (optionally) FB intermediates."""
    os.makedirs(out_dir, exist_ok=True)
    save_sparse(result.fused, os.path.join(out_dir, "fusion"))
    save_sparse(result.fb.output, os.path.join(out_dir, "fb"))
    summary = result.summary()
    with open(os.path.join(out_dir, "summary.txt"), "w", encoding="ascii") as fh:
        fh.write(_summary_text(summary))
    if dump:
        fb = result.fb
        npy_write(fb.scores.raw.astype(np.float64), os.path.join(out_dir, "scores.npy"))
        mask = np.zeros(len(result.fused))
        mask[fb.split.fore_rows] = 1.0
        npy_write(mask, os.path.join(out_dir, "fore_mask.npy"))
        ex = fb.expansion
        table = np.column_stack([ex.source, ex.offset_id, ex.targets, ex.features]).astype(np.float64)
        npy_write(table.reshape(len(ex), -1), os.path.join(out_dir, "expanded.npy"))
    return summary


def cmd_fuse(args):
    cfg = _config(args)
    _require_dir(args.scene)
    points, calib, fmap, _, _ = scenegen.read_scene(args.scene)
    result = run_pipeline(points, calib, fmap, cfg)
    summary = write_fuse_outputs(result, args.out, args.dump)
    sys.stdout.write(_summary_text(summary))
    return EXIT_OK


def cmd_stats(args):
    _require_dir(args.scene)
    points, calib, _, boxes, diffs = scenegen.read_scene(args.scene)
    w, h = calib.image_size
    occ = analytics.occupancy(points, calib, w, h)
    hist = analytics.box_point_counts(points, boxes, diffs)
    text = occ.to_text() + hist.to_text(args.threshold)
    sys.stdout.write(text)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "stats.txt"), "w", encoding="ascii") as fh:
            fh.write(text)
        with open(os.path.join(args.out, "occupancy.csv"), "w", encoding="ascii") as fh:
            fh.write(occ.to_csv())
        with open(os.path.join(args.out, "box_counts.csv"), "w", encoding="ascii") as fh:
            fh.write(hist.to_csv())
    return EXIT_OK


def cmd_gradcheck(args):
    cfg = _config(args)
    report = gradcheck(n=args.n, k=args.k, c=args.c, seed=cfg.seed, step=args.step,
                       tolerance=args.tolerance, depth=cfg.mlp_depth, corrupt=args.corrupt)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_NUMERIC


def _parse_values(param, raw):
    if raw is None:
        return DEFAULT_SWEEPS[param]
    try:
        vals = [float(v) if param == "T" else int(v) for v in raw.replace(",", " ").split()]
    except ValueError as exc:
        raise ArgumentError(f"bad value list {raw!r} for {param}") from exc
    if not vals:
        raise ArgumentError("empty value list")
    if param == "T" and not all(0.0 < v < 1.0 for v in vals):
        raise ArgumentError("threshold values must lie in (0, 1)")
    if param == "k_off" and not all(v >= 1 and int(v ** 0.5) ** 2 == v for v in vals):
        raise ArgumentError("k_off values must be perfect squares")
    if param == "stage" and not all(v >= 1 for v in vals):
        raise ArgumentError("stage values must be >= 1")
    return tuple(vals)


def cmd_sweep(args):
    cfg = _config(args)
    values = _parse_values(args.param, args.values)
    _require_dir(args.scene)
    points, calib, fmap, _, _ = scenegen.read_scene(args.scene)
    rows = sweep(points, calib, fmap, cfg, args.param, values)
    fh = open(args.out, "w", newline="", encoding="ascii") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, extrasaction="ignore",
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return EXIT_OK


def cmd_bench(args):
    from .bench import format_rows, run_benchmark

    sys.stdout.write(format_rows(run_benchmark(args.n, args.repeat)))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="vfuse", description="LiDAR-camera voxel fusion toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False):
        p.add_argument("--config", help="INI-style config file")
        p.add_argument("--seed", type=int, help="overrides run.seed")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override one setting (repeatable)")
        p.add_argument("--out", required=out_required, help="output directory")

    p = sub.add_parser("synth", help="generate a synthetic scene")
    common(p, out_required=True)
    p.add_argument("--objects", type=int, default=8)
    p.add_argument("--beams", type=int, default=64)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("project", help="project a scene's points into the image")
    common(p, out_required=True)
    p.add_argument("--scene", required=True)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("fuse", help="run patch-point and FB fusion on a scene")
    common(p, out_required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--dump", action="store_true", help="also write scores, masks and expansions")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("stats", help="occupancy and per-box point statistics")
    common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--threshold", type=int, default=180, help="point-count threshold for box fractions")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("gradcheck", help="finite-difference check of the SAF backward pass")
    common(p)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--c", type=int, default=16)
    p.add_argument("--step", type=float, default=1e-3)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("sweep", help="ablation sweep over one parameter, CSV output")
    common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", help="comma/space separated values (default: standard grid)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="time numba kernels against the numpy fallback")
    p.add_argument("--n", type=int, default=20000)
    p.add_argument("--repeat", type=int, default=3)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ArgumentError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except (OSError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    sys.exit(main())
