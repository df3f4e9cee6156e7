"""Command-line interface.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure
(non-convergence, empty evaluation mask).

Every option of a subcommand can also be given in a ``--config`` file of
``key value`` lines (keys use underscores, e.g. ``h_min 0.25``); flags on the
command line win over file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, io
from .dataset import load_dataset, thread_count, write_dataset
from .geometry import RigidTransform, transform_points
from .interp import ConvergenceError, InterpolationConfig, interpolate_dense
from .metrics import EmptyMaskError, count_points, evaluate
from .radar import (EmptyOverlapError, FilterConfig, HeightExtensionConfig, RadarFrame,
                    accumulate_frames, extend_height, filter_by_ratio, intrinsic_error,
                    render_sparse_depth)
from .report import (Table1Config, Table1Row, format_table1, ground_in_camera,
                     plot_depth, plot_table1, run_table1, write_table1_csv,
                     write_table2_csv)
from .resample import crop_depth, downsample_depth
from .synth import RadarModel, SequenceConfig, default_intrinsics, street_scene

logger = logging.getLogger("radardepth")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    pass


# --- option resolution ------------------------------------------------------

def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected on/off, got {text!r}")


def _ints(n):
    def conv(tokens):
        vals = [int(t) for t in tokens]
        if len(vals) != n:
            raise ValueError(f"expected {n} integers")
        return tuple(vals)
    conv.nargs = n
    return conv


# option name -> (converter, default, help)
PROJECT_OPTIONS = {
    "png16": (parse_bool, False, "also write a 16-bit PNG (depth * 256)"),
    "figure": (str, None, "write a depth preview image to this path"),
}
PIPELINE_OPTIONS = {
    "calib": (str, None, "calibration file (default: <frames>/calib.txt)"),
    "accumulate": (int, 5, "number of frames to merge, current one included"),
    "frame": (int, None, "index of the current frame (default: last)"),
    "extend": (parse_bool, True, "extend points to vertical segments"),
    "filter": (parse_bool, False, "drop points failing the ratio test against --reference"),
    "h_min": (float, 0.25, "lowest extension height above ground [m]"),
    "h_max": (float, 2.0, "highest extension height above ground [m]"),
    "base_height": (float, 0.5, "nominal height of planar radar returns [m]"),
    "ground_height": (float, None, "camera height above ground [m] (default: scene.txt)"),
    "ratio_threshold": (float, 1.25 ** 2, "ratio filter threshold"),
    "reference": (str, None, "reference dense depth (PFM) for filtering and the error report"),
    "report": (str, None, "error report CSV (default: <out>.csv when a reference is given)"),
    "crop": (_ints(4), None, "crop TOP LEFT HEIGHT WIDTH applied to the output"),
    "downsample": (int, 1, "integer downsampling factor applied after cropping"),
    "png16": (parse_bool, False, "also write a 16-bit PNG"),
    "figure": (str, None, "write a depth preview image to this path"),
}
INTERP_OPTIONS = {
    "neighborhood": (int, 8, "4 or 8"),
    "epsilon_var": (float, 1e-4, "floor of the local luminance variance"),
    "tolerance": (float, 1e-10, "relative residual at which CG stops"),
    "max_iterations": (int, None, "CG iteration cap (default: 10 x pixels)"),
    "preconditioner": (str, "ilu", "ilu or jacobi"),
    "png16": (parse_bool, False, "also write a 16-bit PNG"),
    "figure": (str, None, "write a depth preview image to this path"),
}
EVAL_OPTIONS = {
    "min_depth": (float, 1.0, "lower bound of the evaluated ground-truth range [m]"),
    "max_depth": (float, 80.0, "upper bound of the evaluated ground-truth range [m]"),
    "method": (str, "prediction", "row label in the CSV output"),
    "out": (str, None, "write the metrics as CSV"),
    "crop": (_ints(4), None, "crop TOP LEFT HEIGHT WIDTH of both maps"),
}
TABLE1_OPTIONS = {
    "out": (str, None, "output directory (default: <dataset>/table1)"),
    "accumulate": (int, 5, "frames merged per sample"),
    "h_min": (float, 0.25, "lowest extension height above ground [m]"),
    "h_max": (float, 2.0, "highest extension height above ground [m]"),
    "base_height": (float, 0.5, "nominal height of planar radar returns [m]"),
    "ratio_threshold": (float, 1.25 ** 2, "ratio filter threshold"),
    "neighborhood": (int, 8, "interpolation neighbourhood, 4 or 8"),
    "tolerance": (float, 1e-10, "interpolation solver tolerance"),
}
SYNTH_OPTIONS = {
    "scene": (str, None, "scene description file (default: built-in street)"),
    "calib": (str, None, "calibration file (default: 200x100, f=100)"),
    "frames": (int, 50, "number of frames"),
    "seed": (int, 0, "random seed"),
    "ego_step": (float, 1.0, "forward motion per frame [m]"),
    "frame_period": (float, 0.075, "time between frames [s]"),
    "lidar_density": (float, 0.05, "fraction of valid pixels kept as lidar"),
    "plane_height": (float, 0.5, "radar plane height above ground [m]"),
    "noise_sigma": (float, 0.5, "constant part of the range noise std [m]"),
    "range_noise_frac": (float, 0.05, "range-proportional part of the range noise std"),
    "azimuth_step": (float, float(np.radians(2.0)), "beam spacing [rad]"),
    "dropout": (float, 0.5, "probability of losing a return"),
    "clutter": (float, 0.15, "probability of a spurious return"),
    "max_range": (float, 100.0, "radar range limit [m]"),
    "radar_seed": (int, 0, "seed of the radar model"),
}


def _add_options(parser, options):
    for name, (conv, default, help_text) in options.items():
        flag = "--" + name.replace("_", "-")
        nargs = getattr(conv, "nargs", None)
        shown = "" if default is None else f" [default: {default}]"
        parser.add_argument(flag, dest=name, default=None, nargs=nargs, help=help_text + shown)
    parser.add_argument("--config", default=None, help="key-value file with defaults for the options above")


def resolve_options(args, options) -> dict:
    """Merge defaults, config-file values and flags (flags win)."""
    values = {name: default for name, (_, default, _) in options.items()}
    if args.config:
        kv = io.read_keyvalue(args.config)
        for key, (tokens, lineno) in kv.items():
            if key not in options:
                raise io.FormatError(f"unknown option {key!r}", args.config, lineno, key=key)
            values[key] = _convert(options[key][0], tokens, key, args.config, lineno)
    for name in options:
        raw = getattr(args, name)
        if raw is not None:
            tokens = raw if isinstance(raw, list) else [raw]
            values[name] = _convert(options[name][0], tokens, name, None, None)
    return values


def _convert(conv, tokens, key, path, lineno):
    try:
        if getattr(conv, "nargs", None):
            return conv(tokens)
        if len(tokens) != 1:
            raise ValueError("expected a single value")
        return conv(tokens[0])
    except ValueError as e:
        raise io.FormatError(f"option {key!r}: {e}", path, lineno, key=key) from None


# --- manifests ----------------------------------------------------------------

def write_manifest(path, command: str, config: dict, inputs, outputs, started: float) -> Path:
    path = Path(path)
    manifest = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "threads": thread_count(),
        "duration_s": round(time.perf_counter() - started, 6),
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    return path


def manifest_for(out: Path) -> Path:
    return out.with_name(out.stem + ".manifest.json")


# --- commands -------------------------------------------------------------------

def cmd_project(args) -> int:
    started = time.perf_counter()
    opts = resolve_options(args, PROJECT_OPTIONS)
    cloud = io.read_points(args.pointcloud, frame="ego")
    intr, extrinsic = io.read_calibration(args.calib)
    depth = render_sparse_depth(transform_points(cloud, extrinsic, "camera"), intr)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = io.write_depth(out, depth, png16=opts["png16"])
    if opts["figure"]:
        plot_depth(opts["figure"], depth, "projected points")
        written.append(Path(opts["figure"]))
    print(f"{count_points(depth)} points projected to {out}")
    write_manifest(manifest_for(out), "project", opts, [args.pointcloud, args.calib], written, started)
    return EXIT_OK


def _load_frames(frames_dir: Path, calib_path) -> tuple:
    calib_path = Path(calib_path) if calib_path else frames_dir / "calib.txt"
    intr, extrinsic = io.read_calibration(calib_path)
    files = sorted((frames_dir / "radar").glob("*.csv"))
    if not files:
        raise UsageError(f"no radar frames found in {frames_dir / 'radar'}")
    pose_path = frames_dir / "poses.txt"
    poses = io.read_poses(pose_path) if pose_path.exists() else [RigidTransform()] * len(files)
    if len(poses) != len(files):
        raise io.FormatError(f"{len(poses)} poses for {len(files)} radar frames", pose_path)
    ts_path = frames_dir / "timestamps.txt"
    if ts_path.exists():
        stamps = [float(x) for x in ts_path.read_text().split()]
    else:
        stamps = [float(i) for i in range(len(files))]
    return intr, extrinsic, files, poses, stamps, calib_path


def _stage_row(label: str, threshold: str, depth, reference, baseline: int | None) -> Table1Row:
    n = count_points(depth)
    retained = 100.0 * n / baseline if baseline else 100.0
    try:
        rep = intrinsic_error(depth, reference)
        return Table1Row(label, threshold, rep.delta1, rep.rmse, n, retained, 1)
    except EmptyOverlapError:
        return Table1Row(label, threshold, float("nan"), float("nan"), n, retained, 0)


def cmd_pipeline(args) -> int:
    started = time.perf_counter()
    opts = resolve_options(args, PIPELINE_OPTIONS)
    frames_dir = Path(args.frames)
    ext_cfg = HeightExtensionConfig(opts["h_min"], opts["h_max"], opts["base_height"])
    filt_cfg = FilterConfig(opts["ratio_threshold"])
    if opts["filter"] and not opts["reference"]:
        raise UsageError("--filter requires --reference")
    if opts["accumulate"] < 1 or opts["downsample"] < 1:
        raise UsageError("accumulate and downsample must be at least 1")

    intr, extrinsic, files, poses, stamps, calib_path = _load_frames(frames_dir, opts["calib"])
    target = len(files) - 1 if opts["frame"] is None else opts["frame"]
    if not 0 <= target < len(files):
        raise UsageError(f"frame {target} out of range (have {len(files)})")
    first = max(0, target - opts["accumulate"] + 1)
    frames = [RadarFrame(io.read_points(files[j], frame="ego"), stamps[j], RigidTransform(), poses[j])
              for j in range(first, target + 1)]
    cloud = accumulate_frames(frames, extrinsic)

    def finish(depth):
        if opts["crop"]:
            depth = crop_depth(depth, *opts["crop"])
        return downsample_depth(depth, opts["downsample"])

    raw = finish(render_sparse_depth(cloud, intr))
    result = raw
    stages = [("raw", "-", raw)]
    if opts["extend"]:
        ground = opts["ground_height"]
        if ground is None:
            scene_path = frames_dir / "scene.txt"
            if not scene_path.exists():
                raise UsageError("height extension needs --ground-height or a scene.txt")
            ground = io.read_scene(scene_path).ground_height
        up, ground_y = ground_in_camera(ground, extrinsic)
        result = finish(extend_height(cloud, intr, ext_cfg, ground_y, up))
        stages.append(("extended", "-", result))

    inputs = [str(f) for f in files[first:target + 1]] + [str(calib_path)]
    reference = None
    if opts["reference"]:
        reference = io.read_depth(opts["reference"])
        inputs.append(opts["reference"])
        if reference.shape != result.shape:
            reference = finish(reference) if reference.shape == intr.shape else reference
        if reference.shape != result.shape:
            raise UsageError(f"reference shape {reference.shape} does not match output {result.shape}")
    if opts["filter"]:
        unfiltered = count_points(result)
        result = filter_by_ratio(result, reference, filt_cfg)
        stages.append(("filtered", "ratio", result))

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = io.write_depth(out, result, png16=opts["png16"])
    if reference is not None:
        rows = []
        for label, thr, depth in stages:
            base = unfiltered if label == "filtered" else None
            rows.append(_stage_row(label, thr, depth, reference, base))
        print(format_table1(rows))
        report = Path(opts["report"]) if opts["report"] else out.with_suffix(".csv")
        write_table1_csv(report, rows)
        written.append(report)
    else:
        print(f"{count_points(result)} points written to {out}")
    if opts["figure"]:
        plot_depth(opts["figure"], result, "radar depth")
        written.append(Path(opts["figure"]))
    write_manifest(manifest_for(out), "pipeline", opts, inputs, written, started)
    return EXIT_OK


def cmd_interpolate(args) -> int:
    started = time.perf_counter()
    opts = resolve_options(args, INTERP_OPTIONS)
    try:
        cfg = InterpolationConfig(neighborhood=opts["neighborhood"], epsilon_var=opts["epsilon_var"],
                                  solver_tolerance=opts["tolerance"], max_iterations=opts["max_iterations"],
                                  preconditioner=opts["preconditioner"])
    except ValueError as e:
        raise UsageError(str(e)) from None
    seeds = io.read_depth(args.sparse)
    guide = io.read_guide(args.guide)
    dense, info = interpolate_dense(seeds, guide, cfg, return_info=True)
    print(f"residual {info.residual:.3e} iterations {info.iterations}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = io.write_depth(out, dense, png16=opts["png16"])
    if opts["figure"]:
        plot_depth(opts["figure"], dense, "interpolated depth")
        written.append(Path(opts["figure"]))
    cfg_echo = dict(opts, **{"solver_residual": info.residual, "solver_iterations": info.iterations})
    write_manifest(manifest_for(out), "interpolate", cfg_echo, [args.sparse, args.guide], written, started)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    started = time.perf_counter()
    opts = resolve_options(args, EVAL_OPTIONS)
    pred = io.read_depth(args.pred)
    gt = io.read_depth(args.gt)
    if pred.shape != gt.shape:
        raise UsageError(f"prediction {pred.shape} and ground truth {gt.shape} differ in size")
    if opts["crop"]:
        pred = crop_depth(pred, *opts["crop"])
        gt = crop_depth(gt, *opts["crop"])
    rep = evaluate(pred, gt, (opts["min_depth"], opts["max_depth"]))
    print(rep.row())
    if opts["out"]:
        out = Path(opts["out"])
        out.parent.mkdir(parents=True, exist_ok=True)
        write_table2_csv(out, [(opts["method"], rep)])
        write_manifest(manifest_for(out), "evaluate", dict(opts, **asdict(rep)), [args.pred, args.gt],
                       [out], started)
    return EXIT_OK


def cmd_table1(args) -> int:
    started = time.perf_counter()
    opts = resolve_options(args, TABLE1_OPTIONS)
    ds = load_dataset(args.dataset, require_scene=True)
    if len(ds) == 0:
        raise UsageError(f"dataset {args.dataset} has no frames")
    if opts["accumulate"] < 1:
        raise UsageError("accumulate must be at least 1")
    cfg = Table1Config(
        accumulate=opts["accumulate"],
        extension=HeightExtensionConfig(opts["h_min"], opts["h_max"], opts["base_height"]),
        filter=FilterConfig(opts["ratio_threshold"]),
        interpolation=InterpolationConfig(neighborhood=opts["neighborhood"], solver_tolerance=opts["tolerance"]),
    )
    rows = run_table1(ds, cfg)
    print(format_table1(rows))
    out = Path(opts["out"]) if opts["out"] else Path(args.dataset) / "table1"
    out.mkdir(parents=True, exist_ok=True)
    write_table1_csv(out / "table1.csv", rows)
    plot_table1(out / "table1.png", rows)
    write_manifest(out / "manifest.json", "table1", opts, [args.dataset],
                   [out / "table1.csv", out / "table1.png"], started)
    return EXIT_OK


def cmd_synth(args) -> int:
    started = time.perf_counter()
    opts = resolve_options(args, SYNTH_OPTIONS)
    scene = io.read_scene(opts["scene"]) if opts["scene"] else street_scene()
    intr = io.read_calibration(opts["calib"])[0] if opts["calib"] else default_intrinsics()
    if opts["frames"] < 0:
        raise UsageError("frame count must be non-negative")
    radar = RadarModel(plane_height=opts["plane_height"], depth_noise_sigma=opts["noise_sigma"],
                       azimuth_step=opts["azimuth_step"], dropout_prob=opts["dropout"],
                       seed=opts["radar_seed"], range_noise_frac=opts["range_noise_frac"],
                       clutter_prob=opts["clutter"], max_range=opts["max_range"])
    cfg = SequenceConfig(frames=opts["frames"], seed=opts["seed"], ego_step=opts["ego_step"],
                         frame_period=opts["frame_period"], lidar_density=opts["lidar_density"], radar=radar)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    written = write_dataset(out, scene, intr, cfg)
    print(f"wrote {cfg.frames} frames to {out}")
    inputs = [p for p in (opts["scene"], opts["calib"]) if p]
    write_manifest(out / "manifest.json", "synth", opts, inputs,
                   [p.relative_to(out) for p in written], started)
    return EXIT_OK


# --- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radardepth", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="render a point cloud into a sparse depth map")
    p.add_argument("pointcloud")
    p.add_argument("calib")
    p.add_argument("out")
    _add_options(p, PROJECT_OPTIONS)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("pipeline", help="accumulate, extend and filter radar frames")
    p.add_argument("frames", help="directory with radar/*.csv, poses.txt and calib.txt")
    p.add_argument("out")
    _add_options(p, PIPELINE_OPTIONS)
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("interpolate", help="densify sparse depth with a guidance image")
    p.add_argument("sparse")
    p.add_argument("guide")
    p.add_argument("out")
    _add_options(p, INTERP_OPTIONS)
    p.set_defaults(func=cmd_interpolate)

    p = sub.add_parser("evaluate", help="delta1 / RMSE / AbsRel of a prediction")
    p.add_argument("pred")
    p.add_argument("gt")
    _add_options(p, EVAL_OPTIONS)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("table1", help="intrinsic radar error table over a synthetic dataset")
    p.add_argument("dataset")
    _add_options(p, TABLE1_OPTIONS)
    p.set_defaults(func=cmd_table1)

    p = sub.add_parser("synth", help="generate a synthetic radar/lidar dataset")
    p.add_argument("out")
    _add_options(p, SYNTH_OPTIONS)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConvergenceError, EmptyMaskError, EmptyOverlapError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
