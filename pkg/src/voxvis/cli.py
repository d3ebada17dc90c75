"""Command-line front end.

Subcommands: extract, validate, occupancy, eval, synth, export-ply, bench.
Machine-readable output is line-delimited JSON on stdout; human tables sit
behind --pretty. Exit codes: 0 success, 2 usage/input error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .camera import load_calibration, save_calibration
from .errors import ParameterError, ToolError
from .grid import load_labels, load_mask, save_labels, save_mask
from .metrics import semantic_miou
from .occupancy import DEPTH_FORMATS, load_depth, occupancy_from_depth
from .oracle import cast_visibility, compare_masks
from .ply import export_ply
from .raster import DEFAULT_STRIDE, extract_visible_labels, rasterize_visibility
from .synth import CAMERA_RULES, MOTIFS, SceneSpec, generate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def _emit(record: dict):
    sys.stdout.write(json.dumps(record) + "\n")
    sys.stdout.flush()


def _default_threads() -> int:
    return os.cpu_count() or 1


# --- extract -----------------------------------------------------------------


def _gather_jobs(args):
    jobs = []
    if args.manifest:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                parts = line.split()
                if len(parts) != 3:
                    raise ParameterError(
                        f"{args.manifest}:{lineno}: expected 'labels calib outdir'"
                    )
                jobs.append(tuple(parts))
    if args.labels or args.calib:
        if not (args.labels and args.calib):
            raise ParameterError("--labels and --calib must be given together")
        jobs.append((args.labels, args.calib, args.out))
    if not jobs:
        raise ParameterError("nothing to do: give --labels/--calib or --manifest")
    # Pre-flight: every referenced input must exist before the batch starts.
    missing = [p for job in jobs for p in job[:2] if not Path(p).is_file()]
    if missing:
        raise ParameterError(f"missing input files: {missing}")
    return jobs


def _run_extract_job(job, stride, z_min, threads):
    label_path, calib_path, out_dir = job
    rig, dims = load_calibration(calib_path)
    grid = load_labels(label_path, dims, meta=rig.vox)
    visible, mask, result = extract_visible_labels(
        grid, rig, stride, z_min=z_min, threads=threads
    )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(label_path).stem
    label_out = out / f"{stem}.visible.label"
    mask_out = out / f"{stem}.visible.mask"
    stats_out = out / f"{stem}.stats.json"
    save_labels(label_out, visible)
    save_mask(mask_out, mask)
    stats_out.write_text(json.dumps(result.stats.to_json()) + "\n", encoding="utf-8")
    return {
        "input": str(label_path),
        "labels": str(label_out),
        "mask": str(mask_out),
        "stats_file": str(stats_out),
        "stats": result.stats.to_json(),
    }


def cmd_extract(args) -> int:
    jobs = _gather_jobs(args)
    if args.stride < 1:
        raise ParameterError(f"stride must be >= 1, got {args.stride}")
    failures = 0
    if len(jobs) > 1:
        # Worker pool over batch items; each item rasterizes single-threaded.
        with ThreadPoolExecutor(max_workers=min(args.threads, len(jobs))) as pool:
            futures = [
                pool.submit(_run_extract_job, job, args.stride, args.z_min, 1)
                for job in jobs
            ]
            for job, fut in zip(jobs, futures):
                try:
                    record = fut.result()
                except ToolError as exc:
                    failures += 1
                    print(f"error: {job[0]}: {exc}", file=sys.stderr)
                    if not args.keep_going:
                        return EXIT_USAGE
                    continue
                if not args.stats:
                    record = {k: v for k, v in record.items() if k != "stats"}
                _emit(record)
    else:
        record = _run_extract_job(jobs[0], args.stride, args.z_min, args.threads)
        if not args.stats:
            record = {k: v for k, v in record.items() if k != "stats"}
        _emit(record)
    return EXIT_USAGE if failures else EXIT_OK


# --- validate ----------------------------------------------------------------


def cmd_validate(args) -> int:
    rig, dims = load_calibration(args.calib)
    grid = load_labels(args.labels, dims, meta=rig.vox)
    result = rasterize_visibility(
        grid, rig, args.stride, z_min=args.z_min, threads=args.threads
    )
    oracle_mask = cast_visibility(
        grid, rig, args.supersample, force=args.force_large
    )
    report = compare_masks(result.mask, oracle_mask)
    _emit(
        {
            "iou": report.iou,
            "intersection": report.intersection,
            "union": report.union,
            "only_raster": report.only_a,
            "only_oracle": report.only_b,
            "raster_visible": result.stats.visible,
            "oracle_visible": oracle_mask.count,
        }
    )
    return EXIT_OK


# --- occupancy ---------------------------------------------------------------


def cmd_occupancy(args) -> int:
    rig, dims = load_calibration(args.calib)
    depth = load_depth(
        args.depth_path,
        args.depth_format,
        width=rig.intrinsics.width,
        height=rig.intrinsics.height,
    )
    mask = occupancy_from_depth(depth, rig, dims, dilate=args.dilate)
    save_mask(args.out, mask)
    _emit({"out": str(args.out), "bits_set": mask.count})
    return EXIT_OK


# --- eval --------------------------------------------------------------------


def _dims_from_args(args):
    if args.calib:
        _, dims = load_calibration(args.calib)
        return dims
    if args.dims:
        return tuple(args.dims)
    raise ParameterError("give --calib or --dims to size the grids")


def cmd_eval(args) -> int:
    dims = _dims_from_args(args)
    pred = load_labels(args.pred, dims)
    gt = load_labels(args.gt, dims)
    invalid = load_mask(args.invalid, dims) if args.invalid else None
    report = semantic_miou(
        pred,
        gt,
        invalid=invalid,
        num_classes=args.num_classes,
        strict_classes=args.strict_classes,
    )
    _emit(report.to_json())
    if args.pretty:
        print(report.to_table())
    return EXIT_OK


# --- synth -------------------------------------------------------------------


def cmd_synth(args) -> int:
    spec = SceneSpec(
        seed=args.seed,
        dims=tuple(args.dims),
        density=args.density,
        motif=args.motif,
        camera=args.camera,
        image_size=tuple(args.image_size),
        voxel_size=args.voxel_size,
        num_classes=args.num_classes,
    )
    grid, rig = generate(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    label_path = out / f"{args.name}.label"
    calib_path = out / f"{args.name}.calib"
    save_labels(label_path, grid)
    save_calibration(calib_path, rig, grid.dims)
    _emit(
        {
            "labels": str(label_path),
            "calib": str(calib_path),
            "occupied": int((grid.labels != 0).sum()),
        }
    )
    return EXIT_OK


# --- export-ply ----------------------------------------------------------------


def cmd_export_ply(args) -> int:
    rig, dims = load_calibration(args.calib)
    grid = load_labels(args.labels, dims, meta=rig.vox)
    mask = load_mask(args.mask, dims) if args.mask else None
    count = export_ply(args.out, grid, mask)
    _emit({"out": str(args.out), "points": count})
    return EXIT_OK


# --- bench -------------------------------------------------------------------


def cmd_bench(args) -> int:
    spec = SceneSpec(
        seed=args.seed,
        dims=tuple(args.dims),
        density=args.density,
        motif="boxes",
        camera="kitti",
        image_size=tuple(args.image_size),
        voxel_size=args.voxel_size,
    )
    grid, rig = generate(spec)
    runs = []
    for threads in args.thread_counts:
        times = []
        for _ in range(args.repeat):
            t0 = time.perf_counter()
            result = rasterize_visibility(grid, rig, args.stride, threads=threads)
            times.append((time.perf_counter() - t0) * 1e3)
        runs.append(
            {
                "threads": threads,
                "wall_ms_best": round(min(times), 3),
                "wall_ms_runs": [round(t, 3) for t in times],
                "visible": result.stats.visible,
            }
        )
    _emit(
        {
            "dims": list(spec.dims),
            "image_size": list(spec.image_size),
            "stride": args.stride,
            "occupied": int((grid.labels != 0).sum()),
            "runs": runs,
        }
    )
    return EXIT_OK


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voxvis",
        description="Voxel visibility extraction, occupancy lifting, and SSC metrics.",
    )
    parser.add_argument("--version", action="version", version=f"voxvis {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="split labels into camera-visible targets")
    p.add_argument("--labels", help="input .label file")
    p.add_argument("--calib", help="calibration file")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--manifest", help="batch file: 'labels calib outdir' per line")
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--z-min", type=float, default=0.1)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--stats", action="store_true", help="include raster stats in output")
    p.add_argument("--keep-going", action="store_true", help="continue past failed items")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("validate", help="compare rasterized visibility to ray casting")
    p.add_argument("--labels", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--z-min", type=float, default=0.1)
    p.add_argument("--supersample", type=int, default=2)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument(
        "--force-large", action="store_true", help="walk grids beyond the size guard"
    )
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("occupancy", help="lift a depth map into an occupancy mask")
    p.add_argument("--depth-path", required=True)
    p.add_argument("--depth-format", choices=DEPTH_FORMATS, required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True, help="output .mask path")
    p.add_argument("--dilate", type=int, default=0)
    p.set_defaults(func=cmd_occupancy)

    p = sub.add_parser("eval", help="score predicted labels against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--calib", help="calibration file supplying dims")
    p.add_argument("--dims", type=int, nargs=3, help="grid dims if no calibration")
    p.add_argument("--invalid", help="mask of voxels excluded from scoring")
    p.add_argument("--num-classes", type=int, default=20)
    p.add_argument("--strict-classes", action="store_true")
    p.add_argument("--pretty", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic scene + calibration")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dims", type=int, nargs=3, default=[16, 16, 16])
    p.add_argument("--density", type=float, default=0.2)
    p.add_argument("--motif", choices=MOTIFS, default="random")
    p.add_argument("--camera", choices=CAMERA_RULES, default="orbit")
    p.add_argument("--image-size", type=int, nargs=2, default=[64, 64])
    p.add_argument("--voxel-size", type=float, default=0.2)
    p.add_argument("--num-classes", type=int, default=20)
    p.add_argument("--out", default=".")
    p.add_argument("--name", default="scene")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("export-ply", help="export a labeled grid as colored points")
    p.add_argument("--labels", required=True)
    p.add_argument("--calib", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mask", help="restrict to masked voxels")
    p.set_defaults(func=cmd_export_ply)

    p = sub.add_parser("bench", help="time full-scale extraction")
    p.add_argument("--dims", type=int, nargs=3, default=[256, 256, 32])
    p.add_argument("--image-size", type=int, nargs=2, default=[1226, 370])
    p.add_argument("--stride", type=int, default=DEFAULT_STRIDE)
    p.add_argument("--density", type=float, default=0.08)
    p.add_argument("--voxel-size", type=float, default=0.2)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument(
        "--thread-counts", type=lambda s: [int(x) for x in s.split(",")], default=[1, 8]
    )
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ToolError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
