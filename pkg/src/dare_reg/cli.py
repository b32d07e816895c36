"""Command line interface: ``dare-reg <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from .evalkit import PRESETS, GeneratorConfig, records_to_csv, run_experiment, summaries_to_json
from .geom import apply_transform
from .io import ParseError, read_point_cloud, transforms_to_json, write_point_cloud
from .mixture import RegistrationConfig, register
from .resample import ResampleSpec
from .synth import Perturbation, ScanSpec, make_room_scene, make_scans, random_sensor_position
from .weights import WeightMethod, compute_weights

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("dare_reg")


class _Fmt(argparse.ArgumentDefaultsHelpFormatter):
    pass


def _load_all(paths):
    clouds = []
    for p in paths:
        clouds.append(read_point_cloud(p))
    return clouds


def cmd_register(args):
    try:
        clouds = _load_all(args.inputs)
    except (OSError, ParseError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    if args.mode == "pairwise" and len(clouds) != 2:
        print("error: pairwise mode takes exactly two point sets", file=sys.stderr)
        return EXIT_PARSE
    if len(clouds) < 2:
        print("error: need at least two point sets", file=sys.stderr)
        return EXIT_PARSE
    method = WeightMethod.parse(args.weights)
    if args.resample:
        try:
            spec = ResampleSpec.parse(args.resample)
        except ValueError as e:
            print(f"error: {e}", file=sys.stderr)
            return EXIT_PARSE
        if method is WeightMethod.UNIFORM:
            clouds = [spec.apply(c, args.seed + i) for i, c in enumerate(clouds)]
        else:
            log.warning("--resample applies to the uniform-weight baseline only; ignored")
    k = args.k if args.k is not None else (300 if args.mode == "joint" else 200)
    try:
        cfg = RegistrationConfig(K=k, iterations=args.iters, outlier_ratio=args.outlier_ratio, gamma=args.gamma,
                                 L=args.neighbors, clip_factor=args.clip, weight_method=method, seed=args.seed)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    try:
        res = register(clouds, cfg)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        print(f"error: registration failed: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    text = transforms_to_json(res.transforms, cfg.to_dict(), res.objective_trace,
                              {"inputs": [os.path.basename(p) for p in args.inputs],
                               "iterations": res.converged_iterations})
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    if args.write_aligned:
        os.makedirs(args.write_aligned, exist_ok=True)
        for i, (c, t) in enumerate(zip(clouds, res.transforms)):
            write_point_cloud(apply_transform(t, c), os.path.join(args.write_aligned, f"aligned_{i}.ply"))
    return EXIT_OK


def cmd_weights(args):
    try:
        cloud = read_point_cloud(args.input)
    except (OSError, ParseError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    try:
        w = compute_weights(cloud, args.method, args.gamma, args.neighbors, args.clip,
                            regularize=not args.raw)
    except (ValueError, ArithmeticError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    lines = "".join(f"{v:.17g}\n" for v in w.values)
    if args.output == "-":
        sys.stdout.write(lines)
    else:
        with open(args.output, "w") as f:
            f.write(lines)
    return EXIT_OK


def cmd_resample(args):
    try:
        if args.method == "voxel":
            if args.voxel is None:
                raise ValueError("--voxel is required for voxel resampling")
            spec = ResampleSpec("voxel", voxel_size=args.voxel)
        else:
            if args.rate is None:
                raise ValueError(f"--rate is required for {args.method} resampling")
            spec = ResampleSpec(args.method, rate=args.rate, candidate_pool=args.pool)
        cloud = read_point_cloud(args.input)
    except (OSError, ParseError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_PARSE
    write_point_cloud(spec.apply(cloud, args.seed), args.output)
    return EXIT_OK


def cmd_synth(args):
    if args.scene != "room":
        print(f"error: unknown scene {args.scene!r}", file=sys.stderr)
        return EXIT_PARSE
    if args.sensors < 1:
        print("error: --sensors must be >= 1", file=sys.stderr)
        return EXIT_PARSE
    mesh = make_room_scene(args.seed)
    rng = np.random.default_rng([args.seed, 1])
    specs = [ScanSpec(random_sensor_position(mesh, rng), args.points, args.min_distance,
                      "none" if args.no_thinning else "inverse_square", not args.no_incidence)
             for _ in range(args.sensors)]
    clouds, gts = make_scans(mesh, specs, Perturbation(args.angle_min, args.angle_max, args.tsigma), args.seed)
    os.makedirs(args.out_dir, exist_ok=True)
    for i, c in enumerate(clouds):
        write_point_cloud(c, os.path.join(args.out_dir, f"scan_{i}.ply"))
    with open(os.path.join(args.out_dir, "gt.json"), "w") as f:
        f.write(transforms_to_json(gts, extra={
            "description": "transform i maps scan_i into the frame of scan_0",
            "sensor_positions": [s.sensor_position.tolist() for s in specs],
            "seed": args.seed,
        }))
    return EXIT_OK


def cmd_experiment(args):
    names = [m.strip().lower() for m in args.methods.split(",") if m.strip()]
    unknown = [m for m in names if m not in PRESETS]
    if unknown:
        print(f"error: unknown methods {unknown}; choose from {sorted(PRESETS)}", file=sys.stderr)
        return EXIT_PARSE
    methods = [PRESETS[m] for m in names]
    if args.k is not None or args.iters is not None:
        methods = [replace(m, **{k: v for k, v in (("K", args.k), ("iterations", args.iters)) if v is not None})
                   for m in methods]
    gen = GeneratorConfig(args.points, args.angle_min, args.angle_max, args.tsigma, args.min_distance,
                          args.incidence)

    def progress(batch):
        log.info("trial %d: %s", batch[0].trial_id,
                 ", ".join(f"{r.method}={r.rotation_error:.2f}deg" for r in batch))

    records, summaries = run_experiment(gen, methods, args.trials, args.seed, workers=args.workers,
                                        timing=not args.no_timing, progress=progress)
    os.makedirs(args.out_dir, exist_ok=True)
    with open(os.path.join(args.out_dir, "trials.csv"), "w", newline="") as f:
        f.write(records_to_csv(records))
    with open(os.path.join(args.out_dir, "summary.json"), "w") as f:
        f.write(summaries_to_json(summaries, gen, methods))
    print(f"{'method':<10} {'avg inlier err (deg)':>22} {'failure rate (%)':>17}")
    for s in summaries.values():
        print(f"{s.method:<10} {s.mean_inlier_error:>13.2f} +- {s.inlier_error_std:<5.2f} {s.failure_rate:>17.1f}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="dare-reg", description=__doc__, formatter_class=_Fmt)
    p.add_argument("--version", action="version", version=f"dare-reg {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("register", help="register two or more point sets", formatter_class=_Fmt)
    r.add_argument("inputs", nargs="+", help="point cloud files (.ply or .xyz)")
    r.add_argument("--mode", choices=("pairwise", "joint"), default="pairwise")
    r.add_argument("--weights", choices=("uniform", "empirical", "empirical-full", "sensor"), default="empirical",
                   help="observation weights; uniform is plain JRMPC")
    r.add_argument("--k", type=int, default=None, help="mixture components (default 200 pairwise, 300 joint)")
    r.add_argument("--iters", type=int, default=50, help="EM iterations")
    r.add_argument("--gamma", type=float, default=0.9, help="sensor-model normal regularization")
    r.add_argument("--neighbors", type=int, default=10, help="neighbourhood size L for weights and median filter")
    r.add_argument("--clip", type=float, default=8.0, help="clip weights at this multiple of their mean")
    r.add_argument("--outlier-ratio", type=float, default=0.005, help="prior of the uniform outlier component")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", help="output transform JSON (stdout if omitted)")
    r.add_argument("--resample", help="re-sampling for the uniform baseline, e.g. voxel:0.1, fps:0.25, gss:0.25")
    r.add_argument("--write-aligned", metavar="DIR", help="also write each cloud mapped into the common frame")
    r.set_defaults(func=cmd_register)

    w = sub.add_parser("weights", help="export observation weights, one value per line", formatter_class=_Fmt)
    w.add_argument("input")
    w.add_argument("output", help="output text file, or - for stdout")
    w.add_argument("--method", choices=("uniform", "empirical", "empirical-full", "sensor"), default="empirical")
    w.add_argument("--gamma", type=float, default=0.9)
    w.add_argument("--neighbors", type=int, default=10)
    w.add_argument("--clip", type=float, default=8.0)
    w.add_argument("--raw", action="store_true", help="skip median filtering and clipping")
    w.set_defaults(func=cmd_weights)

    s = sub.add_parser("resample", help="voxel grid, FPS or GSS re-sampling", formatter_class=_Fmt)
    s.add_argument("--method", choices=("voxel", "fps", "gss"), required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--voxel", type=float, help="voxel edge length in meters")
    g.add_argument("--rate", type=float, help="fraction of points kept (fps, gss)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--pool", type=int, default=100, help="GSS candidates scored per step")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_resample)

    y = sub.add_parser("synth", help="generate synthetic Lidar-like scans with ground truth", formatter_class=_Fmt)
    y.add_argument("--scene", default="room", choices=("room",))
    y.add_argument("--sensors", type=int, default=2)
    y.add_argument("--points", type=int, default=10000, help="dense uniform samples per scan before thinning")
    y.add_argument("--angle-min", type=float, default=0.0)
    y.add_argument("--angle-max", type=float, default=90.0)
    y.add_argument("--tsigma", type=float, default=1.0, help="std of the translation perturbation (m)")
    y.add_argument("--min-distance", type=float, default=1.5, help="range below which every point is kept (m)")
    y.add_argument("--no-incidence", action="store_true", help="thin by distance only")
    y.add_argument("--no-thinning", action="store_true")
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--out-dir", required=True)
    y.set_defaults(func=cmd_synth)

    e = sub.add_parser("experiment", help="run methods on seeded synthetic pairs", formatter_class=_Fmt)
    e.add_argument("--methods", default="jrmpc,dare", help=f"comma list of {','.join(sorted(PRESETS))}")
    e.add_argument("--trials", type=int, default=50)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--points", type=int, default=10000)
    e.add_argument("--angle-min", type=float, default=0.0)
    e.add_argument("--angle-max", type=float, default=90.0)
    e.add_argument("--tsigma", type=float, default=1.0)
    e.add_argument("--min-distance", type=float, default=1.5)
    e.add_argument("--incidence", action="store_true", help="include the incidence factor in thinning")
    e.add_argument("--k", type=int, default=None, help="override K for mixture methods (default 200)")
    e.add_argument("--iters", type=int, default=None, help="override iteration count (default 50)")
    e.add_argument("--workers", type=int, default=1)
    e.add_argument("--no-timing", action="store_true", help="record runtimes as 0 for byte-stable output")
    e.add_argument("--out-dir", required=True)
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
