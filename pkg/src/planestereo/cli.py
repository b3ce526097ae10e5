"""Command-line entry points.

Disparity files are picked by extension: .png means 16-bit fixed point
(value*256), .pfm means float. All tabular output is comma-separated
text with a header row and contains no timestamps, so identical inputs
with the same seed print identical bytes.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from . import harness, imagery
from .inference import PcbpConfig
from .matching import match
from .model import ModelParams
from .segmentation import slic


def _disparity_format(path: str) -> str:
    low = path.lower()
    if low.endswith(".pfm"):
        return "pfm"
    if low.endswith(".png"):
        return "png16"
    raise ValueError(f"cannot tell disparity format from extension: {path}")


def load_params_file(path: str) -> ModelParams:
    """Parse a ``key = value`` parameter file; ``#`` starts a comment.
    Keys are the ModelParams field names; unknown keys are an error."""
    names = {f.name for f in dataclasses.fields(ModelParams)}
    vals = {}
    with open(path) as fh:
        for ln, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not eq or not key or not value:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            if key not in names:
                raise ValueError(f"{path}:{ln}: unknown parameter '{key}'")
            vals[key] = float(value)
    return ModelParams(**vals)


def _load_mask(path, gt_disparity):
    if path is None:
        return np.where(gt_disparity.valid,
                        int(imagery.OcclusionState.NON_OCCLUDED),
                        int(imagery.OcclusionState.UNKNOWN)).astype(np.uint8)
    data = imagery.load_image(path).data
    return data[..., 0] if data.ndim == 3 else data


def _cmd_infer(args) -> None:
    left = imagery.load_image(args.left)
    if args.right is not None:
        obs = match(left, imagery.load_image(args.right))
    else:
        obs = imagery.load_disparity(args.obs, _disparity_format(args.obs))
        if obs.values.shape != left.data.shape[:2]:
            raise ValueError("observation dimensions do not match the image")
    params = load_params_file(args.config) if args.config else ModelParams()
    pcfg = PcbpConfig(n_particles=args.particles,
                      n_outer_iters=args.outer_iters, seed=args.seed)
    trace = open(args.trace, "w") if args.trace else None
    try:
        res = harness.run_pipeline(left, obs, args.superpixels, params=params,
                                   pcbp_cfg=pcfg, trace=trace)
    finally:
        if trace is not None:
            trace.close()
    imagery.save_disparity(res.disparity, args.out, _disparity_format(args.out))
    seg = res.segmentation
    sol = res.solution
    rows = [
        ("segments", len(seg.segments)),
        ("pairs", len(seg.adjacency)),
        ("junctions3", len(seg.junctions3)),
        ("junctions4", len(seg.junctions4)),
        ("iterations", len(sol.energies) - 1),
        ("energy", sol.energy),
        ("bound", sol.bound),
    ]
    sys.stdout.write(harness.format_table(("key", "value"), rows))


def _cmd_eval(args) -> None:
    est = imagery.load_disparity(args.est, _disparity_format(args.est))
    gtd = imagery.load_disparity(args.gt, _disparity_format(args.gt))
    gt = imagery.GroundTruth(gtd, _load_mask(args.mask, gtd))
    thresholds = [float(t) for t in args.thresholds.split(",")]
    rep = harness.evaluate(est, gt, thresholds)
    sys.stdout.write(harness.format_table(("metric", "value"),
                                          harness.report_rows(rep)))


def _cmd_synth(args) -> None:
    rows = []
    for k in range(args.n_scenes):
        cfg = imagery.SynthConfig(
            width=args.width, height=args.height, n_planes=args.n_planes,
            noise_sigma=args.noise_sigma,
            samples_per_boundary=args.samples_per_boundary,
            interior_rate=args.interior_rate, seed=args.seed + k)
        scene = imagery.generate_synthetic(cfg)
        out = os.path.join(args.out_dir, f"scene_{k:03d}")
        imagery.save_scene(scene, out)
        rows.append((out,))
    sys.stdout.write(harness.format_table(("scene_dir",), rows))


def _study_config(args) -> harness.StudyConfig:
    return harness.StudyConfig(
        width=args.width, height=args.height, n_planes=args.n_planes,
        superpixels=args.superpixels,
        interior_rate=args.interior_rate,
        samples_per_boundary=args.samples_per_boundary,
        pcbp=PcbpConfig(n_particles=args.particles,
                        n_outer_iters=args.outer_iters),
        base_seed=args.seed, n_jobs=args.jobs)


def _cmd_noise_study(args) -> None:
    sigmas = [float(s) for s in args.sigmas.split(",")]
    rows = harness.run_noise_study(args.n_train, args.n_test, sigmas,
                                   _study_config(args))
    sys.stdout.write(harness.format_table(("sigma", "rms", "boundary_error"),
                                          rows))


def _cmd_scaling_study(args) -> None:
    counts = [int(c) for c in args.counts.split(",")]
    scene = imagery.generate_synthetic(imagery.SynthConfig(
        width=args.width, height=args.height, n_planes=args.n_planes,
        noise_sigma=args.noise_sigma,
        samples_per_boundary=args.samples_per_boundary,
        interior_rate=args.interior_rate, seed=args.seed))
    rows = harness.run_scaling_study(scene, counts, _study_config(args))
    sys.stdout.write(harness.format_table(
        ("superpixels", "runtime_seconds", "rms", "err3_noc"), rows))


def _cmd_oracle(args) -> None:
    gtd = imagery.load_disparity(args.gt, _disparity_format(args.gt))
    gt = imagery.GroundTruth(gtd, _load_mask(args.mask, gtd))
    left = imagery.load_image(args.left)
    seg = slic(left.data, args.superpixels)
    _, _, rep = harness.oracle_fit(gt, seg)
    sys.stdout.write(harness.format_table(("metric", "value"),
                                          harness.report_rows(rep)))


def _cmd_params(args) -> None:
    for f in dataclasses.fields(ModelParams):
        sys.stdout.write(f"{f.name} = {f.default!r}\n")


def _add_scene_args(p, with_sigma=True):
    p.add_argument("--width", type=int, default=320)
    p.add_argument("--height", type=int, default=240)
    p.add_argument("--n-planes", type=int, default=5)
    p.add_argument("--interior-rate", type=float, default=0.05)
    p.add_argument("--samples-per-boundary", type=int, default=None)
    if with_sigma:
        p.add_argument("--noise-sigma", type=float, default=0.0)


def _add_solver_args(p):
    p.add_argument("--superpixels", type=int, default=100)
    p.add_argument("--particles", type=int, default=10)
    p.add_argument("--outer-iters", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="planestereo",
        description="Piecewise-planar stereo with occlusion-boundary labels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="estimate a disparity map")
    p.add_argument("--left", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--right", help="right image; runs the block matcher")
    src.add_argument("--obs", help="precomputed sparse disparities (.png/.pfm)")
    p.add_argument("--out", required=True, help="output map (.png/.pfm)")
    _add_solver_args(p)
    p.add_argument("--config", help="key = value parameter file")
    p.add_argument("--trace", help="write solver trace to this file")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("eval", help="score an estimate against ground truth")
    p.add_argument("--est", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--mask", help="occlusion mask png (default: all non-occluded)")
    p.add_argument("--thresholds", default="2,3,4,5")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic scene directories")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-scenes", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    _add_scene_args(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("noise-study", help="RMS/boundary error vs noise level")
    p.add_argument("--n-train", type=int, default=10)
    p.add_argument("--n-test", type=int, default=90)
    p.add_argument("--sigmas", default="0,1,2,3,5")
    p.add_argument("--jobs", type=int, default=None)
    _add_scene_args(p, with_sigma=False)
    _add_solver_args(p)
    p.set_defaults(func=_cmd_noise_study)

    p = sub.add_parser("scaling-study", help="runtime vs superpixel count")
    p.add_argument("--counts", default="100,300,600,1200")
    p.add_argument("--jobs", type=int, default=None)
    _add_scene_args(p)
    _add_solver_args(p)
    p.set_defaults(func=_cmd_scaling_study)

    p = sub.add_parser("oracle", help="fit the model to ground truth itself")
    p.add_argument("--gt", required=True)
    p.add_argument("--left", required=True)
    p.add_argument("--mask")
    p.add_argument("--superpixels", type=int, default=100)
    p.set_defaults(func=_cmd_oracle)

    p = sub.add_parser("params", help="print default model parameters")
    p.set_defaults(func=_cmd_params)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
