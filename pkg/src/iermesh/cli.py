"""Command-line front end: sample, label, remesh, reconstruct, evaluate.

Every command is deterministic given (inputs, flags, seed). The single
``--seed`` flag feeds a SeedSequence whose spawned children are assigned to
stages in a fixed order (0 = surface sampling, 1 = labeling, 2 = noise), so a
stage can be reproduced in isolation by a command that runs only that stage.

Exit codes: 0 success, 2 input or validation error, 3 internal invariant
violation (the assembler emitted an illegal mesh; impossible by construction,
so it signals a bug rather than bad input).
"""

import argparse
import json
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .assembler import merge, sort_candidates, write_rejection_log
from .candidates import save_candidates
from .classifier import load_weights
from .fileio import (
    ParseError,
    load_mesh,
    load_point_cloud,
    save_mesh,
    save_point_cloud,
)
from .metrics import evaluate
from .pipeline import PipelineConfig, label_cloud, reconstruct
from .sampling import add_noise, area_uniform_sample, poisson_disk_sample


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline config")
    g.add_argument("--k", type=int, default=50, help="k-NN neighborhood size")
    g.add_argument("--tau", type=float, default=1.3, help="IER rejection threshold")
    g.add_argument(
        "--dist-thresh", type=float, default=0.005,
        help="surface-distance bound for the near class",
    )
    g.add_argument(
        "--n-face-samples", type=int, default=10,
        help="samples per candidate for dist-to-reference",
    )
    g.add_argument(
        "--cutoff-multiplier", type=float, default=2.0,
        help="geodesic cutoff as a multiple of the k-NN radius",
    )
    g.add_argument("--threads", type=int, default=0, help="worker cap (0 = env)")
    g.add_argument("--seed", type=int, default=0, help="master random seed")


def _config(args) -> PipelineConfig:
    return PipelineConfig(
        k=args.k,
        tau=args.tau,
        dist_thresh=args.dist_thresh,
        n_face_samples=args.n_face_samples,
        cutoff_multiplier=args.cutoff_multiplier,
        threads=args.threads,
        seed=args.seed,
    )


def _stage_streams(seed: int):
    """(sampling, labeling, noise) generators from the master seed."""
    kids = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(k) for k in kids)


def cmd_sample(args) -> int:
    mesh = load_mesh(args.mesh_in)
    rng_sample, _, rng_noise = _stage_streams(args.seed)
    sampler = poisson_disk_sample if args.method == "poisson" else area_uniform_sample
    samples = sampler(mesh, args.n, seed=rng_sample)
    if args.noise_t < 0.0:
        raise ValueError("--noise-t must be >= 0")
    if args.noise_t:
        samples = add_noise(samples, args.noise_t, seed=rng_noise)
    save_point_cloud(args.cloud_out, samples.to_point_cloud())
    print(f"wrote {len(samples)} points to {args.cloud_out}")
    return 0


def cmd_label(args) -> int:
    mesh = load_mesh(args.mesh_in)
    cloud = load_point_cloud(args.cloud_in)
    if len(cloud.points) == 0:
        raise ValueError("point cloud is empty")
    _, rng_label, _ = _stage_streams(args.seed)
    labeled, _knn = label_cloud(cloud.points, mesh, _config(args), seed=rng_label)
    save_candidates(args.dump_out, labeled, fmt=args.format)
    counts = np.bincount(labeled.label, minlength=3)
    print(
        f"labeled {len(labeled)} candidates: "
        f"{counts[0]} rejected / {counts[1]} near / {counts[2]} far"
    )
    return 0


def cmd_remesh(args) -> int:
    mesh = load_mesh(args.mesh_in)
    cloud = load_point_cloud(args.cloud_in)
    if len(cloud.points) == 0:
        raise ValueError("point cloud is empty")
    _, rng_label, _ = _stage_streams(args.seed)
    labeled, _knn = label_cloud(cloud.points, mesh, _config(args), seed=rng_label)
    keep = labeled.subset(labeled.label != 0)
    report = merge(sort_candidates(keep), cloud.points)
    print(
        f"accepted {report.mesh.n_faces} of {len(labeled)} candidates "
        f"({report.n_rejections} rejected after filtering)"
    )
    if len(report.mesh.non_manifold_edges()):
        print("internal error: merged mesh has non-manifold edges", file=sys.stderr)
        return 3
    save_mesh(args.mesh_out, report.mesh)
    if args.verbose:
        log = Path(args.mesh_out).with_suffix(".rejections.csv")
        write_rejection_log(log, report)
        print(f"rejection log: {log}")
    return 0


def cmd_reconstruct(args) -> int:
    cloud = load_point_cloud(args.cloud_in)
    if len(cloud.points) == 0:
        raise ValueError("point cloud is empty")
    weights = load_weights(args.weights_in)
    result = reconstruct(cloud.points, weights, _config(args))
    print(
        f"accepted {result.mesh.n_faces} of {len(result.candidates)} candidates "
        f"({result.report.n_rejections} rejected after filtering)"
    )
    if len(result.mesh.non_manifold_edges()):
        print("internal error: merged mesh has non-manifold edges", file=sys.stderr)
        return 3
    save_mesh(args.mesh_out, result.mesh)
    if args.verbose:
        log = Path(args.mesh_out).with_suffix(".rejections.csv")
        write_rejection_log(log, result.report)
        print(f"rejection log: {log}")
    return 0


def cmd_evaluate(args) -> int:
    recon = load_mesh(args.recon_in)
    gt = load_mesh(args.gt_in)
    report = evaluate(recon, gt, n_samples=args.n_samples, seed=args.seed)
    payload = asdict(report)
    with open(args.report_out, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(
        f"F(mu)={report.fscore_mu:.4f} F(2mu)={report.fscore_2mu:.4f} "
        f"chamfer_x100={report.chamfer_x100:.4f} "
        f"normal={report.normal_consistency:.4f} mu={report.mu:.6f}"
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="iermesh",
        description="Point-cloud meshing via intrinsic-extrinsic ratio filtering",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="sample a point cloud from a mesh")
    p.add_argument("mesh_in")
    p.add_argument("cloud_out")
    p.add_argument("--n", type=int, default=12800, help="target point count")
    p.add_argument("--method", choices=("poisson", "uniform"), default="poisson")
    p.add_argument(
        "--noise-t", type=float, default=0.0,
        help="Gaussian jitter level; sigma = 0.001 * t",
    )
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("label", help="dump labeled candidates for a cloud")
    p.add_argument("mesh_in")
    p.add_argument("cloud_in")
    p.add_argument("dump_out")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_label)

    p = sub.add_parser("remesh", help="oracle remesh of a cloud against its mesh")
    p.add_argument("mesh_in")
    p.add_argument("cloud_in")
    p.add_argument("mesh_out")
    p.add_argument("--verbose", action="store_true", help="emit rejection log CSV")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_remesh)

    p = sub.add_parser("reconstruct", help="mesh a bare cloud with trained weights")
    p.add_argument("cloud_in")
    p.add_argument("weights_in")
    p.add_argument("mesh_out")
    p.add_argument("--verbose", action="store_true", help="emit rejection log CSV")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="score a reconstruction against ground truth")
    p.add_argument("recon_in")
    p.add_argument("gt_in")
    p.add_argument("report_out")
    p.add_argument("--n-samples", type=int, default=1_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_evaluate)

    return top


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
