"""Batch command-line interface.

Subcommands: add-noise, denoise-gnf, denoise-net, voxelize, gen-data,
train, eval. Shared settings come from an optional JSON config file;
explicit flags always win over file values.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .config import PipelineConfig, load_config, merge_overrides
from .gnf import GnfParams, gnf_denoise
from .mesh import MeshError, load_mesh, save_mesh
from .metrics import evaluate
from .net import NetworkSpec, load_weights, save_weights
from .noise import NoiseSpec, add_noise
from .pipeline import (
    LearnedDenoiseParams,
    build_training_set,
    denoise_learned,
    load_training_set,
    save_training_set,
    train_network,
)
from .voxelize import VoxelParams, save_grid, voxelize_face

logger = logging.getLogger(__name__)


def spec_from_config(config: PipelineConfig, input_edge: int | None = None) -> NetworkSpec:
    return NetworkSpec(
        input_edge=2 * config.ts + 1 if input_edge is None else input_edge,
        input_channels=3,
        block_channels=(64, 128, 256),
        stem_kernel=5,
        kernel=3,
        fc_widths=(512, 256, 128),
        mu_g_list=config.mu_g_list,
    )


def _voxel_params(config: PipelineConfig) -> VoxelParams:
    return VoxelParams(ts=config.ts, alpha_c=config.alpha_c)


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--mu-g", type=float, dest="mu_g")
    parser.add_argument("--nf", type=int)
    parser.add_argument("--nv", type=int)
    parser.add_argument("--ts", type=int)
    parser.add_argument("--alpha-c", type=float, dest="alpha_c")
    parser.add_argument("--seed", type=int)


def _resolve_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    return merge_overrides(
        config,
        mu_g=getattr(args, "mu_g", None),
        nf=getattr(args, "nf", None),
        nv=getattr(args, "nv", None),
        ts=getattr(args, "ts", None),
        alpha_c=getattr(args, "alpha_c", None),
        seed=getattr(args, "seed", None),
    )


def _cmd_add_noise(args) -> int:
    config = _resolve_config(args)
    mesh = load_mesh(args.infile)
    spec = NoiseSpec(
        kind=args.kind,
        level=args.level,
        impulse_fraction=args.impulse_fraction,
        seed=config.seed,
        direction=args.direction,
    )
    save_mesh(add_noise(mesh, spec), args.outfile)
    print(f"wrote {args.outfile}")
    return 0


def _print_progress(truth):
    def progress(iteration, mesh):
        report = evaluate(mesh, truth)
        print(f"iteration {iteration}: E_a={report.e_a:.6g} E_v={report.e_v:.6g}")

    return progress


def _cmd_denoise_gnf(args) -> int:
    config = _resolve_config(args)
    mesh = load_mesh(args.infile)
    params = GnfParams(mu_g=config.mu_g, filter_iters=config.nf, vertex_iters=config.nv)
    progress = None
    if args.truth:
        progress = _print_progress(load_mesh(args.truth))
    denoised = gnf_denoise(mesh, params, progress=progress)
    save_mesh(denoised, args.outfile)
    print(f"wrote {args.outfile}")
    return 0


def _parse_weight_args(entries):
    """Weight map from --weights flags: either one path or INDEX=PATH pairs."""
    if len(entries) == 1 and "=" not in entries[0]:
        return load_weights(entries[0])
    weight_map = {}
    for entry in entries:
        index, sep, path = entry.partition("=")
        if not sep or not index.isdigit():
            raise SystemExit(
                f"--weights expects PATH or INDEX=PATH, got {entry!r}"
            )
        weight_map[int(index)] = load_weights(path)
    return weight_map


def _cmd_denoise_net(args) -> int:
    config = _resolve_config(args)
    mesh = load_mesh(args.infile)
    weight_set = _parse_weight_args(args.weights)
    stats = None
    truth = None
    if args.truth:
        from .pipeline import DenoiseStats

        truth = load_mesh(args.truth)
        stats = DenoiseStats()
    denoised = denoise_learned(
        mesh,
        weight_set,
        LearnedDenoiseParams(n_f=config.nf, n_v=config.nv, mu_g=config.mu_g),
        spec=spec_from_config(config),
        voxel_params=_voxel_params(config),
        truth=truth,
        stats=stats,
    )
    if stats is not None:
        for i, e_a in enumerate(stats.e_a_trace, start=1):
            print(f"iteration {i}: E_a={e_a:.6g}")
    save_mesh(denoised, args.outfile)
    print(f"wrote {args.outfile}")
    return 0


def _cmd_voxelize(args) -> int:
    config = _resolve_config(args)
    mesh = load_mesh(args.infile)
    grid = voxelize_face(mesh, args.face, _voxel_params(config))
    save_grid(grid, args.outfile)
    print(f"wrote {args.outfile}")
    return 0


def _cmd_gen_data(args) -> int:
    config = _resolve_config(args)
    if len(args.noisy) != len(args.truth):
        raise SystemExit(
            f"{len(args.noisy)} --noisy paths but {len(args.truth)} --truth paths"
        )
    meshes = [
        (load_mesh(noisy), load_mesh(truth))
        for noisy, truth in zip(args.noisy, args.truth)
    ]
    tuples = build_training_set(
        meshes,
        args.quota,
        config.seed,
        mu_g_list=config.mu_g_list,
        voxel_params=_voxel_params(config),
    )
    save_training_set(tuples, args.outdir)
    print(f"wrote {len(tuples)} tuples to {args.outdir}")
    return 0


def _cmd_train(args) -> int:
    config = _resolve_config(args)
    tuples = load_training_set(args.data)
    if not tuples:
        raise SystemExit(f"no training tuples in {args.data}")
    edge = tuples[0].grid.labels.shape[0]
    spec = spec_from_config(config, input_edge=edge)
    result = train_network(
        tuples,
        spec,
        epochs=args.epochs,
        batch_size=args.batch,
        seed=config.seed,
    )
    save_weights(result.weights, args.outfile)
    final = result.losses[-1] if result.losses else float("nan")
    print(f"trained {result.steps} steps, final loss {final:.6g}; wrote {args.outfile}")
    return 0


def _cmd_eval(args) -> int:
    denoised = load_mesh(args.infile)
    truth = load_mesh(args.truth)
    report = evaluate(denoised, truth)
    print(f"E_a={report.e_a:.6g} E_v={report.e_v:.6g}")
    if args.json:
        payload = json.dumps(
            {
                "e_a": report.e_a,
                "e_v": report.e_v,
                "faces": report.faces,
                "vertices": report.vertices,
            },
            indent=2,
        )
        if args.json == "-":
            print(payload)
        else:
            with open(args.json, "w") as fh:
                fh.write(payload + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="normnet", description="Mesh denoising toolkit"
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("add-noise", help="displace vertices of a clean mesh")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--kind", choices=("gaussian", "impulsive"), default="gaussian")
    p.add_argument("--level", type=float, required=True)
    p.add_argument("--impulse-fraction", type=float, default=0.1)
    p.add_argument("--direction", choices=("normal", "random"), default="normal")
    _add_common(p)
    p.set_defaults(func=_cmd_add_noise)

    p = sub.add_parser("denoise-gnf", help="classical guided normal filtering")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--truth", help="ground truth mesh for per-iteration metrics")
    _add_common(p)
    p.set_defaults(func=_cmd_denoise_gnf)

    p = sub.add_parser("denoise-net", help="learned iterative denoising")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument(
        "--weights",
        action="append",
        required=True,
        help="weights file, or INDEX=PATH per staged network (repeatable)",
    )
    p.add_argument("--truth", help="ground truth mesh for per-iteration metrics")
    _add_common(p)
    p.set_defaults(func=_cmd_denoise_net)

    p = sub.add_parser("voxelize", help="voxelize one face neighborhood")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--face", type=int, required=True)
    p.add_argument("--out", dest="outfile", required=True)
    _add_common(p)
    p.set_defaults(func=_cmd_voxelize)

    p = sub.add_parser("gen-data", help="build a training set from mesh pairs")
    p.add_argument("--noisy", action="append", required=True)
    p.add_argument("--truth", action="append", required=True)
    p.add_argument("--out", dest="outdir", required=True)
    p.add_argument("--quota", type=int, default=200)
    _add_common(p)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("train", help="train a network on a training set")
    p.add_argument("--data", required=True)
    p.add_argument("--out", dest="outfile", required=True)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=80)
    _add_common(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="compare a denoised mesh against truth")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--json", help="also write a JSON report ('-' for stdout)")
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (OSError, ValueError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
