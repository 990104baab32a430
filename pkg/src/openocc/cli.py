"""Command-line front end.

Every subcommand is a thin wrapper over the library: parse flags, merge them
over the config file (flags win), call the pipeline, write files. Outputs are
deterministic given config plus inputs; rerunning a command overwrites its
outputs byte for byte, except the timestamp in a report header.

Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, apply_overrides, load_config
from .errors import NumericalError, ValidationError
from .oten import read_tensor, write_tensor
from .pipeline import (
    bundle_from_embeddings,
    densify_scene,
    evaluate_grids,
    lift_scene,
    predict_grid,
    train_on_grid,
)
from .scene import PointCloud
from .storage import (
    load_checkpoint,
    load_label_grid,
    load_scene,
    load_sparse_features,
    save_checkpoint,
    save_label_grid,
    save_scene,
    save_sparse_features,
    write_report,
)
from .surface import estimate_normals, export_obj, poisson_reconstruct
from .synthetic import generate_synthetic_scene
from .lift import FeatureMap
from .vocab import build_prompts, load_embeddings, mock_embeddings, save_embeddings

__all__ = ["main"]


def _config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in vars(args)
                 if k in RunConfig.__dataclass_fields__}
    return apply_overrides(cfg, overrides)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--seed", type=int, default=None)


def cmd_gen(args) -> int:
    cfg = _config_from_args(args)
    scene = generate_synthetic_scene(cfg.seed, cfg.n_frames, cfg.grid_spec())
    save_scene(args.out, scene)
    print(f"wrote {cfg.n_frames} frames to {args.out}")
    return 0


def cmd_densify(args) -> int:
    cfg = _config_from_args(args)
    scene = load_scene(args.scene)
    result = densify_scene(scene, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_tensor(out / "fused.oten", result.fused_world.positions)
    write_tensor(out / "fused_labels.oten",
                 result.fused_world.labels.astype(np.uint16))
    export_obj(result.mesh, out / "mesh.obj")
    save_label_grid(out / "grid.oten", result.grid)
    print(f"fused {len(result.fused_world.positions)} points, "
          f"{int(result.grid.occupied_mask.sum())} occupied voxels")
    return 0


def cmd_lift(args) -> int:
    cfg = _config_from_args(args)
    scene = load_scene(args.scene)
    maps = [FeatureMap(read_tensor(p))
            for p in sorted(Path(args.features).glob("*.oten"))]
    labels_path = Path(args.cloud).with_name(Path(args.cloud).stem
                                             + "_labels.oten")
    labels = (read_tensor(labels_path).astype(np.int64)
              if labels_path.exists() else None)
    cloud = PointCloud(read_tensor(args.cloud), labels)
    feats = lift_scene(cloud, maps, scene, cfg)
    if not feats.entries:
        print("warning: no point was visible in any camera", file=sys.stderr)
    save_sparse_features(args.out, feats)
    print(f"lifted features onto {len(feats.entries)} voxels")
    return 0


def cmd_mock_embed(args) -> int:
    cfg = _config_from_args(args)
    classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    vocab = build_prompts(classes, args.style)
    embs = mock_embeddings(vocab, c_o=cfg.c_o, seed=cfg.seed)
    oten_path, _ = save_embeddings(args.out, embs, vocab)
    print(f"wrote {len(vocab.prompts)} embeddings to {oten_path}")
    return 0


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    grid = load_label_grid(args.grid)
    emb, sidecar = load_embeddings(args.embeddings)
    bundle = bundle_from_embeddings(emb, sidecar, cfg.unknown_set)
    feats = load_sparse_features(args.features) if args.features else None
    model, result = train_on_grid(grid, bundle, cfg, feats=feats,
                                  mock_kd=args.mock_kd)
    save_checkpoint(args.out, model, extra={
        "config": cfg.to_dict(),
        "loss_trace": [{k: round(v, 9) for k, v in row.items()}
                       for row in result.trace],
    })
    print(f"trained {cfg.epochs} epochs, final loss {result.final_loss:.6f}")
    return 0


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    model, _ = load_checkpoint(args.checkpoint)
    grid = load_label_grid(args.grid)
    gt = load_label_grid(args.gt)
    emb, sidecar = load_embeddings(args.embeddings)
    bundle = bundle_from_embeddings(emb, sidecar, cfg.unknown_set)
    feats = load_sparse_features(args.features) if args.features else None
    deltas = ([float(d) for d in args.sweep.split(",")]
              if args.sweep else [cfg.delta])
    body = None
    sweep = []
    for delta in deltas:
        step_cfg = apply_overrides(cfg, {"delta": delta})
        pred = predict_grid(model, grid, bundle, step_cfg, feats=feats)
        report = evaluate_grids(pred, gt, bundle, step_cfg)
        sweep.append({"delta": delta, "miou": report["miou"],
                      "per_class_iou": report["per_class_iou"],
                      "predicted_unknown":
                          report["counts"]["predicted_unknown"]})
        if body is None:
            body = report
            if args.scores_dir:
                scores_dir = Path(args.scores_dir)
                scores_dir.mkdir(parents=True, exist_ok=True)
                for name, arr in pred.score_grids().items():
                    write_tensor(scores_dir / f"{name}.oten",
                                 arr.astype(np.float32))
    body["delta_sweep"] = sweep
    write_report(args.out, body)
    print(f"miou {body['miou']}" + (
        f", auroc {body['auroc']}" if "auroc" in body else ""))
    return 0


def cmd_export_mesh(args) -> int:
    cfg = _config_from_args(args)
    positions = read_tensor(args.cloud)
    cloud = PointCloud(positions)
    oriented = estimate_normals(cloud, k=cfg.normals_k,
                                viewpoint=json.loads(args.viewpoint))
    mesh = poisson_reconstruct(oriented, grid_res=cfg.poisson_grid_res)
    export_obj(mesh, args.out)
    print(f"wrote {len(mesh.triangles)} triangles to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="openocc",
        description="Open-set 3D occupancy pipeline at desk scale")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic scene")
    _add_common(p)
    p.add_argument("--n-frames", dest="n_frames", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("densify", help="fuse frames into a labeled grid")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("lift", help="pool image features onto voxels")
    _add_common(p)
    p.add_argument("--scene", required=True)
    p.add_argument("--cloud", required=True,
                   help="world-frame points (.oten; labels file alongside)")
    p.add_argument("--features", required=True,
                   help="directory of per-camera feature maps (.oten)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("mock-embed", help="deterministic prompt embeddings")
    _add_common(p)
    p.add_argument("--classes", required=True, help="comma-separated names")
    p.add_argument("--style", default="A", choices=("A", "B", "C"))
    p.add_argument("--out", required=True, help="output stem")
    p.set_defaults(func=cmd_mock_embed)

    p = sub.add_parser("train", help="fit the dual-head model to a grid")
    _add_common(p)
    p.add_argument("--grid", required=True)
    p.add_argument("--embeddings", required=True, help="embedding stem")
    p.add_argument("--features", default=None, help="lifted features file")
    p.add_argument("--mock-kd", action="store_true",
                   help="distill toward each class's own embedding")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--out", required=True, help="checkpoint stem")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a grid against ground truth")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--grid", required=True, help="occupancy input grid")
    p.add_argument("--gt", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--features", default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--sweep", default=None,
                   help="comma-separated deltas to sweep")
    p.add_argument("--scores-dir", default=None,
                   help="write per-voxel score grids here")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("export-mesh", help="reconstruct a cloud to OBJ")
    _add_common(p)
    p.add_argument("--cloud", required=True)
    p.add_argument("--viewpoint", default="[0,0,0]",
                   help="JSON [x,y,z] used to orient normals")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_mesh)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
