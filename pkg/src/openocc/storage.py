"""File formats: poses/boxes as JSON lines, scenes and checkpoints as OTEN
tensors with JSON manifests, evaluation reports as JSON.

Everything here round-trips bit-exactly except the report timestamp, which
stays inside the report header so the body can be compared byte for byte.
"""

from __future__ import annotations

import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .lift import SparseVoxelFeatures
from .nn import MLP, DualHeadModel
from .oten import read_tensor, read_tensor_stream, write_tensor, write_tensor_stream
from .scene import (
    CameraModel,
    DenseLabelGrid,
    PointCloud,
    RigidTransform,
    TrackedBox,
    VoxelGridSpec,
)
from .synthetic import SceneParams, SyntheticScene

__all__ = [
    "save_poses", "load_poses",
    "save_boxes", "load_boxes",
    "save_scene", "load_scene",
    "save_sparse_features", "load_sparse_features",
    "save_label_grid", "load_label_grid",
    "save_checkpoint", "load_checkpoint",
    "write_report", "read_report",
]

_YAW_TOL = 1e-9


def _pose_to_matrix(pose: RigidTransform) -> list[float]:
    m = np.eye(4)
    m[:3, :3] = pose.rotation
    m[:3, 3] = pose.translation
    return [float(v) for v in m.ravel()]


def _matrix_to_pose(values) -> RigidTransform:
    m = np.asarray(values, dtype=np.float64)
    if m.shape != (16,):
        raise ValidationError(f"pose matrix needs 16 values, got {m.shape}")
    m = m.reshape(4, 4)
    if not np.array_equal(m[3], [0.0, 0.0, 0.0, 1.0]):
        raise ValidationError("pose matrix bottom row must be 0 0 0 1")
    return RigidTransform(m[:3, :3], m[:3, 3])


def save_poses(path: str | Path, poses: list[RigidTransform],
               frames: list[int] | None = None) -> None:
    """One JSON object per line: {"frame": int, "matrix": [16 row-major]}."""
    frames = list(range(len(poses))) if frames is None else list(frames)
    if len(frames) != len(poses):
        raise ValidationError("frames and poses must align")
    with open(path, "w") as fp:
        for f, pose in zip(frames, poses):
            fp.write(json.dumps({"frame": int(f),
                                 "matrix": _pose_to_matrix(pose)}) + "\n")


def load_poses(path: str | Path) -> tuple[list[int], list[RigidTransform]]:
    frames, poses = [], []
    for line in _read_jsonl(path, required={"frame", "matrix"}):
        frames.append(int(line["frame"]))
        poses.append(_matrix_to_pose(line["matrix"]))
    order = np.argsort(frames, kind="stable")
    return [frames[i] for i in order], [poses[i] for i in order]


def _extract_yaw(pose: RigidTransform) -> float:
    r = pose.rotation
    yaw = math.atan2(r[1, 0], r[0, 0])
    rebuilt = RigidTransform.from_yaw(yaw, pose.translation)
    if not np.allclose(rebuilt.rotation, r, atol=_YAW_TOL):
        raise ValidationError("box pose is not a pure yaw rotation")
    return yaw


def save_boxes(path: str | Path, boxes: list[TrackedBox]) -> None:
    """One JSON object per line with center/size in the observation frame
    and orientation reduced to a yaw angle."""
    with open(path, "w") as fp:
        for b in boxes:
            row = {
                "frame": int(b.frame_id),
                "track_id": int(b.track_id),
                "center": [float(v) for v in b.center],
                "size": [float(v) for v in 2.0 * b.half_extents],
                "yaw": _extract_yaw(b.pose),
            }
            fp.write(json.dumps(row) + "\n")


def load_boxes(path: str | Path) -> list[TrackedBox]:
    required = {"frame", "track_id", "center", "size", "yaw"}
    boxes = []
    for row in _read_jsonl(path, required=required):
        center = np.asarray(row["center"], dtype=np.float64)
        size = np.asarray(row["size"], dtype=np.float64)
        pose = RigidTransform.from_yaw(float(row["yaw"]), center)
        boxes.append(TrackedBox(frame_id=int(row["frame"]),
                                track_id=int(row["track_id"]),
                                center=center, half_extents=size / 2.0,
                                pose=pose))
    boxes.sort(key=lambda b: (b.frame_id, b.track_id))
    return boxes


def _read_jsonl(path: str | Path, required: set[str]):
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        if not raw.strip():
            continue
        try:
            row = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        missing = required - set(row)
        if missing:
            raise ValidationError(f"{path}:{lineno}: missing keys {sorted(missing)}")
        yield row


# ------------------------------------------------------------------ grids

def save_label_grid(path: str | Path, grid: DenseLabelGrid) -> None:
    labels = grid.labels
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 0xFFFF:
        raise ValidationError("labels do not fit the u16 payload")
    write_tensor(path, labels.astype(np.uint16))
    side = {"origin": [float(v) for v in grid.spec.origin],
            "voxel_size": float(grid.spec.voxel_size),
            "dims": list(grid.spec.dims)}
    Path(path).with_suffix(".json").write_text(
        json.dumps(side, sort_keys=True) + "\n")


def load_label_grid(path: str | Path) -> DenseLabelGrid:
    labels = read_tensor(path).astype(np.int64)
    side = json.loads(Path(path).with_suffix(".json").read_text())
    spec = VoxelGridSpec(origin=side["origin"],
                         voxel_size=side["voxel_size"],
                         dims=tuple(side["dims"]))
    return DenseLabelGrid(spec, labels)


# ------------------------------------------------------------------ scenes

def _camera_to_dict(cam: CameraModel) -> dict:
    return {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": cam.width, "height": cam.height,
            "extrinsics": _pose_to_matrix(cam.extrinsics)}


def _camera_from_dict(d: dict) -> CameraModel:
    return CameraModel(fx=d["fx"], fy=d["fy"], cx=d["cx"], cy=d["cy"],
                       extrinsics=_matrix_to_pose(d["extrinsics"]),
                       width=d["width"], height=d["height"])


def save_scene(root: str | Path, scene: SyntheticScene) -> None:
    """Directory bundle: per-frame point/label tensors, poses and boxes as
    JSON lines, the GT grid, and a manifest with cameras and class names."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    frames = []
    for cloud in scene.clouds:
        stem = f"frame_{cloud.frame_id:04d}"
        write_tensor(root / f"{stem}.oten", cloud.positions)
        if cloud.labels is None:
            raise ValidationError("scene clouds must be labeled")
        write_tensor(root / f"{stem}_labels.oten",
                     cloud.labels.astype(np.uint16))
        frames.append(cloud.frame_id)
    save_poses(root / "poses.jsonl", scene.ego_poses, frames)
    save_boxes(root / "boxes.jsonl", scene.boxes)
    save_label_grid(root / "gt_labels.oten", scene.gt_grid)
    meta = {
        "frames": frames,
        "class_names": list(scene.class_names),
        "cameras": [_camera_to_dict(c) for c in scene.cameras],
        "params": {k: (list(v) if isinstance(v, tuple) else v)
                   for k, v in vars(scene.params).items()},
    }
    (root / "meta.json").write_text(json.dumps(meta, indent=2,
                                               sort_keys=True) + "\n")


def load_scene(root: str | Path) -> SyntheticScene:
    root = Path(root)
    meta = json.loads((root / "meta.json").read_text())
    clouds = []
    for f in meta["frames"]:
        stem = f"frame_{f:04d}"
        positions = read_tensor(root / f"{stem}.oten")
        labels = read_tensor(root / f"{stem}_labels.oten").astype(np.int64)
        clouds.append(PointCloud(positions, labels, frame_id=f))
    _, poses = load_poses(root / "poses.jsonl")
    params_raw = {k: (tuple(v) if isinstance(v, list) else v)
                  for k, v in meta["params"].items()}
    return SyntheticScene(
        clouds=clouds,
        boxes=load_boxes(root / "boxes.jsonl"),
        ego_poses=poses,
        cameras=[_camera_from_dict(d) for d in meta["cameras"]],
        gt_grid=load_label_grid(root / "gt_labels.oten"),
        class_names=tuple(meta["class_names"]),
        params=SceneParams(**params_raw),
    )


# --------------------------------------------------------- sparse features

def save_sparse_features(path: str | Path, feats: SparseVoxelFeatures) -> None:
    """Three tensors in one stream: voxel indices (M,3) u16, per-voxel point
    counts (M,) u16, features (M,C) f32. Entries sort by index so reruns are
    byte-identical."""
    keys = sorted(feats.entries)
    idx = np.asarray(keys, dtype=np.int64).reshape(len(keys), 3)
    counts = np.asarray([feats.counts[k] for k in keys], dtype=np.int64)
    if keys and (idx.max() > 0xFFFF or counts.max() > 0xFFFF):
        raise ValidationError("indices or counts exceed the u16 payload")
    vecs = (np.stack([feats.entries[k] for k in keys])
            if keys else np.zeros((0, 0)))
    with open(path, "wb") as fp:
        write_tensor_stream(fp, idx.astype(np.uint16))
        write_tensor_stream(fp, counts.astype(np.uint16))
        write_tensor_stream(fp, vecs.astype(np.float32))
    side = {"origin": [float(v) for v in feats.spec.origin],
            "voxel_size": float(feats.spec.voxel_size),
            "dims": list(feats.spec.dims)}
    Path(path).with_suffix(".json").write_text(
        json.dumps(side, sort_keys=True) + "\n")


def load_sparse_features(path: str | Path) -> SparseVoxelFeatures:
    with open(path, "rb") as fp:
        idx = read_tensor_stream(fp).astype(np.int64)
        counts = read_tensor_stream(fp).astype(np.int64)
        vecs = read_tensor_stream(fp).astype(np.float64)
    side = json.loads(Path(path).with_suffix(".json").read_text())
    spec = VoxelGridSpec(origin=side["origin"],
                         voxel_size=side["voxel_size"],
                         dims=tuple(side["dims"]))
    entries = {tuple(map(int, idx[i])): vecs[i] for i in range(len(idx))}
    ctr = {tuple(map(int, idx[i])): int(counts[i]) for i in range(len(idx))}
    return SparseVoxelFeatures(spec, entries, ctr)


# ------------------------------------------------------------- checkpoints

def save_checkpoint(stem: str | Path, model: DualHeadModel,
                    extra: dict | None = None) -> None:
    """stem.oten holds every parameter tensor in order; stem.json records
    the split into the three sub-networks plus layer shapes."""
    stem = Path(stem)
    nets = [("feature_net", model.feature_net),
            ("occ_head", model.occ_head),
            ("lang_head", model.lang_head)]
    layers = []
    with open(stem.with_suffix(".oten"), "wb") as fp:
        for name, net in nets:
            for i, p in enumerate(net.params):
                kind = "weight" if i % 2 == 0 else "bias"
                layers.append({"net": name, "kind": kind,
                               "shape": list(p.shape)})
                write_tensor_stream(fp, p)
    manifest = {"layers": layers,
                "activation": model.feature_net.activation,
                "extra": extra or {}}
    stem.with_suffix(".json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(stem: str | Path) -> tuple[DualHeadModel, dict]:
    stem = Path(stem)
    manifest = json.loads(stem.with_suffix(".json").read_text())
    grouped: dict[str, list[np.ndarray]] = {
        "feature_net": [], "occ_head": [], "lang_head": []}
    with open(stem.with_suffix(".oten"), "rb") as fp:
        for layer in manifest["layers"]:
            tensor = read_tensor_stream(fp)
            if list(tensor.shape) != layer["shape"]:
                raise ValidationError(
                    f"checkpoint shape mismatch: manifest {layer['shape']} "
                    f"vs tensor {list(tensor.shape)}")
            grouped[layer["net"]].append(tensor)
    act = manifest["activation"]
    model = DualHeadModel(MLP(grouped["feature_net"], act),
                          MLP(grouped["occ_head"], act),
                          MLP(grouped["lang_head"], act))
    return model, manifest


# ----------------------------------------------------------------- reports

def write_report(path: str | Path, body: dict) -> None:
    """The timestamp lives only in the header; the body is deterministic."""
    doc = {"header": {"timestamp":
                      datetime.now(timezone.utc).isoformat(),
                      "format_version": 1},
           **body}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_report(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
