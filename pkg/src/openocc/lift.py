"""Backward 2D-to-3D feature lifting.

Points are projected into each camera, pixel features are read with bilinear
interpolation, pooled across the views that see the point, then pooled again
within each voxel. The result is a sparse voxel feature set: most of the grid
never receives a feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .scene import CameraModel, PointCloud, VoxelGridSpec

POOL_MODES = ("mean", "max")


@dataclass(frozen=True)
class FeatureMap:
    """Per-pixel feature image, laid out height x width x channels."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ValidationError(
                f"feature map must be (height, width, channels), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValidationError("feature map has non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class SparseVoxelFeatures:
    spec: VoxelGridSpec
    entries: dict[tuple[int, int, int], np.ndarray] = field(default_factory=dict)
    counts: dict[tuple[int, int, int], int] = field(default_factory=dict)

    def __post_init__(self):
        if set(self.entries) != set(self.counts):
            raise ValidationError("entries and counts cover different voxels")
        for key, vec in self.entries.items():
            if not np.all(np.isfinite(vec)):
                raise ValidationError(f"non-finite feature at voxel {key}")
            if self.counts[key] < 1:
                raise ValidationError(f"count below 1 at voxel {key}")

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def channels(self) -> int:
        for vec in self.entries.values():
            return len(vec)
        return 0


def project_point(p, cam: CameraModel):
    """Pinhole projection. Returns (u, v, depth) in pixels, or None when the
    point sits behind the camera (depth <= 1e-6) or outside the image."""
    x, y, z = cam.extrinsics.apply(np.asarray(p, dtype=np.float64))
    if z <= 1e-6:
        return None
    u = cam.cx + cam.fx * x / z
    v = cam.cy + cam.fy * y / z
    if not (0.0 <= u <= cam.width - 1 and 0.0 <= v <= cam.height - 1):
        return None
    return float(u), float(v), float(z)


def bilinear_sample(fm: FeatureMap, u: float, v: float) -> np.ndarray:
    """Blend of the four pixels around (u, v); u runs along width."""
    if not (0.0 <= u <= fm.width - 1 and 0.0 <= v <= fm.height - 1):
        raise ValidationError(f"sample ({u}, {v}) outside image")
    u0 = min(int(np.floor(u)), max(fm.width - 2, 0))
    v0 = min(int(np.floor(v)), max(fm.height - 2, 0))
    u1 = min(u0 + 1, fm.width - 1)
    v1 = min(v0 + 1, fm.height - 1)
    du, dv = u - u0, v - v0
    d = fm.data
    return (
        d[v0, u0] * (1 - du) * (1 - dv)
        + d[v0, u1] * du * (1 - dv)
        + d[v1, u0] * (1 - du) * dv
        + d[v1, u1] * du * dv
    )


def pool_features(vectors, mode: str = "mean") -> np.ndarray:
    if mode not in POOL_MODES:
        raise ValidationError(f"unknown pooling mode {mode!r}")
    vecs = [np.asarray(v, dtype=np.float64) for v in vectors]
    if not vecs:
        raise ValidationError("cannot pool an empty list")
    width = len(vecs[0])
    if any(len(v) != width for v in vecs):
        raise ValidationError("pooled vectors differ in length")
    stack = np.stack(vecs)
    return stack.mean(axis=0) if mode == "mean" else stack.max(axis=0)


def _project_all(pts: np.ndarray, cam: CameraModel):
    # Vectorized projection of every point into one camera.
    cam_pts = cam.extrinsics.apply(pts)
    z = cam_pts[:, 2]
    ok = z > 1e-6
    u = np.zeros(len(pts))
    v = np.zeros(len(pts))
    zs = np.where(ok, z, 1.0)
    u[ok] = cam.cx + cam.fx * cam_pts[ok, 0] / zs[ok]
    v[ok] = cam.cy + cam.fy * cam_pts[ok, 1] / zs[ok]
    ok &= (u >= 0) & (u <= cam.width - 1) & (v >= 0) & (v <= cam.height - 1)
    return u, v, ok


def _bilinear_many(fm: FeatureMap, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    u0 = np.floor(u).astype(np.int64)
    v0 = np.floor(v).astype(np.int64)
    u0 = np.clip(u0, 0, max(fm.width - 2, 0))
    v0 = np.clip(v0, 0, max(fm.height - 2, 0))
    du = (u - u0)[:, None]
    dv = (v - v0)[:, None]
    d = fm.data
    u1 = np.minimum(u0 + 1, fm.width - 1)
    v1 = np.minimum(v0 + 1, fm.height - 1)
    return (
        d[v0, u0] * (1 - du) * (1 - dv)
        + d[v0, u1] * du * (1 - dv)
        + d[v1, u0] * (1 - du) * dv
        + d[v1, u1] * du * dv
    )


def build_sparse_voxel_features(
    cloud: PointCloud,
    cams: list[tuple[CameraModel, FeatureMap]],
    spec: VoxelGridSpec,
    mode: str = "mean",
) -> SparseVoxelFeatures:
    """Lift image features onto the voxels the cloud touches.

    Each point pools features over the cameras that see it; each voxel pools
    over its contributing points. Unseen points contribute nothing. Mean-mode
    results can shift by ~1e-6 under point reorderings (plain accumulation).
    """
    if mode not in POOL_MODES:
        raise ValidationError(f"unknown pooling mode {mode!r}")
    if not cams:
        raise ValidationError("need at least one camera")
    channels = cams[0][1].channels
    for _, fm in cams:
        if fm.channels != channels:
            raise ValidationError("feature maps disagree on channel count")

    pts = cloud.positions
    if len(pts) == 0:
        return SparseVoxelFeatures(spec)

    feat_sum = np.zeros((len(pts), channels))
    feat_max = np.full((len(pts), channels), -np.inf)
    views = np.zeros(len(pts), dtype=np.int64)
    for cam, fm in cams:
        u, v, ok = _project_all(pts, cam)
        if not ok.any():
            continue
        sampled = _bilinear_many(fm, u[ok], v[ok])
        feat_sum[ok] += sampled
        feat_max[ok] = np.maximum(feat_max[ok], sampled)
        views[ok] += 1

    seen = views > 0
    if mode == "mean":
        per_point = feat_sum[seen] / views[seen, None]
    else:
        per_point = feat_max[seen]

    idx, inside = spec.voxel_indices(pts[seen])
    idx, per_point = idx[inside], per_point[inside]
    if len(idx) == 0:
        return SparseVoxelFeatures(spec)

    flat = np.ravel_multi_index((idx[:, 0], idx[:, 1], idx[:, 2]), spec.dims)
    uniq, inverse, counts = np.unique(flat, return_inverse=True,
                                      return_counts=True)
    if mode == "mean":
        acc = np.zeros((len(uniq), channels))
        np.add.at(acc, inverse, per_point)
        pooled = acc / counts[:, None]
    else:
        acc = np.full((len(uniq), channels), -np.inf)
        np.maximum.at(acc, inverse, per_point)
        pooled = acc

    keys = np.stack(np.unravel_index(uniq, spec.dims), axis=1)
    entries = {tuple(map(int, k)): pooled[i] for i, k in enumerate(keys)}
    count_map = {tuple(map(int, k)): int(counts[i]) for i, k in enumerate(keys)}
    return SparseVoxelFeatures(spec, entries, count_map)
