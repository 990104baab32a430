"""Core scene-domain types: rigid transforms, point clouds, tracked boxes,
cameras, and the labeled voxel grid.

Conventions
-----------
* Positions are metric, float64, shape ``(3,)`` for single points and
  ``(N, 3)`` for batches.
* Voxel indexing is half-open: cell ``(i, j, k)`` covers
  ``[origin + k*size, origin + (k+1)*size)`` along each axis.
* ``RigidTransform`` maps column points ``p -> R @ p + t``.
* Grid labels are small non-negative class ids; the reserved ids below mark
  free space, unknown predictions, and generic (not yet labeled) occupancy.
  All reserved ids fit in uint16 so grids serialize losslessly.

All types are immutable value objects; operations are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

# Reserved label ids (chosen at the top of the uint16 range so they can never
# collide with semantic class ids).
FREE = 0xFFFF
UNKNOWN = 0xFFFE
OCCUPIED = 0xFFFD

_ORTHO_TOL = 1e-9


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValidationError(f"expected a 3-vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError("vector has non-finite components")
    return a


def _as_points(points) -> np.ndarray:
    """Coerce to an (N, 3) float64 array; a single (3,) point becomes (1, 3)."""
    a = np.asarray(points, dtype=np.float64)
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2 or a.shape[1] != 3:
        raise ValidationError(f"expected points of shape (N, 3), got {a.shape}")
    return a


@dataclass(frozen=True)
class RigidTransform:
    """SE(3) transform: ``p -> rotation @ p + translation``."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = _as_vec3(self.translation)
        if r.shape != (3, 3):
            raise ValidationError(f"rotation must be 3x3, got {r.shape}")
        if not np.allclose(r @ r.T, np.eye(3), atol=_ORTHO_TOL):
            raise ValidationError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ValidationError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    @staticmethod
    def from_translation(t) -> "RigidTransform":
        return RigidTransform(np.eye(3), _as_vec3(t))

    @staticmethod
    def from_yaw(yaw: float, translation=(0.0, 0.0, 0.0)) -> "RigidTransform":
        """Rotation about +z by ``yaw`` radians, then translate."""
        c, s = np.cos(yaw), np.sin(yaw)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return RigidTransform(r, translation)

    def apply(self, points) -> np.ndarray:
        """Transform one point (3,) or a batch (N, 3); shape is preserved."""
        p = np.asarray(points, dtype=np.float64)
        single = p.ndim == 1
        out = _as_points(p) @ self.rotation.T + self.translation
        return out[0] if single else out


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Composition ``a o b`` so that ``compose(a, b).apply(p) == a.apply(b.apply(p))``."""
    return RigidTransform(a.rotation @ b.rotation,
                          a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    """Inverse transform: ``compose(invert(t), t)`` is the identity."""
    rt = t.rotation.T
    return RigidTransform(rt, -(rt @ t.translation))


@dataclass(frozen=True)
class PointCloud:
    """A set of points in one coordinate frame, optionally class-labeled."""

    positions: np.ndarray
    labels: np.ndarray | None = None
    frame_id: int = 0

    def __post_init__(self):
        p = np.ascontiguousarray(_as_points(self.positions))
        object.__setattr__(self, "positions", p)
        if self.labels is not None:
            lab = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
            if lab.shape != (len(p),):
                raise ValidationError(
                    f"labels shape {lab.shape} does not match {len(p)} points")
            object.__setattr__(self, "labels", lab)

    def __len__(self) -> int:
        return len(self.positions)

    def validate_labels(self, n_classes: int) -> None:
        """Check that all class ids are < n_classes (reserved ids excluded)."""
        if self.labels is None:
            return
        sem = self.labels[self.labels < OCCUPIED]
        if sem.size and (sem.min() < 0 or sem.max() >= n_classes):
            raise ValidationError(f"class id out of range [0, {n_classes})")

    def transformed(self, t: RigidTransform) -> "PointCloud":
        return PointCloud(t.apply(self.positions), self.labels, self.frame_id)


def concatenate_clouds(clouds: list[PointCloud], frame_id: int = 0) -> PointCloud:
    """Concatenate clouds; labels are kept only if every input has them."""
    if not clouds:
        return PointCloud(np.zeros((0, 3)), np.zeros(0, dtype=np.int64), frame_id)
    pos = np.concatenate([c.positions for c in clouds], axis=0)
    labels = None
    if all(c.labels is not None for c in clouds):
        labels = np.concatenate([c.labels for c in clouds], axis=0)
    return PointCloud(pos, labels, frame_id)


@dataclass(frozen=True)
class TrackedBox:
    """An oriented box observed at one frame of a track.

    ``pose`` maps the box's canonical frame (axis-aligned, centered at the
    origin) into the frame the track was observed in; ``center`` is the box
    center in that same frame and normally equals ``pose.translation``.
    """

    frame_id: int
    track_id: int
    center: np.ndarray
    half_extents: np.ndarray
    pose: RigidTransform

    def __post_init__(self):
        object.__setattr__(self, "center", _as_vec3(self.center))
        he = _as_vec3(self.half_extents)
        if np.any(he <= 0):
            raise ValidationError("half_extents must be strictly positive")
        object.__setattr__(self, "half_extents", he)

    @staticmethod
    def from_yaw(frame_id: int, track_id: int, center, size, yaw: float) -> "TrackedBox":
        """Build from full side lengths ``size`` and a yaw angle."""
        center = _as_vec3(center)
        half = _as_vec3(size) / 2.0
        return TrackedBox(frame_id, track_id, center, half,
                          RigidTransform.from_yaw(yaw, center))

    @property
    def yaw(self) -> float:
        return float(np.arctan2(self.pose.rotation[1, 0], self.pose.rotation[0, 0]))


def box_contains(box: TrackedBox, points) -> bool | np.ndarray:
    """Boundary-inclusive containment test in the box's canonical frame.

    Accepts one point (3,) -> bool, or a batch (N, 3) -> bool array.
    """
    p = np.asarray(points, dtype=np.float64)
    single = p.ndim == 1
    local = invert(box.pose).apply(_as_points(p))
    inside = np.all(np.abs(local) <= box.half_extents, axis=1)
    return bool(inside[0]) if single else inside


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: intrinsics in pixels plus world-to-camera extrinsics.

    Camera frame: +z forward (depth), +x right, +y down.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    extrinsics: RigidTransform
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValidationError("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("image size must be positive")


@dataclass(frozen=True)
class VoxelGridSpec:
    """Axis-aligned regular voxel grid: ``dims`` cells of ``voxel_size`` from ``origin``."""

    origin: np.ndarray
    voxel_size: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "origin", _as_vec3(self.origin))
        if self.voxel_size <= 0:
            raise ValidationError("voxel_size must be positive")
        dims = tuple(int(d) for d in self.dims)
        if len(dims) != 3 or any(d <= 0 for d in dims):
            raise ValidationError(f"dims must be three positive integers, got {self.dims}")
        object.__setattr__(self, "dims", dims)

    @property
    def extent(self) -> np.ndarray:
        return np.asarray(self.dims, dtype=np.float64) * self.voxel_size

    def matches(self, other: "VoxelGridSpec") -> bool:
        return (self.dims == other.dims
                and self.voxel_size == other.voxel_size
                and np.array_equal(self.origin, other.origin))

    def voxel_indices(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Batch voxelization: returns ``(indices (N,3) int64, inside (N,) bool)``.

        Index rows for points outside the grid are clipped and must be masked
        with ``inside`` before use.
        """
        p = _as_points(points)
        rel = (p - self.origin) / self.voxel_size
        idx = np.floor(rel).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)
        return np.clip(idx, 0, np.asarray(self.dims) - 1), inside

    def voxel_centers(self, indices) -> np.ndarray:
        idx = np.asarray(indices, dtype=np.float64)
        return self.origin + (idx + 0.5) * self.voxel_size

    def all_centers(self) -> np.ndarray:
        """Centers of every cell, shape (H*W*D, 3), C-order over (i, j, k)."""
        h, w, d = self.dims
        ii, jj, kk = np.meshgrid(np.arange(h), np.arange(w), np.arange(d), indexing="ij")
        idx = np.stack([ii.ravel(), jj.ravel(), kk.ravel()], axis=1)
        return self.voxel_centers(idx)


def voxel_of(spec: VoxelGridSpec, p) -> tuple[int, int, int] | None:
    """Cell index of ``p`` under the half-open convention, or None if outside."""
    idx, inside = spec.voxel_indices(np.asarray(p, dtype=np.float64)[None, :])
    if not inside[0]:
        return None
    return tuple(int(v) for v in idx[0])


@dataclass(frozen=True)
class DenseLabelGrid:
    """A dense voxel grid of class labels (semantic ids plus reserved ids)."""

    spec: VoxelGridSpec
    labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.shape != self.spec.dims:
            raise ValidationError(
                f"labels shape {lab.shape} does not match grid dims {self.spec.dims}")
        object.__setattr__(self, "labels", np.ascontiguousarray(lab.astype(np.int64)))

    @staticmethod
    def empty(spec: VoxelGridSpec) -> "DenseLabelGrid":
        return DenseLabelGrid(spec, np.full(spec.dims, FREE, dtype=np.int64))

    def validate_labels(self, n_classes: int) -> None:
        sem = self.labels[self.labels < OCCUPIED]
        if sem.size and (sem.min() < 0 or sem.max() >= n_classes):
            raise ValidationError(f"grid class id out of range [0, {n_classes})")

    @property
    def occupied_mask(self) -> np.ndarray:
        """True where the cell holds anything but FREE."""
        return self.labels != FREE

    def occupied_indices(self) -> np.ndarray:
        """(M, 3) indices of non-FREE cells, C-order."""
        return np.argwhere(self.occupied_mask)

    def with_labels(self, labels: np.ndarray) -> "DenseLabelGrid":
        return DenseLabelGrid(self.spec, labels)
