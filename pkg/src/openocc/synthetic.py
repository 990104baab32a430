"""Deterministic synthetic LiDAR scenes for desk-scale experiments.

The generator builds a small driving-like world inside a voxel grid: a ground
plane, a building, a tree crown, a barrier, and one box-shaped object moving
at constant velocity. Each frame samples points on object *surfaces* (LiDAR
returns carry no interior points), expresses them in that frame's sensor
coordinates, and reports the moving object's box plus the ego pose. A few
returns from the ego vehicle's own hull are included so ego filtering has
something to remove.

Everything is driven by one integer seed; the same seed reproduces the scene
bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ValidationError
from .scene import (
    FREE,
    CameraModel,
    DenseLabelGrid,
    PointCloud,
    RigidTransform,
    TrackedBox,
    VoxelGridSpec,
    compose,
    invert,
)

# Class layout of the generated world. Names follow the usual driving
# vocabulary so prompt construction can expand them directly.
SCENE_CLASS_NAMES = ("drivable surface", "manmade", "vegetation", "barrier", "car")
GROUND_CLASS = 0
CAR_CLASS = 4


@dataclass(frozen=True)
class SceneParams:
    """Generator knobs. Fractions are relative to the grid extent."""

    points_per_frame: int = 800
    min_points_per_class: int = 30
    ego_hull_points: int = 16
    car_yaw: float = 0.0
    car_velocity_frac: tuple[float, float, float] = (0.055, 0.018, 0.0)
    ego_velocity_frac: tuple[float, float, float] = (0.045, 0.004, 0.0)
    ego_yaw_rate: float = 0.03
    n_cameras: int = 3
    image_size: tuple[int, int] = (160, 120)
    focal_px: float = 120.0


@dataclass(frozen=True)
class SyntheticScene:
    """Output bundle of :func:`generate_synthetic_scene`."""

    clouds: list[PointCloud]
    boxes: list[TrackedBox]
    ego_poses: list[RigidTransform]
    cameras: list[CameraModel]
    gt_grid: DenseLabelGrid
    class_names: tuple[str, ...] = SCENE_CLASS_NAMES
    params: SceneParams = field(default_factory=SceneParams)

    def boxes_at(self, frame_id: int) -> list[TrackedBox]:
        return [b for b in self.boxes if b.frame_id == frame_id]


@dataclass(frozen=True)
class _Rect:
    """Axis-aligned rectangle patch: corner plus two orthogonal edge vectors."""

    corner: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray

    @property
    def area(self) -> float:
        return float(np.linalg.norm(np.cross(self.edge_u, self.edge_v)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        ab = rng.random((n, 2))
        return self.corner + ab[:, :1] * self.edge_u + ab[:, 1:] * self.edge_v


def _box_shell_rects(center, size, yaw: float = 0.0, inset: float = 0.0) -> list[_Rect]:
    """Four side faces plus the top face of a box (no bottom: LiDAR never sees it).

    inset shrinks the shell so sampled points stay strictly inside the box even
    after frame-change round-off; keep it tiny relative to the box.
    """
    c = np.asarray(center, dtype=np.float64)
    hx, hy, hz = np.asarray(size, dtype=np.float64) / 2.0 - inset
    rot = RigidTransform.from_yaw(yaw, c)

    def rect(corner, eu, ev):
        corner = rot.apply(np.asarray(corner, dtype=np.float64))
        eu = rot.rotation @ np.asarray(eu, dtype=np.float64)
        ev = rot.rotation @ np.asarray(ev, dtype=np.float64)
        return _Rect(corner, eu, ev)

    return [
        rect([-hx, -hy, -hz], [2 * hx, 0, 0], [0, 0, 2 * hz]),   # y- side
        rect([-hx, +hy, -hz], [2 * hx, 0, 0], [0, 0, 2 * hz]),   # y+ side
        rect([-hx, -hy, -hz], [0, 2 * hy, 0], [0, 0, 2 * hz]),   # x- side
        rect([+hx, -hy, -hz], [0, 2 * hy, 0], [0, 0, 2 * hz]),   # x+ side
        rect([-hx, -hy, +hz], [2 * hx, 0, 0], [0, 2 * hy, 0]),   # top
    ]


def _sample_sphere(rng: np.random.Generator, center, radius: float, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return np.asarray(center) + radius * v


def _mark_rect_cells(labels: np.ndarray, spec: VoxelGridSpec, r: _Rect, class_id: int) -> None:
    """Mark every cell the axis-aligned rectangle passes through."""
    lo = np.minimum(r.corner, r.corner + r.edge_u + r.edge_v)
    hi = np.maximum(r.corner, r.corner + r.edge_u + r.edge_v)
    rel_lo = (lo - spec.origin) / spec.voxel_size
    rel_hi = (hi - spec.origin) / spec.voxel_size
    # Half-open cells: the upper bound is nudged down so a span ending exactly
    # on a cell boundary does not bleed into the next cell.
    i0 = np.maximum(np.floor(rel_lo).astype(int), 0)
    i1 = np.minimum(np.floor(rel_hi - 1e-12).astype(int), np.asarray(spec.dims) - 1)
    i1 = np.maximum(i1, i0)
    if np.any(i0 > np.asarray(spec.dims) - 1) or np.any(i1 < 0):
        return
    labels[i0[0]:i1[0] + 1, i0[1]:i1[1] + 1, i0[2]:i1[2] + 1] = class_id


def _mark_sphere_cells(labels: np.ndarray, spec: VoxelGridSpec, center, radius: float,
                       class_id: int) -> None:
    """Mark cells whose box intersects the spherical shell (exact test)."""
    centers = spec.all_centers().reshape(*spec.dims, 3)
    half = spec.voxel_size / 2.0
    d = np.abs(centers - np.asarray(center))
    nearest = np.linalg.norm(np.maximum(d - half, 0.0), axis=-1)
    farthest = np.linalg.norm(d + half, axis=-1)
    labels[(nearest <= radius) & (radius <= farthest)] = class_id


def _mark_sampled_cells(labels: np.ndarray, spec: VoxelGridSpec, points: np.ndarray,
                        class_id: int) -> None:
    idx, inside = spec.voxel_indices(points)
    idx = idx[inside]
    labels[idx[:, 0], idx[:, 1], idx[:, 2]] = class_id


def _look_at(eye: np.ndarray, target: np.ndarray) -> RigidTransform:
    """World-to-camera transform for a camera at ``eye`` looking at ``target``.

    Camera axes: +z toward the target, +x right, +y down (z-up world).
    """
    fwd = target - eye
    fwd = fwd / np.linalg.norm(fwd)
    up = np.array([0.0, 0.0, 1.0])
    if abs(fwd @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    right = np.cross(fwd, up)
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    r_wc = np.stack([right, down, fwd], axis=0)
    return RigidTransform(r_wc, -(r_wc @ eye))


def _camera_rig(spec: VoxelGridSpec, params: SceneParams) -> list[CameraModel]:
    center = spec.origin + spec.extent / 2.0
    # Aim slightly below the volume center: the scene mass sits near the ground.
    target = center.copy()
    target[2] = spec.origin[2] + 0.28 * spec.extent[2]
    offsets = np.array([
        [-0.75, -0.55, 0.55],
        [0.75, 0.60, 0.50],
        [0.00, -0.80, 0.80],
        [0.80, -0.60, 0.60],
    ])
    w, h = params.image_size
    cams = []
    for off in offsets[:params.n_cameras]:
        eye = center + off * spec.extent
        cams.append(CameraModel(
            fx=params.focal_px, fy=params.focal_px,
            cx=(w - 1) / 2.0, cy=(h - 1) / 2.0,
            extrinsics=_look_at(eye, target), width=w, height=h))
    return cams


class _World:
    """Static geometry in world coordinates, scaled to the grid extent."""

    def __init__(self, spec: VoxelGridSpec, params: SceneParams):
        o, ext = spec.origin, spec.extent
        self.ground_z = o[2] + 0.103 * ext[2]
        pad = 0.002 * ext
        self.static_rects: list[tuple[int, _Rect]] = [(GROUND_CLASS, _Rect(
            np.array([o[0] + pad[0], o[1] + pad[1], self.ground_z]),
            np.array([ext[0] - 2 * pad[0], 0.0, 0.0]),
            np.array([0.0, ext[1] - 2 * pad[1], 0.0])))]

        bld_size = np.array([0.27, 0.22, 0.33]) * ext
        bld_center = o + np.array([0.72, 0.71, 0.0]) * ext
        bld_center[2] = self.ground_z + bld_size[2] / 2.0
        for r in _box_shell_rects(bld_center, bld_size):
            self.static_rects.append((1, r))

        self.tree_center = o + np.array([0.26, 0.70, 0.40]) * ext
        self.tree_radius = 0.14 * float(ext.min())

        bar_size = np.array([0.34, 0.045, 0.115]) * ext
        bar_center = o + np.array([0.55, 0.40, 0.0]) * ext
        bar_center[2] = self.ground_z + bar_size[2] / 2.0
        for r in _box_shell_rects(bar_center, bar_size):
            self.static_rects.append((3, r))

        self.car_size = np.array([0.22, 0.12, 0.10]) * ext
        start = o + np.array([0.21, 0.52, 0.0]) * ext
        start[2] = self.ground_z + 0.012 * ext[2] + self.car_size[2] / 2.0
        self.car_start = start
        self.car_velocity = np.asarray(params.car_velocity_frac) * ext
        self.car_yaw = params.car_yaw

        ego_start = o + np.array([0.18, 0.13, 0.24]) * ext
        self.ego_start = ego_start
        self.ego_velocity = np.asarray(params.ego_velocity_frac) * ext
        self.ego_yaw_rate = params.ego_yaw_rate

    def car_pose(self, t: int) -> RigidTransform:
        return RigidTransform.from_yaw(self.car_yaw, self.car_start + t * self.car_velocity)

    def ego_pose(self, t: int) -> RigidTransform:
        return RigidTransform.from_yaw(t * self.ego_yaw_rate,
                                       self.ego_start + t * self.ego_velocity)

    def class_areas(self) -> np.ndarray:
        areas = np.zeros(len(SCENE_CLASS_NAMES))
        for cid, r in self.static_rects:
            areas[cid] += r.area
        areas[2] = 4.0 * np.pi * self.tree_radius ** 2
        for r in _box_shell_rects(self.car_start, self.car_size, self.car_yaw):
            areas[CAR_CLASS] += r.area
        return areas


def _allocate_counts(areas: np.ndarray, total: int, floor: int) -> np.ndarray:
    counts = np.maximum(np.round(total * areas / areas.sum()).astype(int), floor)
    return counts


def _sample_class(world: _World, rng: np.random.Generator, class_id: int, n: int,
                  car_pose: RigidTransform | None = None) -> np.ndarray:
    if class_id == 2:
        return _sample_sphere(rng, world.tree_center, world.tree_radius, n)
    if class_id == CAR_CLASS:
        rects = _box_shell_rects(np.zeros(3), world.car_size, inset=1e-9)
        areas = np.array([r.area for r in rects])
        pick = rng.choice(len(rects), size=n, p=areas / areas.sum())
        pts = np.concatenate([rects[i].sample(rng, int((pick == i).sum()))
                              for i in range(len(rects))])
        return car_pose.apply(pts)
    rects = [r for cid, r in world.static_rects if cid == class_id]
    areas = np.array([r.area for r in rects])
    pick = rng.choice(len(rects), size=n, p=areas / areas.sum())
    return np.concatenate([rects[i].sample(rng, int((pick == i).sum()))
                           for i in range(len(rects))])


def _ground_truth_grid(world: _World, spec: VoxelGridSpec,
                       rng: np.random.Generator) -> DenseLabelGrid:
    labels = np.full(spec.dims, FREE, dtype=np.int64)
    ordered = sorted(world.static_rects, key=lambda cr: cr[0])
    for cid, r in ordered:
        if cid == GROUND_CLASS:
            _mark_rect_cells(labels, spec, r, cid)
    _mark_sphere_cells(labels, spec, world.tree_center, world.tree_radius, 2)
    for cid, r in ordered:
        if cid != GROUND_CLASS:
            _mark_rect_cells(labels, spec, r, cid)
    # Moving object at the reference frame (t = 0). Axis-aligned boxes are
    # marked exactly; a yawed box falls back to dense surface sampling.
    pose0 = world.car_pose(0)
    if abs(world.car_yaw) < 1e-12:
        for r in _box_shell_rects(pose0.translation, world.car_size):
            _mark_rect_cells(labels, spec, r, CAR_CLASS)
    else:
        rects = _box_shell_rects(np.zeros(3), world.car_size)
        areas = np.array([r.area for r in rects])
        dense = np.concatenate([
            r.sample(rng, max(1, int(50_000 * r.area / areas.sum()))) for r in rects])
        _mark_sampled_cells(labels, spec, pose0.apply(dense), CAR_CLASS)
    return DenseLabelGrid(spec, labels)


def generate_synthetic_scene(
    seed: int,
    n_frames: int,
    spec: VoxelGridSpec,
    params: SceneParams | None = None,
) -> SyntheticScene:
    """Generate a deterministic multi-frame scene.

    Returns per-frame labeled clouds in sensor coordinates, the moving
    object's per-frame boxes (also in sensor coordinates), frame-to-world ego
    poses, a static camera rig, and the ground-truth label grid at frame 0.
    """
    if n_frames < 1:
        raise ValidationError("n_frames must be >= 1")
    params = params or SceneParams()
    world = _World(spec, params)

    seq = np.random.SeedSequence(seed)
    gt_ss, *frame_ss = seq.spawn(1 + n_frames)
    gt_grid = _ground_truth_grid(world, spec, np.random.default_rng(gt_ss))

    areas = world.class_areas()
    counts = _allocate_counts(areas, params.points_per_frame,
                              params.min_points_per_class)

    clouds: list[PointCloud] = []
    boxes: list[TrackedBox] = []
    ego_poses: list[RigidTransform] = []
    for t in range(n_frames):
        rng = np.random.default_rng(frame_ss[t])
        ego = world.ego_pose(t)
        car_world = world.car_pose(t)

        pts_world, labels = [], []
        for cid in range(len(SCENE_CLASS_NAMES)):
            p = _sample_class(world, rng, cid, int(counts[cid]), car_pose=car_world)
            pts_world.append(p)
            labels.append(np.full(len(p), cid, dtype=np.int64))
        sensor_pts = invert(ego).apply(np.concatenate(pts_world))

        # Returns from the ego vehicle's own hull, already in sensor coords.
        hull = _box_shell_rects(np.zeros(3), np.array([2.8, 1.6, 1.0]), inset=1e-9)
        hull_areas = np.array([r.area for r in hull])
        pick = rng.choice(len(hull), size=params.ego_hull_points,
                          p=hull_areas / hull_areas.sum())
        hull_pts = np.concatenate([hull[i].sample(rng, int((pick == i).sum()))
                                   for i in range(len(hull))])

        positions = np.concatenate([sensor_pts, hull_pts])
        all_labels = np.concatenate(
            [np.concatenate(labels), np.full(len(hull_pts), CAR_CLASS, dtype=np.int64)])
        clouds.append(PointCloud(positions, all_labels, frame_id=t))
        ego_poses.append(ego)

        car_sensor = compose(invert(ego), car_world)
        boxes.append(TrackedBox(frame_id=t, track_id=1,
                                center=car_sensor.translation,
                                half_extents=world.car_size / 2.0,
                                pose=car_sensor))

    return SyntheticScene(clouds=clouds, boxes=boxes, ego_poses=ego_poses,
                          cameras=_camera_rig(spec, params), gt_grid=gt_grid,
                          params=params)


def default_ego_box(frame_id: int) -> TrackedBox:
    """The 4 x 2 x 2 m ego-vehicle exclusion box at the sensor origin."""
    return TrackedBox(frame_id=frame_id, track_id=-1, center=np.zeros(3),
                      half_extents=np.array([2.0, 1.0, 1.0]),
                      pose=RigidTransform.identity())
