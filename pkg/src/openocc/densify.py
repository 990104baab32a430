"""Multi-frame point densification.

A sweep is split into ego returns (discarded), movable-object points (bucketed
by track and expressed in each box's canonical frame), and static points.
Static points from all frames are pooled in one reference frame; each track's
points are pooled in its canonical frame. Re-posing those pools at any frame
yields a cloud far denser than a single sweep.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .scene import (
    PointCloud,
    RigidTransform,
    TrackedBox,
    box_contains,
    compose,
    concatenate_clouds,
    invert,
)


@dataclass(frozen=True)
class SeparatedFrame:
    """One sweep split into static points and per-track canonical points."""

    static_points: PointCloud
    dynamic_points: dict[int, PointCloud] = field(default_factory=dict)
    frame_id: int = 0

    def dynamic_count(self) -> int:
        return sum(len(c) for c in self.dynamic_points.values())


def separate_dynamic_static(
    cloud: PointCloud,
    boxes: list[TrackedBox],
    ego_box: TrackedBox,
) -> SeparatedFrame:
    """Split a sweep into ego returns (dropped), per-track points, and static.

    Ego filtering runs first, so a point inside both the ego box and a tracked
    box counts as ego. A point inside several tracked boxes goes to the box
    with the nearest center, lower track_id on ties.
    """
    for b in boxes:
        if b.frame_id != cloud.frame_id:
            raise ValidationError(
                f"box track {b.track_id} is from frame {b.frame_id}, "
                f"cloud is frame {cloud.frame_id}"
            )
    if ego_box.frame_id != cloud.frame_id:
        raise ValidationError("ego box frame does not match cloud frame")

    pts = cloud.positions
    keep = ~box_contains(ego_box, pts) if len(pts) else np.zeros(0, dtype=bool)
    pts = pts[keep]
    labels = cloud.labels[keep] if cloud.labels is not None else None

    ordered = sorted(boxes, key=lambda b: b.track_id)
    n = len(pts)
    if ordered and n:
        inside = np.stack([box_contains(b, pts) for b in ordered], axis=1)
        dist = np.stack(
            [np.linalg.norm(pts - b.center, axis=1) for b in ordered], axis=1
        )
        dist[~inside] = np.inf
        owner = np.argmin(dist, axis=1)  # first minimum = lowest track_id
        owner[~inside.any(axis=1)] = -1
    else:
        owner = np.full(n, -1, dtype=np.int64)

    dynamic: dict[int, PointCloud] = {}
    for i, b in enumerate(ordered):
        mine = owner == i
        if not mine.any():
            continue
        local = invert(b.pose).apply(pts[mine])
        dynamic[b.track_id] = PointCloud(
            local, labels[mine] if labels is not None else None, cloud.frame_id
        )

    static_mask = owner == -1
    static = PointCloud(
        pts[static_mask],
        labels[static_mask] if labels is not None else None,
        cloud.frame_id,
    )
    return SeparatedFrame(static, dynamic, cloud.frame_id)


def aggregate_static(
    frames: list[SeparatedFrame],
    poses: list[RigidTransform],
    reference: int,
) -> PointCloud:
    """Pool every frame's static points, expressed in the reference frame.

    poses run parallel to frames and map each frame to world; the point moved
    from frame f to the reference is compose(invert(pose_ref), pose_f)(p).
    """
    if len(poses) != len(frames):
        raise ValidationError(
            f"{len(frames)} frames but {len(poses)} poses"
        )
    ref_pose = None
    for f, p in zip(frames, poses):
        if f.frame_id == reference:
            ref_pose = p
            break
    if ref_pose is None:
        raise ValidationError(f"reference frame {reference} has no pose")

    inv_ref = invert(ref_pose)
    moved = [
        f.static_points.transformed(compose(inv_ref, pose))
        for f, pose in zip(frames, poses)
    ]
    return concatenate_clouds(moved, frame_id=reference)


def aggregate_dynamic(frames: list[SeparatedFrame]) -> dict[int, PointCloud]:
    """Pool each track's points across frames; all are already canonical."""
    per_track: dict[int, list[PointCloud]] = {}
    for f in frames:
        for track_id, cloud in f.dynamic_points.items():
            per_track.setdefault(track_id, []).append(cloud)
    return {
        track_id: concatenate_clouds(clouds, frame_id=-1)
        for track_id, clouds in sorted(per_track.items())
    }


def fuse_frame(
    static_agg: PointCloud,
    dynamic_agg: dict[int, PointCloud],
    boxes_at_t: list[TrackedBox],
    t: int,
    static_pose: RigidTransform | None = None,
) -> PointCloud:
    """Concatenate the static pool with each track's pool posed at frame t.

    static_agg must already be in frame-t coordinates unless static_pose is
    given. Tracks with no frame-t box are left out.
    """
    static = static_agg if static_pose is None else static_agg.transformed(static_pose)
    parts = [static]
    for b in sorted(boxes_at_t, key=lambda b: b.track_id):
        agg = dynamic_agg.get(b.track_id)
        if agg is None or len(agg) == 0:
            continue
        parts.append(agg.transformed(b.pose))
    return concatenate_clouds(parts, frame_id=t)


def densify_sequence(
    clouds: list[PointCloud],
    boxes_per_frame: list[list[TrackedBox]],
    poses: list[RigidTransform],
    ego_boxes: list[TrackedBox],
    reference: int,
) -> PointCloud:
    """Full separation/aggregation/fusion chain for one reference frame."""
    if not (len(clouds) == len(boxes_per_frame) == len(poses) == len(ego_boxes)):
        raise ValidationError("clouds, boxes, poses and ego boxes must align")
    frames = [
        separate_dynamic_static(c, bx, eb)
        for c, bx, eb in zip(clouds, boxes_per_frame, ego_boxes)
    ]
    static_agg = aggregate_static(frames, poses, reference)
    dynamic_agg = aggregate_dynamic(frames)
    ref_idx = next(i for i, c in enumerate(clouds) if c.frame_id == reference)
    return fuse_frame(static_agg, dynamic_agg, boxes_per_frame[ref_idx], reference)
