"""Run configuration: one JSON object drives every pipeline stage.

Command-line flags override file values; the merged result is echoed into
reports so a run can be reproduced from its own output.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ValidationError
from .losses import LossConfig
from .nn import OptimizerParams
from .scene import VoxelGridSpec

__all__ = ["RunConfig", "load_config", "apply_overrides"]


@dataclass(frozen=True)
class RunConfig:
    # scene grid
    grid_origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    grid_voxel_size: float = 0.5
    grid_dims: tuple[int, int, int] = (16, 16, 16)
    n_frames: int = 5
    # feature lifting
    c_o: int = 768
    pooling: str = "mean"
    # densification
    poisson_grid_res: int = 64
    normals_k: int = 12
    knn_k: int = 5
    # losses and open-set decision
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau1: float = 0.5
    tau2: float = 0.5
    delta: float = 0.5
    unknown_set: tuple[str, ...] = ()
    prompt_style: str = "A"
    # model and optimization
    c_v: int = 64
    hidden: int = 64
    epochs: int = 200
    seed: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    clip_norm: float = 1.0

    def __post_init__(self):
        if self.c_o < 1 or self.c_v < 1 or self.hidden < 1:
            raise ValidationError("channel widths must be positive")
        if self.pooling not in ("mean", "max"):
            raise ValidationError(f"unknown pooling mode {self.pooling!r}")
        if self.poisson_grid_res < 8:
            raise ValidationError("poisson_grid_res must be at least 8")
        if self.knn_k < 1 or self.normals_k < 3:
            raise ValidationError("neighbor counts out of range")
        if min(self.tau1, self.tau2) <= 0:
            raise ValidationError("temperatures must be positive")
        if min(self.lambda1, self.lambda2) < 0:
            raise ValidationError("loss weights must be non-negative")
        if not (0.0 <= self.delta <= 1.0):
            raise ValidationError("delta must lie in [0, 1]")
        if self.epochs < 0 or self.n_frames < 1:
            raise ValidationError("epochs/n_frames out of range")
        if self.prompt_style not in ("A", "B", "C"):
            raise ValidationError(f"unknown prompt style {self.prompt_style!r}")
        object.__setattr__(self, "grid_origin",
                           tuple(float(v) for v in self.grid_origin))
        object.__setattr__(self, "grid_dims",
                           tuple(int(v) for v in self.grid_dims))
        object.__setattr__(self, "unknown_set",
                           tuple(str(v) for v in self.unknown_set))
        # delegate range checks on optimizer fields
        self.optimizer()

    def grid_spec(self) -> VoxelGridSpec:
        return VoxelGridSpec(origin=list(self.grid_origin),
                             voxel_size=self.grid_voxel_size,
                             dims=self.grid_dims)

    def optimizer(self) -> OptimizerParams:
        return OptimizerParams(lr=self.lr, beta1=self.beta1, beta2=self.beta2,
                               eps=self.eps, weight_decay=self.weight_decay,
                               clip_norm=self.clip_norm)

    def loss_config(self, n_occ_classes: int) -> LossConfig:
        return LossConfig(lambda1=self.lambda1, lambda2=self.lambda2,
                          tau1=self.tau1, tau2=self.tau2,
                          n_occ_classes=n_occ_classes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for key in ("grid_origin", "grid_dims", "unknown_set"):
            out[key] = list(out[key])
        return out

    @staticmethod
    def from_dict(data: Mapping) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(RunConfig)}
        extra = set(data) - known
        if extra:
            raise ValidationError(f"unknown config keys: {sorted(extra)}")
        return RunConfig(**data)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2,
                                         sort_keys=True) + "\n")


def load_config(path: str | Path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config must be a JSON object")
    return RunConfig.from_dict(data)


def apply_overrides(cfg: RunConfig, overrides: Mapping) -> RunConfig:
    """Flag values win over file values; None means the flag was absent."""
    cleaned = {k: v for k, v in overrides.items() if v is not None}
    if not cleaned:
        return cfg
    merged = cfg.to_dict()
    unknown = set(cleaned) - set(merged)
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    merged.update(cleaned)
    return RunConfig.from_dict(merged)
