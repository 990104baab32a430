"""Training loop for the dual-head model.

Supervision per voxel row: an occupancy class id (always), an optional
positive prompt row for the contrastive term, and an optional lifted feature
vector for the distillation term. Rows lacking a supervision signal simply
drop out of that term.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .losses import LossConfig, loss_ce, loss_dcl, loss_kd, loss_total
from .nn import AdamW, DualHeadModel, OptimizerParams


@dataclass(frozen=True)
class TrainBatch:
    """One batch of per-voxel rows.

    dcl_targets holds a prompt row index per voxel, -1 where the contrastive
    term does not apply. kd_targets/kd_mask carry lifted features where known.
    """

    voxel_inputs: np.ndarray
    occ_targets: np.ndarray
    dcl_targets: np.ndarray | None = None
    kd_targets: np.ndarray | None = None
    kd_mask: np.ndarray | None = None

    def __post_init__(self):
        x = np.asarray(self.voxel_inputs, dtype=np.float64)
        occ = np.asarray(self.occ_targets, dtype=np.int64)
        if x.ndim != 2:
            raise ValidationError(f"voxel_inputs must be (N, C), got {x.shape}")
        n = len(x)
        if occ.shape != (n,):
            raise ValidationError("one occupancy target per row required")
        object.__setattr__(self, "voxel_inputs", x)
        object.__setattr__(self, "occ_targets", occ)
        if self.dcl_targets is not None:
            d = np.asarray(self.dcl_targets, dtype=np.int64)
            if d.shape != (n,):
                raise ValidationError("dcl_targets must align with rows")
            if len(d) and d.min() < -1:
                raise ValidationError("dcl_targets entries must be >= -1")
            object.__setattr__(self, "dcl_targets", d)
        if (self.kd_targets is None) != (self.kd_mask is None):
            raise ValidationError("kd_targets and kd_mask come together")
        if self.kd_targets is not None:
            t = np.asarray(self.kd_targets, dtype=np.float64)
            m = np.asarray(self.kd_mask, dtype=bool)
            if t.ndim != 2 or len(t) != n or m.shape != (n,):
                raise ValidationError("kd supervision must align with rows")
            object.__setattr__(self, "kd_targets", t)
            object.__setattr__(self, "kd_mask", m)

    def __len__(self) -> int:
        return len(self.voxel_inputs)


@dataclass
class TrainResult:
    model: DualHeadModel
    trace: list[dict]

    @property
    def final_loss(self) -> float:
        return self.trace[-1]["total"] if self.trace else float("nan")


def _step(model: DualHeadModel, batch: TrainBatch, embeddings: np.ndarray,
          cfg: LossConfig, optimizer: AdamW) -> dict:
    outs = model.forward(batch.voxel_inputs)
    ce, d_occ = loss_ce(outs.occ_logits, batch.occ_targets)
    d_text = np.zeros_like(outs.v_text)

    kd = None
    if batch.kd_targets is not None and batch.kd_mask.any():
        kd, g_kd = loss_kd(outs.v_text, batch.kd_targets, batch.kd_mask)
        d_text += cfg.lambda1 * g_kd

    dcl = None
    if batch.dcl_targets is not None:
        rows = batch.dcl_targets >= 0
        if rows.any():
            dcl, g = loss_dcl(outs.v_text[rows], embeddings,
                              batch.dcl_targets[rows], cfg.tau1)
            d_text[rows] += cfg.lambda2 * g

    total = loss_total(ce, cfg, kd, dcl)
    if not np.isfinite(total):
        raise NumericalError(f"training diverged: loss = {total}")
    grads = model.backward(outs, d_occ, d_text)
    grad_norm = optimizer.step(grads)
    return {"total": total, "ce": ce, "kd": kd, "dcl": dcl,
            "grad_norm": grad_norm}


def train(
    model: DualHeadModel,
    batches: list[TrainBatch],
    embeddings: np.ndarray,
    cfg: LossConfig,
    opt: OptimizerParams = OptimizerParams(),
    epochs: int = 200,
) -> TrainResult:
    """Run full-batch epochs over the given batches, updating the model in
    place. Deterministic: no shuffling, no randomness past initialization."""
    if epochs < 0:
        raise ValidationError("epochs must be non-negative")
    if not batches:
        raise ValidationError("no training batches")
    emb = np.asarray(embeddings, dtype=np.float64)
    for b in batches:
        if b.occ_targets.max(initial=-1) >= model.n_occ_classes:
            raise ValidationError("occupancy target outside model classes")
        if b.kd_targets is not None and b.kd_targets.shape[1] != model.c_o:
            raise ValidationError("kd feature width does not match the model")

    optimizer = AdamW(model.parameters, opt)
    trace: list[dict] = []
    for _ in range(epochs):
        totals: dict[str, list[float]] = {}
        for batch in batches:
            stats = _step(model, batch, emb, cfg, optimizer)
            for key, val in stats.items():
                if val is not None:
                    totals.setdefault(key, []).append(float(val))
        trace.append({k: float(np.mean(v)) for k, v in totals.items()})
    return TrainResult(model, trace)
