"""Closed-set and open-set evaluation.

Per-class IoU / mIoU over label grids, plus ranking metrics (AUROC, AUPR,
FPR at fixed TPR) over anomaly scores. Ranking treats unknown voxels as the
positive class; higher score means more anomalous.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ValidationError
from .scene import FREE, OCCUPIED, UNKNOWN, DenseLabelGrid

__all__ = [
    "ConfusionMatrix",
    "BinaryScoreSet",
    "miou",
    "auroc",
    "aupr",
    "fpr_at_tpr",
    "build_report",
]


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows index ground truth, columns index prediction.

    `ignored` counts voxels masked out before accumulation; total count
    plus ignored always equals the number of voxels compared.
    """

    counts: np.ndarray = field(repr=False)
    ignored: int = 0

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValidationError(f"confusion counts must be square, got {c.shape}")
        if (c < 0).any() or self.ignored < 0:
            raise ValidationError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", c)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.counts.shape != self.counts.shape:
            raise ValidationError("cannot merge confusion matrices of different size")
        return ConfusionMatrix(self.counts + other.counts,
                               self.ignored + other.ignored)

    def iou(self, class_index: int) -> float:
        tp = self.counts[class_index, class_index]
        fp = self.counts[:, class_index].sum() - tp
        fn = self.counts[class_index, :].sum() - tp
        denom = tp + fp + fn
        return float(tp) / float(denom) if denom > 0 else float("nan")


@dataclass(frozen=True)
class BinaryScoreSet:
    """Anomaly scores split by ground truth: unknown voxels are positives."""

    scores_known: np.ndarray = field(repr=False)
    scores_unknown: np.ndarray = field(repr=False)

    def __post_init__(self):
        kn = np.asarray(self.scores_known, dtype=np.float64).ravel()
        un = np.asarray(self.scores_unknown, dtype=np.float64).ravel()
        if kn.size == 0 or un.size == 0:
            raise ValidationError("ranking needs at least one known and one unknown score")
        if not (np.isfinite(kn).all() and np.isfinite(un).all()):
            raise ValidationError("scores must be finite")
        object.__setattr__(self, "scores_known", kn)
        object.__setattr__(self, "scores_unknown", un)


def _remap_labels(labels: np.ndarray, n_classes: int) -> np.ndarray:
    """Semantic ids keep their value; FREE maps to n_classes, predicted
    UNKNOWN to n_classes + 1 so sentinel predictions count against the
    ground-truth class rather than crashing the bincount."""
    out = labels.copy()
    out[labels == FREE] = n_classes
    out[labels == UNKNOWN] = n_classes + 1
    if out.max(initial=0) >= n_classes + 2 or out.min(initial=0) < 0:
        raise ValidationError(f"label outside [0, {n_classes}) and not a sentinel")
    return out


def confusion_from_grids(pred: DenseLabelGrid, gt: DenseLabelGrid,
                         n_classes: int,
                         unknown_set: Iterable[int] = ()) -> ConfusionMatrix:
    if not pred.spec.matches(gt.spec):
        raise ValidationError("prediction and ground-truth grids use different specs")
    g = gt.labels.ravel()
    p = pred.labels.ravel()
    mask = np.ones(g.shape, dtype=bool)
    for cid in unknown_set:
        mask &= g != cid
    k_eval = n_classes + 2
    gi = _remap_labels(g[mask], n_classes)
    pi = _remap_labels(p[mask], n_classes)
    counts = np.bincount(gi * k_eval + pi, minlength=k_eval * k_eval)
    return ConfusionMatrix(counts.reshape(k_eval, k_eval),
                           ignored=int((~mask).sum()))


def miou(pred: DenseLabelGrid, gt: DenseLabelGrid,
         unknown_set: Iterable[int] = (), include_free: bool = False,
         n_classes: int | None = None) -> tuple[list[float], float]:
    """Per-class IoU and their mean.

    Voxels whose ground truth is in `unknown_set` never enter the confusion.
    Classes absent from both grids (TP+FP+FN = 0) are skipped by the mean.
    `include_free` adds the FREE slot as an evaluated class.
    """
    if n_classes is None:
        sem = np.concatenate([gt.labels.ravel(), pred.labels.ravel()])
        sem = sem[sem < OCCUPIED]
        n_classes = int(sem.max()) + 1 if sem.size else 0
    cm = confusion_from_grids(pred, gt, n_classes, unknown_set)
    evaluated = list(range(n_classes)) + ([n_classes] if include_free else [])
    ious = [cm.iou(c) for c in evaluated]
    present = [v for v in ious if not np.isnan(v)]
    if not present:
        raise ValidationError("no class present in either grid")
    return ious, float(np.mean(present))


def auroc(s: BinaryScoreSet) -> float:
    """Probability a random unknown outscores a random known, ties counted
    half. Computed as a normalized rank sum."""
    pooled = np.concatenate([s.scores_unknown, s.scores_known])
    ranks = rankdata(pooled, method="average")
    n_pos = s.scores_unknown.size
    n_neg = s.scores_known.size
    rank_sum = ranks[:n_pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _descending_blocks(s: BinaryScoreSet):
    """Cumulative TP and prediction counts at each distinct threshold,
    scanned from the highest score down. Tied scores form one block."""
    scores = np.concatenate([s.scores_unknown, s.scores_known])
    labels = np.concatenate([np.ones(s.scores_unknown.size, dtype=bool),
                             np.zeros(s.scores_known.size, dtype=bool)])
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    labels = labels[order]
    boundary = np.nonzero(np.diff(scores))[0]
    block_end = np.append(boundary, scores.size - 1)
    tp = np.cumsum(labels)[block_end].astype(np.float64)
    n_pred = (block_end + 1).astype(np.float64)
    return scores[block_end], tp, n_pred


def aupr(s: BinaryScoreSet) -> float:
    """Area under precision-recall with unknowns positive; the threshold
    sweep descends through distinct score values, each tie block entering
    at once."""
    _, tp, n_pred = _descending_blocks(s)
    recall = tp / s.scores_unknown.size
    precision = tp / n_pred
    prev = np.concatenate([[0.0], recall[:-1]])
    return float(np.sum((recall - prev) * precision))


def fpr_at_tpr(s: BinaryScoreSet, tpr_target: float = 0.95) -> float:
    """False-positive rate at the largest threshold whose TPR meets the
    target. No interpolation between thresholds."""
    if not (0.0 < tpr_target <= 1.0):
        raise ValidationError(f"tpr_target must be in (0, 1], got {tpr_target}")
    _, tp, n_pred = _descending_blocks(s)
    tpr = tp / s.scores_unknown.size
    fp = n_pred - tp
    fpr = fp / s.scores_known.size
    hit = np.nonzero(tpr >= tpr_target)[0]
    # TPR reaches 1.0 at the lowest threshold, so a hit always exists.
    return float(fpr[hit[0]])


def build_report(class_names: Sequence[str], ious: Sequence[float],
                 miou_value: float, scores: BinaryScoreSet | None,
                 counts: Mapping[str, int],
                 config_echo: Mapping) -> dict:
    """Assemble the evaluation report body. NaN IoU (class absent from both
    grids) serializes as null."""
    per_class = {name: (None if np.isnan(v) else round(float(v), 6))
                 for name, v in zip(class_names, ious)}
    report = {
        "per_class_iou": per_class,
        "miou": round(float(miou_value), 6),
        "counts": dict(counts),
        "config": dict(config_echo),
    }
    if scores is not None:
        report["auroc"] = round(auroc(scores), 6)
        report["aupr"] = round(aupr(scores), 6)
        report["fpr95"] = round(fpr_at_tpr(scores, 0.95), 6)
        report["counts"]["ranked_known"] = int(scores.scores_known.size)
        report["counts"]["ranked_unknown"] = int(scores.scores_unknown.size)
    return report
