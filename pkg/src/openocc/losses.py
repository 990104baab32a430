"""Training losses with hand-derived gradients.

Cross-entropy supervises the occupancy head; the distillation term pulls
language-head outputs toward lifted image features by cosine distance;
the dense contrastive term is an InfoNCE variant over text embeddings.
Every function returns (value, gradient) so the whole chain is
finite-difference checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class LossConfig:
    lambda1: float = 1.0
    lambda2: float = 1.0
    tau1: float = 0.5
    tau2: float = 0.5
    n_occ_classes: int = 0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValidationError("loss weights must be non-negative")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise ValidationError("temperatures must be positive")


def softmax(scores: np.ndarray) -> np.ndarray:
    """Row softmax via max-shifted exponentials; rows sum to 1 within 1e-12."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def loss_ce(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy. Returns (value, d value / d logits)."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2:
        raise ValidationError(f"logits must be (N, K), got {logits.shape}")
    n, k = logits.shape
    if targets.shape != (n,):
        raise ValidationError("one target per row required")
    if n == 0:
        raise ValidationError("empty batch")
    if targets.min() < 0 or targets.max() >= k:
        raise ValidationError(f"target outside [0, {k})")
    p = softmax(logits)
    picked = p[np.arange(n), targets]
    value = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    grad = p.copy()
    grad[np.arange(n), targets] -= 1.0
    return value, grad / n


def loss_kd(v_text: np.ndarray, v_psi: np.ndarray, mask: np.ndarray):
    """Mean cosine distance over masked rows: (1/N_s) sum (1 - cos).
    Returns (value, d value / d v_text); gradients flow only into v_text."""
    a = np.asarray(v_text, dtype=np.float64)
    b = np.asarray(v_psi, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if a.shape != b.shape or a.ndim != 2:
        raise ValidationError("v_text and v_psi must share (N, C) shape")
    if mask.shape != (len(a),):
        raise ValidationError("mask must have one entry per row")
    ns = int(mask.sum())
    if ns == 0:
        raise ValidationError("distillation mask selects nothing")
    am, bm = a[mask], b[mask]
    na = np.linalg.norm(am, axis=1)
    nb = np.linalg.norm(bm, axis=1)
    if np.any(na < 1e-12) or np.any(nb < 1e-12):
        raise ValidationError("zero-norm vector in cosine distance")
    cos = np.einsum("nc,nc->n", am, bm) / (na * nb)
    value = float(np.mean(1.0 - cos))
    # d(1-cos)/da = -(b/(|a||b|) - cos a/|a|^2)
    d = -(bm / (na * nb)[:, None] - (cos / na ** 2)[:, None] * am) / ns
    grad = np.zeros_like(a)
    grad[mask] = d
    return value, grad


def loss_dcl(f: np.ndarray, embeddings: np.ndarray, pos: np.ndarray,
             tau1: float):
    """InfoNCE over cosine similarities to the text embeddings.

    -(1/N) sum log softmax(cos(f, e)/tau1)[pos]. Scale-invariant in each f
    row. Returns (value, d value / d f)."""
    f = np.asarray(f, dtype=np.float64)
    e = np.asarray(embeddings, dtype=np.float64)
    pos = np.asarray(pos, dtype=np.int64)
    if f.ndim != 2 or e.ndim != 2 or f.shape[1] != e.shape[1]:
        raise ValidationError("f and embeddings must share channel width")
    if tau1 <= 0:
        raise ValidationError("tau1 must be positive")
    n, k = len(f), len(e)
    if n == 0:
        raise ValidationError("empty batch")
    if pos.shape != (n,) or pos.min() < 0 or pos.max() >= k:
        raise ValidationError("positive indices must index embedding rows")
    if not np.allclose(np.linalg.norm(e, axis=1), 1.0, atol=1e-6):
        raise ValidationError("embedding rows must be unit norm")
    nf = np.linalg.norm(f, axis=1)
    if np.any(nf < 1e-12):
        raise ValidationError("zero-norm feature row")

    cos = (f @ e.T) / nf[:, None]
    p = softmax(cos / tau1)
    picked = p[np.arange(n), pos]
    value = float(-np.mean(np.log(np.maximum(picked, 1e-300))))

    a = p.copy()
    a[np.arange(n), pos] -= 1.0                      # dL/d(cos/tau1) * n
    term1 = (a @ e) / nf[:, None]
    term2 = (np.einsum("nk,nk->n", a, cos) / nf ** 2)[:, None] * f
    grad = (term1 - term2) / (tau1 * n)
    return value, grad


def loss_total(ce: float, cfg: LossConfig, kd: float | None = None,
               dcl: float | None = None) -> float:
    """Weighted sum; a missing supervision term contributes nothing."""
    total = ce
    if kd is not None:
        total += cfg.lambda1 * kd
    if dcl is not None:
        total += cfg.lambda2 * dcl
    return float(total)
