"""Inference-time open-set scoring.

The occupancy head supplies class probabilities including FREE; the language
head's voxel feature is compared to each text embedding. The two confidence
maxima average into a knownness score; occupied voxels whose knownness falls
below the threshold become UNKNOWN. Scores are maxima of probabilities, not
raw similarities; a logit-max variant exists behind a flag for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .losses import softmax
from .scene import FREE, UNKNOWN
from .vocab import ClassVocabulary, fine_to_coarse


def _check_probs(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if p.ndim != 2:
        raise ValidationError(f"{name} must be a vector or row matrix")
    if np.any(p < -1e-12):
        raise ValidationError(f"{name} has negative entries")
    if not np.allclose(p.sum(axis=1), 1.0, atol=1e-9):
        raise ValidationError(f"{name} rows must sum to 1")
    return p


def _cosines(f: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    squeeze = f.ndim == 1
    if squeeze:
        f = f[None, :]
    e = np.asarray(embeddings, dtype=np.float64)
    if f.ndim != 2 or e.ndim != 2 or f.shape[1] != e.shape[1]:
        raise ValidationError("feature and embedding widths differ")
    if not np.allclose(np.linalg.norm(e, axis=1), 1.0, atol=1e-6):
        raise ValidationError("embedding rows must be unit norm")
    norms = np.linalg.norm(f, axis=1)
    if np.any(norms < 1e-12):
        raise ValidationError("zero-norm voxel feature")
    return (f @ e.T) / norms[:, None], squeeze


def p_text(f_v, embeddings, tau2: float) -> np.ndarray:
    """Text-match probabilities: softmax over cos(f_v, e_k) / tau2."""
    if tau2 <= 0:
        raise ValidationError("tau2 must be positive")
    cos, squeeze = _cosines(f_v, embeddings)
    probs = softmax(cos / tau2)
    return probs[0] if squeeze else probs


def fuse_scores(p_occ, p_text_probs):
    """Confidence maxima of the two heads and their average.

    Returns (s_occ, s_text, s_kn); scalars for vector input, arrays for
    row-matrix input."""
    po = _check_probs(p_occ, "p_occ")
    pt = _check_probs(p_text_probs, "p_text")
    if len(po) != len(pt):
        raise ValidationError("p_occ and p_text row counts differ")
    s_occ = po.max(axis=1)
    s_text = pt.max(axis=1)
    s_kn = 0.5 * (s_occ + s_text)
    if len(po) == 1 and np.ndim(p_occ) == 1:
        return float(s_occ[0]), float(s_text[0]), float(s_kn[0])
    return s_occ, s_text, s_kn


def logit_max_scores(occ_logits, text_similarities):
    """Comparison-only variant: maxima of raw (unnormalized) head outputs.
    Unbounded, so the two terms are not on comparable scales."""
    lo = np.atleast_2d(np.asarray(occ_logits, dtype=np.float64))
    lt = np.atleast_2d(np.asarray(text_similarities, dtype=np.float64))
    if len(lo) != len(lt):
        raise ValidationError("row counts differ")
    s_occ = lo.max(axis=1)
    s_text = lt.max(axis=1)
    return s_occ, s_text, 0.5 * (s_occ + s_text)


def msp_score(p_occ):
    """Maximum softmax probability of the occupancy head."""
    po = _check_probs(p_occ, "p_occ")
    out = po.max(axis=1)
    return float(out[0]) if np.ndim(p_occ) == 1 else out


def mcm_score(f_v, embeddings, temperature: float):
    """Maximum cosine-matching probability at the given temperature."""
    if temperature <= 0:
        raise ValidationError("temperature must be positive")
    probs = p_text(f_v, embeddings, temperature)
    return float(probs.max()) if probs.ndim == 1 else probs.max(axis=1)


@dataclass(frozen=True)
class VoxelScores:
    """Scores and decision for a single voxel."""

    p_occ: np.ndarray
    p_text: np.ndarray
    s_occ: float
    s_text: float
    s_kn: float
    predicted_class: int


def classify_voxel(p_occ, f_v, embeddings, vocab: ClassVocabulary,
                   delta: float, tau2: float,
                   free_class: int | None = None) -> VoxelScores:
    """Decide FREE / UNKNOWN / known-class for one voxel.

    FREE wins when the occupancy argmax is the free class, regardless of text
    scores. Otherwise knownness below delta yields UNKNOWN; else the best
    coarse class over the prompt scores."""
    po = _check_probs(p_occ, "p_occ")[0]
    if free_class is None:
        free_class = len(po) - 1
    pt = p_text(f_v, embeddings, tau2)
    s_occ, s_text, s_kn = fuse_scores(po, pt)

    if int(np.argmax(po)) == free_class:
        decided = FREE
    elif s_kn < delta:
        decided = UNKNOWN
    else:
        coarse = fine_to_coarse(pt, vocab)
        decided = int(vocab.prompted_class_ids[int(np.argmax(coarse))])
    return VoxelScores(po, pt, s_occ, s_text, s_kn, decided)


def classify_batch(p_occ, v_text, embeddings, vocab: ClassVocabulary,
                   delta: float, tau2: float,
                   free_class: int | None = None):
    """Vectorized classify_voxel over N rows.

    Returns (labels, s_occ, s_text, s_kn); labels use the FREE and UNKNOWN
    sentinels alongside coarse class ids."""
    po = _check_probs(p_occ, "p_occ")
    if free_class is None:
        free_class = po.shape[1] - 1
    pt = p_text(v_text, embeddings, tau2)
    s_occ, s_text, s_kn = fuse_scores(po, pt)
    s_occ, s_text, s_kn = (np.atleast_1d(s_occ), np.atleast_1d(s_text),
                           np.atleast_1d(s_kn))

    ids = vocab.prompt_class_ids
    coarse_ids = vocab.prompted_class_ids
    collapsed = np.full((len(pt), len(coarse_ids)), -np.inf)
    for slot, cid in enumerate(coarse_ids):
        collapsed[:, slot] = pt[:, ids == cid].max(axis=1)
    best = coarse_ids[np.argmax(collapsed, axis=1)]

    labels = best.astype(np.int64)
    labels[s_kn < delta] = UNKNOWN
    labels[np.argmax(po, axis=1) == free_class] = FREE
    return labels, s_occ, s_text, s_kn
