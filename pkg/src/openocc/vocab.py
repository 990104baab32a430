"""Class vocabulary: prompt construction, coarse-to-fine name expansion, and
text-embedding set management.

Three prompt styles exist: raw class names, an expanded fine-grained synonym
set, and the template "a XX in a scene" applied over the expanded names.
"Other"/"others" and "free" never receive prompts; unknown (held-out) classes
are dropped from the prompt list but keep their ids for evaluation masks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .errors import ValidationError
from .oten import read_tensor, write_tensor

NUSCENES_CLASSES = (
    "barrier",
    "bicycle",
    "bus",
    "car",
    "construction vehicle",
    "motorcycle",
    "pedestrian",
    "traffic cone",
    "trailer",
    "truck",
    "drivable surface",
    "other flat",
    "sidewalk",
    "terrain",
    "manmade",
    "vegetation",
)

# Coarse name -> fine-grained synonym expansion (43 names over the 16 classes).
GROUP_B_MAP = MappingProxyType({
    "barrier": ("barrier", "barricade"),
    "bicycle": ("bicycle",),
    "bus": ("bus",),
    "car": ("car",),
    "construction vehicle": ("bulldozer", "excavator", "concrete mixer",
                             "crane", "dump truck"),
    "motorcycle": ("motorcycle",),
    "pedestrian": ("pedestrian", "person"),
    "traffic cone": ("traffic cone",),
    "trailer": ("trailer", "semi trailer", "cargo container",
                "shipping container", "freight container"),
    "truck": ("truck",),
    "drivable surface": ("road",),
    "other flat": ("curb", "traffic island", "traffic median"),
    "sidewalk": ("sidewalk",),
    "terrain": ("grass", "grassland", "lawn", "meadow", "turf", "sod"),
    "manmade": ("building", "wall", "pole", "awning"),
    "vegetation": ("tree", "trunk", "tree trunk", "bush", "shrub", "plant",
                   "flower", "woods"),
})

NEVER_PROMPTED = frozenset({"other", "others", "free"})
PROMPT_STYLES = ("A", "B", "C")
TEMPLATE = "a {} in a scene"


@dataclass(frozen=True)
class ClassVocabulary:
    known_classes: tuple[str, ...]
    prompts: tuple[tuple[int, str], ...]
    groupB_map: dict[str, tuple[str, ...]] = field(default_factory=dict)
    unknown_set: tuple[str, ...] = ()

    def __post_init__(self):
        for i, _ in self.prompts:
            if not 0 <= i < len(self.known_classes):
                raise ValidationError(f"prompt class id {i} out of range")
        names = {self.known_classes[i] for i, _ in self.prompts}
        bad = names & NEVER_PROMPTED
        if bad:
            raise ValidationError(f"classes {sorted(bad)} must not be prompted")
        if names & set(self.unknown_set):
            raise ValidationError("held-out classes must not be prompted")

    @property
    def prompt_class_ids(self) -> np.ndarray:
        """Coarse class id of each prompt, in prompt order."""
        return np.array([i for i, _ in self.prompts], dtype=np.int64)

    @property
    def prompted_class_ids(self) -> np.ndarray:
        """Distinct prompted coarse ids, ascending."""
        return np.unique(self.prompt_class_ids)

    def class_id(self, name: str) -> int:
        try:
            return self.known_classes.index(name)
        except ValueError:
            raise ValidationError(f"unknown class name {name!r}") from None


def build_prompts(classes, style: str, unknown_set=()) -> ClassVocabulary:
    """Build the prompt list for the given classes.

    Style A keeps raw names, B expands each class to its fine-grained synonym
    set, C wraps the expanded names in the scene template. Classes named in
    unknown_set (and the never-prompted ones) emit no prompts.
    """
    classes = tuple(classes)
    if not classes:
        raise ValidationError("class list is empty")
    if style not in PROMPT_STYLES:
        raise ValidationError(
            f"unknown prompt style {style!r}; expected one of {PROMPT_STYLES}")
    unknown_set = tuple(unknown_set)
    missing = set(unknown_set) - set(classes)
    if missing:
        raise ValidationError(f"held-out classes not in class list: {sorted(missing)}")

    prompts: list[tuple[int, str]] = []
    for cid, name in enumerate(classes):
        if name in NEVER_PROMPTED or name in unknown_set:
            continue
        if style == "A":
            texts = (name,)
        else:
            fine = GROUP_B_MAP.get(name, (name,))
            texts = fine if style == "B" else tuple(TEMPLATE.format(f) for f in fine)
        prompts.extend((cid, t) for t in texts)
    return ClassVocabulary(classes, tuple(prompts),
                           dict(GROUP_B_MAP), unknown_set)


@dataclass(frozen=True)
class TextEmbeddingSet:
    """One unit-norm row per prompt; rows are renormalized on construction so
    dot products are cosines regardless of where the embeddings came from."""

    embeddings: np.ndarray
    class_ids: np.ndarray
    source: str = "mock"

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        ids = np.asarray(self.class_ids, dtype=np.int64)
        if emb.ndim != 2:
            raise ValidationError(f"embeddings must be (K, C), got {emb.shape}")
        if len(ids) != len(emb):
            raise ValidationError("one class id per embedding row required")
        if self.source not in ("clip", "mock"):
            raise ValidationError(f"unknown embedding source {self.source!r}")
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise ValidationError("zero-norm embedding row")
        object.__setattr__(self, "embeddings", emb / norms)
        object.__setattr__(self, "class_ids", ids)

    def __len__(self) -> int:
        return len(self.embeddings)

    @property
    def channels(self) -> int:
        return self.embeddings.shape[1]


def mock_embeddings(vocab: ClassVocabulary, c_o: int, seed: int) -> TextEmbeddingSet:
    """Deterministic stand-in embeddings: Gaussian draws orthogonalized against
    all prior rows, so distinct prompts are maximally separable."""
    k = len(vocab.prompts)
    rng = np.random.default_rng(seed)
    rows = np.zeros((k, c_o))
    for i in range(k):
        v = rng.standard_normal(c_o)
        if i and i < c_o:
            prev = rows[:i]
            v = v - prev.T @ (prev @ v)
        norm = np.linalg.norm(v)
        if norm < 1e-9:
            # More prompts than channels: keep the raw draw's direction.
            v = rng.standard_normal(c_o)
            norm = np.linalg.norm(v)
        rows[i] = v / norm
    return TextEmbeddingSet(rows, vocab.prompt_class_ids, source="mock")


def fine_to_coarse(scores, vocab: ClassVocabulary) -> np.ndarray:
    """Collapse per-prompt scores to per-class scores by taking each class's
    best prompt. Output follows vocab.prompted_class_ids order."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(vocab.prompts),):
        raise ValidationError(
            f"expected {len(vocab.prompts)} prompt scores, got {scores.shape}")
    ids = vocab.prompt_class_ids
    out = np.full(len(vocab.prompted_class_ids), -np.inf)
    for slot, cid in enumerate(vocab.prompted_class_ids):
        out[slot] = scores[ids == cid].max()
    return out


def save_embeddings(stem: str | Path, embs: TextEmbeddingSet,
                    vocab: ClassVocabulary) -> tuple[Path, Path]:
    """Write <stem>.oten (K x C_o, f32) and a <stem>.json sidecar listing the
    prompts in row order. This pair is the boundary with the embed exporter."""
    stem = Path(stem)
    oten_path = stem.with_suffix(".oten")
    json_path = stem.with_suffix(".json")
    write_tensor(oten_path, embs.embeddings.astype(np.float32))
    sidecar = {
        "prompts": [text for _, text in vocab.prompts],
        "class_ids": [int(i) for i in embs.class_ids],
        "class_names": list(vocab.known_classes),
        "source": embs.source,
        "channels": embs.channels,
    }
    json_path.write_text(json.dumps(sidecar, indent=2) + "\n")
    return oten_path, json_path


def load_embeddings(stem: str | Path) -> tuple[TextEmbeddingSet, dict]:
    """Inverse of save_embeddings; rows renormalize on load."""
    stem = Path(stem)
    oten_path = stem.with_suffix(".oten")
    json_path = stem.with_suffix(".json")
    emb = read_tensor(oten_path).astype(np.float64)
    sidecar = json.loads(json_path.read_text())
    ids = np.asarray(sidecar["class_ids"], dtype=np.int64)
    if len(ids) != len(emb):
        raise ValidationError(
            f"sidecar lists {len(ids)} prompts, tensor has {len(emb)} rows")
    if len(sidecar.get("prompts", ids)) != len(emb):
        raise ValidationError("sidecar prompt list does not match tensor rows")
    return TextEmbeddingSet(emb, ids, sidecar.get("source", "clip")), sidecar
