"""End-to-end stage wiring: densify a scene, lift features, build training
batches, train the dual-head model, and score a grid for evaluation.

Coordinate convention: per-frame clouds arrive in sensor coordinates; every
product past densification (mesh, occupancy grid, lifted features) lives in
world coordinates so it can be compared against the generator's ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import RunConfig
from .densify import densify_sequence
from .errors import ValidationError
from .lift import FeatureMap, SparseVoxelFeatures, build_sparse_voxel_features
from .losses import softmax
from .metrics import BinaryScoreSet, build_report, miou
from .nn import DualHeadModel
from .openset import classify_batch
from .scene import FREE, UNKNOWN, DenseLabelGrid, PointCloud, VoxelGridSpec
from .surface import (
    TriangleMesh,
    estimate_normals,
    knn_assign_labels,
    poisson_reconstruct,
    voxelize_mesh,
)
from .synthetic import SyntheticScene, default_ego_box
from .training import TrainBatch, TrainResult, train
from .vocab import ClassVocabulary, TextEmbeddingSet, build_prompts, mock_embeddings

__all__ = [
    "DensifyResult",
    "VocabularyBundle",
    "densify_scene",
    "lift_scene",
    "build_vocabulary",
    "bundle_from_embeddings",
    "featurize_grid",
    "make_training_batch",
    "train_on_grid",
    "predict_grid",
    "evaluate_grids",
]

# occ-head layout: semantic ids, then a catch-all slot for occupied voxels
# outside the prompted vocabulary, then FREE last.
N_INPUT_CHANNELS = 6


def other_slot(n_classes: int) -> int:
    return n_classes


def free_slot(n_classes: int) -> int:
    return n_classes + 1


@dataclass(frozen=True)
class DensifyResult:
    fused_world: PointCloud
    mesh: TriangleMesh
    grid: DenseLabelGrid


def densify_scene(scene: SyntheticScene, cfg: RunConfig,
                  reference: int | None = None) -> DensifyResult:
    """Sensor clouds to a labeled occupancy grid: separate, aggregate, fuse,
    reconstruct, voxelize, KNN-label. The fused cloud moves into world
    coordinates before reconstruction so grid and GT share a frame."""
    if not scene.clouds:
        raise ValidationError("scene has no frames")
    ref = scene.clouds[0].frame_id if reference is None else reference
    ego_boxes = [default_ego_box(c.frame_id) for c in scene.clouds]
    boxes_pf = [scene.boxes_at(c.frame_id) for c in scene.clouds]
    fused = densify_sequence(scene.clouds, boxes_pf, scene.ego_poses,
                             ego_boxes, reference=ref)
    ref_idx = next(i for i, c in enumerate(scene.clouds)
                   if c.frame_id == ref)
    world = fused.transformed(scene.ego_poses[ref_idx])
    viewpoint = scene.ego_poses[ref_idx].translation
    oriented = estimate_normals(world, k=cfg.normals_k, viewpoint=viewpoint)
    mesh = poisson_reconstruct(oriented, grid_res=cfg.poisson_grid_res)
    occupied = voxelize_mesh(mesh, cfg.grid_spec())
    labeled = knn_assign_labels(occupied, world, k=cfg.knn_k)
    return DensifyResult(fused_world=world, mesh=mesh, grid=labeled)


def lift_scene(cloud_world: PointCloud, maps: list[FeatureMap],
               scene: SyntheticScene, cfg: RunConfig) -> SparseVoxelFeatures:
    """Project the world-frame cloud into every camera and pool sampled
    features onto the voxels it touches."""
    if len(maps) != len(scene.cameras):
        raise ValidationError(
            f"{len(scene.cameras)} cameras but {len(maps)} feature maps")
    cams = list(zip(scene.cameras, maps))
    return build_sparse_voxel_features(cloud_world, cams, cfg.grid_spec(),
                                       mode=cfg.pooling)


@dataclass(frozen=True)
class VocabularyBundle:
    """Prompted vocabulary for classification plus the wider embedding space
    a distillation tutor lives in.

    `kd_rows[c]` is the tutor row in `kd_embeddings` for semantic class c;
    classes the vocabulary prompts also appear in `embeddings`, whose rows
    align with `vocab.prompts`.
    """

    class_names: tuple[str, ...]
    vocab: ClassVocabulary
    embeddings: TextEmbeddingSet
    kd_embeddings: TextEmbeddingSet
    kd_rows: np.ndarray = field(repr=False)
    dcl_rows: np.ndarray = field(repr=False)  # prompt row per class, -1 if unprompted

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def _first_prompt_rows(n_classes: int, prompts) -> np.ndarray:
    rows = np.full(n_classes, -1, dtype=np.int64)
    for row, (cid, _) in enumerate(prompts):
        if rows[cid] < 0:
            rows[cid] = row
    return rows


def _assemble_bundle(names: tuple[str, ...], full_prompts,
                     full_emb: TextEmbeddingSet,
                     unknown_names) -> VocabularyBundle:
    unknown_names = tuple(unknown_names)
    unknown_ids = {names.index(u) for u in unknown_names}
    keep = [i for i, (cid, _) in enumerate(full_prompts)
            if cid not in unknown_ids]
    vocab = ClassVocabulary(names, tuple(full_prompts[i] for i in keep),
                            unknown_set=unknown_names)
    emb = TextEmbeddingSet(full_emb.embeddings[keep],
                           class_ids=[full_prompts[i][0] for i in keep],
                           source=full_emb.source)
    kd_rows = _first_prompt_rows(len(names), full_prompts)
    missing = [names[c] for c in range(len(names)) if kd_rows[c] < 0]
    if missing:
        raise ValidationError(f"classes without any prompt: {missing}")
    return VocabularyBundle(class_names=names, vocab=vocab, embeddings=emb,
                            kd_embeddings=full_emb, kd_rows=kd_rows,
                            dcl_rows=_first_prompt_rows(len(names),
                                                        vocab.prompts))


def build_vocabulary(class_names, style: str, unknown_names=(),
                     c_o: int = 768, seed: int = 0) -> VocabularyBundle:
    """One embedding per prompt over the full class list, then restrict the
    classification vocabulary to the non-held-out classes. Shared prompts
    keep identical rows in both sets, so distilling toward a tutor row and
    classifying against the restricted set are mutually consistent."""
    names = tuple(class_names)
    full = build_prompts(names, style)
    full_emb = mock_embeddings(full, c_o=c_o, seed=seed)
    return _assemble_bundle(names, full.prompts, full_emb, unknown_names)


def bundle_from_embeddings(emb: TextEmbeddingSet, sidecar: dict,
                           unknown_names=()) -> VocabularyBundle:
    """Rebuild the bundle from a saved embedding file and its sidecar; the
    vocabulary restriction to non-held-out classes happens here, so one
    embedding artifact serves any unknown-set choice."""
    try:
        names = tuple(sidecar["class_names"])
        prompts = tuple(zip((int(i) for i in sidecar["class_ids"]),
                            sidecar["prompts"]))
    except KeyError as exc:
        raise ValidationError(f"embedding sidecar missing {exc}") from exc
    return _assemble_bundle(names, prompts, emb, unknown_names)


def featurize_grid(grid: DenseLabelGrid,
                   feats: SparseVoxelFeatures | None = None) -> np.ndarray:
    """Per-voxel geometric input rows, C-order over the grid.

    Channels: occupancy, occupied fraction of the 6-neighborhood, has-lifted-
    feature flag, and the voxel center normalized to [0, 1] per axis."""
    occ = grid.occupied_mask.astype(np.float64)
    frac = np.zeros_like(occ)
    for axis in range(3):
        for shift in (-1, 1):
            frac += np.roll(occ, shift, axis=axis) * _roll_valid(
                occ.shape, axis, shift)
    frac /= 6.0
    has_feat = np.zeros_like(occ)
    if feats is not None:
        if not feats.spec.matches(grid.spec):
            raise ValidationError("feature grid spec does not match label grid")
        for key in feats.entries:
            has_feat[key] = 1.0
    dims = np.asarray(grid.spec.dims, dtype=np.float64)
    ijk = np.stack(np.meshgrid(*[np.arange(d) for d in grid.spec.dims],
                               indexing="ij"), axis=-1)
    pos = (ijk + 0.5) / dims
    x = np.concatenate([occ[..., None], frac[..., None], has_feat[..., None],
                        pos], axis=-1)
    return x.reshape(-1, N_INPUT_CHANNELS)


def _roll_valid(shape, axis, shift) -> np.ndarray:
    """Mask that zeroes the rows np.roll wrapped around the grid edge."""
    valid = np.ones(shape, dtype=np.float64)
    index = [slice(None)] * 3
    index[axis] = 0 if shift == 1 else -1
    valid[tuple(index)] = 0.0
    return valid


def make_training_batch(grid: DenseLabelGrid, bundle: VocabularyBundle,
                        feats: SparseVoxelFeatures | None = None,
                        mock_kd: bool = False,
                        unprompted_policy: str = "other") -> TrainBatch:
    """Assemble per-voxel supervision from a labeled grid.

    Occupancy targets: semantic id for prompted classes, the catch-all slot
    for occupied voxels outside the vocabulary ("other" policy), FREE last.
    With the "drop" policy unprompted voxels leave the batch entirely.
    Contrastive targets point at each class's first prompt row; distillation
    targets come from lifted features, or from each class's tutor embedding
    when mock_kd is set (a stand-in for pixel features of a perfect VLM).
    """
    if unprompted_policy not in ("other", "drop"):
        raise ValidationError(f"unknown policy {unprompted_policy!r}")
    n = bundle.n_classes
    grid.validate_labels(n)
    x = featurize_grid(grid, feats)
    labels = grid.labels.ravel()

    prompted = bundle.dcl_rows >= 0
    occ = np.empty(labels.shape, dtype=np.int64)
    sem = labels < n
    occ[sem] = labels[sem]
    occ[labels == FREE] = free_slot(n)
    unprompted_sem = sem & ~prompted[np.clip(labels, 0, n - 1)]
    occ[unprompted_sem] = other_slot(n)

    dcl = np.full(labels.shape, -1, dtype=np.int64)
    dcl[sem] = bundle.dcl_rows[labels[sem]]

    kd_targets = kd_mask = None
    if mock_kd:
        kd_mask = sem.copy()
        kd_targets = np.zeros((labels.size, bundle.kd_embeddings.embeddings.shape[1]))
        rows = bundle.kd_rows[labels[sem]]
        kd_targets[sem] = bundle.kd_embeddings.embeddings[rows]
    elif feats is not None and feats.entries:
        width = next(iter(feats.entries.values())).shape[0]
        kd_mask = np.zeros(labels.shape, dtype=bool)
        kd_targets = np.zeros((labels.size, width))
        for key, vec in feats.entries.items():
            pos = int(np.ravel_multi_index(key, grid.spec.dims))
            kd_mask[pos] = True
            kd_targets[pos] = vec

    if unprompted_policy == "drop":
        keep = ~unprompted_sem
        x, occ, dcl = x[keep], occ[keep], dcl[keep]
        if kd_targets is not None:
            kd_targets, kd_mask = kd_targets[keep], kd_mask[keep]
    return TrainBatch(voxel_inputs=x, occ_targets=occ, dcl_targets=dcl,
                      kd_targets=kd_targets, kd_mask=kd_mask)


def train_on_grid(grid: DenseLabelGrid, bundle: VocabularyBundle,
                  cfg: RunConfig, feats: SparseVoxelFeatures | None = None,
                  mock_kd: bool = False) -> tuple[DualHeadModel, TrainResult]:
    batch = make_training_batch(grid, bundle, feats, mock_kd=mock_kd)
    n_occ = free_slot(bundle.n_classes) + 1
    model = DualHeadModel.create(
        c_in=N_INPUT_CHANNELS, c_v=cfg.c_v, n_occ_classes=n_occ,
        c_o=bundle.embeddings.embeddings.shape[1], seed=cfg.seed,
        hidden=cfg.hidden)
    result = train(model, [batch], bundle.embeddings.embeddings,
                   cfg.loss_config(n_occ), opt=cfg.optimizer(),
                   epochs=cfg.epochs)
    return model, result


@dataclass(frozen=True)
class GridPrediction:
    labels: DenseLabelGrid
    s_occ: np.ndarray = field(repr=False)
    s_text: np.ndarray = field(repr=False)
    s_kn: np.ndarray = field(repr=False)

    def score_grids(self) -> dict[str, np.ndarray]:
        dims = self.labels.spec.dims
        return {"s_occ": self.s_occ.reshape(dims),
                "s_text": self.s_text.reshape(dims),
                "s_kn": self.s_kn.reshape(dims),
                "anomaly": (1.0 - self.s_kn).reshape(dims)}


def predict_grid(model: DualHeadModel, occupancy: DenseLabelGrid,
                 bundle: VocabularyBundle, cfg: RunConfig,
                 feats: SparseVoxelFeatures | None = None) -> GridPrediction:
    """Score every voxel of the grid and classify it FREE, a known class,
    or UNKNOWN via the fused knownness score against delta."""
    x = featurize_grid(occupancy, feats)
    outs = model.forward(x)
    p_occ = softmax(outs.occ_logits)
    labels, s_occ, s_text, s_kn = classify_batch(
        p_occ, outs.v_text, bundle.embeddings.embeddings, bundle.vocab,
        delta=cfg.delta, tau2=cfg.tau2)
    grid = DenseLabelGrid(occupancy.spec,
                          labels.reshape(occupancy.spec.dims))
    return GridPrediction(labels=grid, s_occ=s_occ, s_text=s_text, s_kn=s_kn)


def evaluate_grids(pred: GridPrediction, gt: DenseLabelGrid,
                   bundle: VocabularyBundle, cfg: RunConfig,
                   include_free_in_ranking: bool = False) -> dict:
    """Closed-set mIoU over known classes plus open-set ranking of the
    anomaly score, assembled into the report body."""
    unknown_ids = tuple(bundle.class_names.index(name)
                        for name in cfg.unknown_set)
    ious, miou_value = miou(pred.labels, gt, unknown_set=unknown_ids,
                            include_free=False, n_classes=bundle.n_classes)
    gt_flat = gt.labels.ravel()
    anomaly = 1.0 - pred.s_kn
    ranked = gt_flat != FREE if not include_free_in_ranking else np.ones(
        gt_flat.shape, dtype=bool)
    is_unknown = np.isin(gt_flat, unknown_ids) & ranked
    is_known = ranked & ~is_unknown
    scores = None
    if is_unknown.any() and is_known.any():
        scores = BinaryScoreSet(scores_known=anomaly[is_known],
                                scores_unknown=anomaly[is_unknown])
    counts = {
        "voxels": int(gt_flat.size),
        "gt_occupied": int((gt_flat != FREE).sum()),
        "predicted_unknown": int((pred.labels.labels == UNKNOWN).sum()),
        "predicted_free": int((pred.labels.labels == FREE).sum()),
    }
    return build_report(list(bundle.class_names), ious, miou_value, scores,
                        counts, cfg.to_dict())
