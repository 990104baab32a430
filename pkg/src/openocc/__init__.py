"""Open-set 3D semantic occupancy toolkit.

Subpackages cover the full pipeline: synthetic scenes and geometry
(:mod:`openocc.scene`, :mod:`openocc.synthetic`), multi-frame densification
(:mod:`openocc.densify`, :mod:`openocc.surface`), 2D-to-3D feature lifting
(:mod:`openocc.lift`), prompt vocabularies (:mod:`openocc.vocab`), the
dual-head model and losses (:mod:`openocc.nn`, :mod:`openocc.losses`,
:mod:`openocc.training`), open-set scoring (:mod:`openocc.openset`),
evaluation metrics (:mod:`openocc.metrics`), and stage orchestration plus
file formats (:mod:`openocc.pipeline`, :mod:`openocc.config`,
:mod:`openocc.storage`, :mod:`openocc.oten`, :mod:`openocc.cli`).
"""

from .config import RunConfig, apply_overrides, load_config
from .densify import (
    SeparatedFrame,
    aggregate_dynamic,
    aggregate_static,
    densify_sequence,
    fuse_frame,
    separate_dynamic_static,
)
from .errors import NumericalError, ValidationError
from .lift import (
    FeatureMap,
    SparseVoxelFeatures,
    bilinear_sample,
    build_sparse_voxel_features,
    pool_features,
    project_point,
)
from .losses import LossConfig, loss_ce, loss_dcl, loss_kd, loss_total, softmax
from .metrics import (
    BinaryScoreSet,
    ConfusionMatrix,
    aupr,
    auroc,
    build_report,
    fpr_at_tpr,
    miou,
)
from .nn import MLP, AdamW, DualHeadModel, ModelOutputs, OptimizerParams
from .openset import (
    VoxelScores,
    classify_batch,
    classify_voxel,
    fuse_scores,
    mcm_score,
    msp_score,
    p_text,
)
from .oten import parse_tensor, read_tensor, tensor_bytes, write_tensor
from .pipeline import (
    DensifyResult,
    VocabularyBundle,
    build_vocabulary,
    bundle_from_embeddings,
    densify_scene,
    evaluate_grids,
    featurize_grid,
    lift_scene,
    make_training_batch,
    predict_grid,
    train_on_grid,
)
from .scene import (
    FREE,
    OCCUPIED,
    UNKNOWN,
    CameraModel,
    DenseLabelGrid,
    PointCloud,
    RigidTransform,
    TrackedBox,
    VoxelGridSpec,
    box_contains,
    compose,
    invert,
    voxel_of,
)
from .surface import (
    OrientedPointCloud,
    TriangleMesh,
    estimate_normals,
    export_obj,
    knn_assign_labels,
    poisson_reconstruct,
    voxelize_mesh,
)
from .synthetic import (
    SCENE_CLASS_NAMES,
    SceneParams,
    SyntheticScene,
    generate_synthetic_scene,
)
from .training import TrainBatch, TrainResult, train
from .vocab import (
    ClassVocabulary,
    TextEmbeddingSet,
    build_prompts,
    fine_to_coarse,
    load_embeddings,
    mock_embeddings,
    save_embeddings,
)

__all__ = [
    "FREE", "OCCUPIED", "UNKNOWN",
    "CameraModel", "DenseLabelGrid", "PointCloud", "RigidTransform",
    "TrackedBox", "VoxelGridSpec",
    "box_contains", "compose", "invert", "voxel_of",
    "SCENE_CLASS_NAMES", "SceneParams", "SyntheticScene",
    "generate_synthetic_scene",
    "NumericalError", "ValidationError",
    "SeparatedFrame", "separate_dynamic_static", "aggregate_static",
    "aggregate_dynamic", "fuse_frame", "densify_sequence",
    "OrientedPointCloud", "TriangleMesh", "estimate_normals",
    "poisson_reconstruct", "voxelize_mesh", "knn_assign_labels", "export_obj",
    "FeatureMap", "SparseVoxelFeatures", "project_point", "bilinear_sample",
    "pool_features", "build_sparse_voxel_features",
    "ClassVocabulary", "TextEmbeddingSet", "build_prompts", "mock_embeddings",
    "fine_to_coarse", "save_embeddings", "load_embeddings",
    "MLP", "AdamW", "DualHeadModel", "ModelOutputs", "OptimizerParams",
    "LossConfig", "softmax", "loss_ce", "loss_kd", "loss_dcl", "loss_total",
    "TrainBatch", "TrainResult", "train",
    "VoxelScores", "p_text", "fuse_scores", "msp_score", "mcm_score",
    "classify_voxel", "classify_batch",
    "ConfusionMatrix", "BinaryScoreSet", "miou", "auroc", "aupr",
    "fpr_at_tpr", "build_report",
    "tensor_bytes", "parse_tensor", "write_tensor", "read_tensor",
    "RunConfig", "load_config", "apply_overrides",
    "DensifyResult", "VocabularyBundle", "build_vocabulary",
    "bundle_from_embeddings", "densify_scene", "lift_scene",
    "featurize_grid", "make_training_batch", "train_on_grid",
    "predict_grid", "evaluate_grids",
]

__version__ = "0.1.0"
