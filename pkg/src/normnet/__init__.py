"""Mesh denoising toolkit: guided normal filtering, face-neighborhood
voxelization, and a 3D CNN that maps voxel grids to filtered face normals."""

from .config import (
    ModelPreset,
    PipelineConfig,
    config_from_dict,
    load_config,
    load_model_presets,
    merge_overrides,
    save_model_presets,
)
from .gnf import (
    FilterStats,
    GnfParams,
    gnf_denoise,
    gt_guided_filter_normals,
    guidance_field,
    guidance_normal,
    guided_filter_normals,
    patch_consistency,
    update_vertices,
)
from .mesh import (
    MeshError,
    MeshScales,
    Patch,
    TriangleMesh,
    build_ring_patch,
    compute_scales,
    load_mesh,
    save_mesh,
)
from .metrics import MetricReport, evaluate, mean_angular_error, vertex_l2_error
from .net import (
    DEFAULT_MU_G,
    Adam,
    Network,
    NetworkSpec,
    NetworkWeights,
    apply_weights,
    default_network_spec,
    load_weights,
    lr_schedule,
    save_weights,
    weights_from_network,
)
from .noise import NoiseSpec, add_noise
from .pipeline import (
    DenoiseStats,
    FaceCategory,
    FaceRegion,
    LearnedDenoiseParams,
    StagePlan,
    TrainingResult,
    TrainingTuple,
    advance_training_meshes,
    build_training_set,
    categorize_face,
    categorize_faces,
    denoise_learned,
    load_training_set,
    make_target_field,
    make_targets,
    run_iterative_training,
    save_training_set,
    select_cnn,
    train_network,
)
from .voxelize import (
    NormalizationTransform,
    VolumetricGrid,
    VoxelParams,
    VoxelStats,
    compute_normalization,
    load_grid,
    save_grid,
    triangle_box_overlap,
    voxelize_face,
    voxelize_mesh,
)

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "DEFAULT_MU_G",
    "DenoiseStats",
    "FaceCategory",
    "FaceRegion",
    "FilterStats",
    "GnfParams",
    "LearnedDenoiseParams",
    "MeshError",
    "MeshScales",
    "MetricReport",
    "ModelPreset",
    "Network",
    "NetworkSpec",
    "NetworkWeights",
    "NoiseSpec",
    "NormalizationTransform",
    "Patch",
    "PipelineConfig",
    "StagePlan",
    "TrainingResult",
    "TrainingTuple",
    "TriangleMesh",
    "VolumetricGrid",
    "VoxelParams",
    "VoxelStats",
    "add_noise",
    "advance_training_meshes",
    "apply_weights",
    "build_ring_patch",
    "build_training_set",
    "categorize_face",
    "categorize_faces",
    "compute_normalization",
    "compute_scales",
    "config_from_dict",
    "default_network_spec",
    "denoise_learned",
    "evaluate",
    "gnf_denoise",
    "gt_guided_filter_normals",
    "guidance_field",
    "guidance_normal",
    "guided_filter_normals",
    "load_config",
    "load_grid",
    "load_mesh",
    "load_model_presets",
    "load_training_set",
    "load_weights",
    "lr_schedule",
    "make_target_field",
    "make_targets",
    "mean_angular_error",
    "merge_overrides",
    "patch_consistency",
    "run_iterative_training",
    "save_grid",
    "save_mesh",
    "save_model_presets",
    "save_training_set",
    "save_weights",
    "select_cnn",
    "train_network",
    "triangle_box_overlap",
    "update_vertices",
    "vertex_l2_error",
    "voxelize_face",
    "voxelize_mesh",
    "weights_from_network",
    "__version__",
]
