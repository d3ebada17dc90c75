"""Voxel visibility extraction, depth-derived occupancy, and SSC metrics."""

__version__ = "0.1.0"

from .camera import (
    CameraIntrinsics,
    CameraRig,
    PixelProjection,
    RigidTransform,
    VoxelToWorld,
    load_calibration,
    project_point,
    project_voxel,
    save_calibration,
    voxel_vertices,
)
from .grid import (
    OccupiedSet,
    SemanticVoxelGrid,
    VoxelMask,
    apply_mask,
    dilate_mask,
    extract_occupied,
    load_labels,
    load_mask,
    mask_complement,
    mask_difference,
    mask_intersection,
    mask_union,
    save_labels,
    save_mask,
)
from .metrics import ClassConfusion, EvalReport, accumulate, geometric_iou, semantic_miou
from .occupancy import DepthMap, load_depth, occupancy_from_depth, save_depth
from .oracle import AgreementReport, cast_visibility, compare_masks
from .raster import (
    DepthBuffer,
    FaceQuad,
    RasterStats,
    VisibilityResult,
    extract_visible_labels,
    interpolate_depth,
    point_in_quad,
    rasterize_visibility,
    sample_pixels,
    voxel_aabb,
)
from .synth import SceneSpec, generate, render_reference_depth

__all__ = [
    "AgreementReport",
    "CameraIntrinsics",
    "CameraRig",
    "ClassConfusion",
    "DepthBuffer",
    "DepthMap",
    "EvalReport",
    "FaceQuad",
    "OccupiedSet",
    "PixelProjection",
    "RasterStats",
    "RigidTransform",
    "SceneSpec",
    "SemanticVoxelGrid",
    "VisibilityResult",
    "VoxelMask",
    "VoxelToWorld",
    "accumulate",
    "apply_mask",
    "cast_visibility",
    "compare_masks",
    "dilate_mask",
    "extract_occupied",
    "extract_visible_labels",
    "generate",
    "geometric_iou",
    "interpolate_depth",
    "load_calibration",
    "load_depth",
    "load_labels",
    "load_mask",
    "mask_complement",
    "mask_difference",
    "mask_intersection",
    "mask_union",
    "occupancy_from_depth",
    "point_in_quad",
    "project_point",
    "project_voxel",
    "rasterize_visibility",
    "render_reference_depth",
    "sample_pixels",
    "save_calibration",
    "save_depth",
    "save_labels",
    "save_mask",
    "semantic_miou",
    "voxel_aabb",
    "voxel_vertices",
]
