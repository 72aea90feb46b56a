"""Voxel/image fusion for LiDAR-camera 3D detection front ends.

Projection of sparse voxels into the camera, patch-point fusion with a
self-attention merge, importance-driven foreground densification and the
occupancy statistics that motivate them.
"""

from .calib import (AugmentationRecord, CalibrationMatrix, KittiCalibration, apply_augmentation,
                    invert_augmentation, parse_kitti_calib, project_points)
from .config import FusionConfig, load_config
from .fbfusion import (ScoreWeights, assemble_dense_foreground, expand_and_discard, fb_fuse,
                       score_importance, split_foreground_background)
from .p2fusion import PatchPattern, SafParameters, patch_fusion, point_fusion, saf_backward, saf_forward
from .pipeline import fuse_voxels, run_pipeline
from .tensor import bilinear_sample, bilinear_upsample, npy_read, npy_write
from .voxelgrid import (SparseVoxelTensor, VoxelGridSpec, indices_to_world, neighbor_offsets,
                        voxelize, world_to_indices)

__version__ = "0.1.0"

__all__ = [
    "AugmentationRecord", "CalibrationMatrix", "FusionConfig", "KittiCalibration", "PatchPattern",
    "SafParameters", "ScoreWeights", "SparseVoxelTensor", "VoxelGridSpec", "apply_augmentation",
    "assemble_dense_foreground", "bilinear_sample", "bilinear_upsample", "expand_and_discard",
    "fb_fuse", "fuse_voxels", "indices_to_world", "invert_augmentation", "load_config",
    "neighbor_offsets", "npy_read", "npy_write", "parse_kitti_calib", "patch_fusion",
    "point_fusion", "project_points", "run_pipeline", "saf_backward", "saf_forward",
    "score_importance", "split_foreground_background", "voxelize", "world_to_indices",
]
