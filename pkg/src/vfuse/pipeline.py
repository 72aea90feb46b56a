"""End-to-end fusion: voxelize, project, patch-point fusion, FB fusion.

The learned parts of the detector (the first sparse-convolution stage, the
image encoder, the SAF weights and the importance scorer) are replaced by
seeded random parameters so the mechanism runs without a trained model.
Voxel features come from a seeded linear lift of the mean-pooled point
attributes, with coordinates normalized to the point-cloud range.
"""

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from .calib import invert_augmentation, project_points
from .errors import NumericError
from .fbfusion import FbResult, ScoreWeights, fb_fuse
from .p2fusion import PatchPattern, SafParameters, patch_fusion, point_fusion, saf_forward
from .rng import Xoshiro256
from .tensor import bilinear_upsample
from .voxelgrid import SparseVoxelTensor, indices_to_world, voxelize


@dataclass
class ModelParams:
    lift_w: np.ndarray
    lift_b: np.ndarray
    saf_p2: SafParameters
    score: ScoreWeights
    saf_fb: SafParameters


def init_params(config, in_features, image_channels):
    """Seeded parameters for every learned stand-in the pipeline needs."""
    rng = Xoshiro256(config.seed)
    seeds = [rng.next_u64() for _ in range(4)]
    c_v = config.channels
    c = c_v if config.combiner == "add" else image_channels + c_v
    if config.combiner == "add" and image_channels != c_v:
        raise ValueError(
            f"addition fusion needs image channels ({image_channels}) == fusion.channels ({c_v})"
        )
    bound = 1.0 / np.sqrt(in_features)
    lift_rng = Xoshiro256(seeds[0])
    lift_w = lift_rng.uniform_array((in_features, c_v), -bound, bound)
    lift_b = lift_rng.uniform_array((c_v,), -bound, bound)
    k = config.pattern().k
    return ModelParams(
        lift_w, lift_b,
        SafParameters.init(k, c, seeds[1], config.mlp_depth),
        ScoreWeights.init(config.k_s, c, seeds[2], config.score_gain),
        SafParameters.init(1, c, seeds[3], config.mlp_depth),
    )


def encode_voxels(voxels, params):
    """Stand-in first-stage encoder: normalized mean attributes -> C_v channels."""
    feats = np.asarray(voxels.features, dtype=np.float64).copy()
    spec = voxels.spec
    lo, hi = np.array(spec.pc_min), np.array(spec.pc_max)
    feats[:, :3] = (feats[:, :3] - lo) / (hi - lo)
    return feats @ params.lift_w + params.lift_b


@dataclass
class PipelineResult:
    voxels: SparseVoxelTensor
    voxel_features: np.ndarray
    pixels: np.ndarray
    valid: np.ndarray
    fused: SparseVoxelTensor
    fb: FbResult
    timings: dict = field(default_factory=dict)

    def summary(self):
        out = {"n_valid_projections": int(self.valid.sum())}
        out.update(self.fb.summary())
        out["wall_time_s"] = round(sum(self.timings.values()), 6)
        return out


def fuse_voxels(voxels, calib, fmap, config, params=None, augmentation=None, image_size=None):
    """Run patch-point fusion and FB fusion on an already voxelized scene.

    ``fmap`` is the quarter-resolution ``(W/4, H/4, C_I)`` image feature map;
    it is upsampled to the calibration's image size before sampling.
    """
    timings = {}
    t0 = time.perf_counter()
    fmap = np.asarray(fmap)
    size = image_size or calib.image_size
    if size is None:
        raise ValueError("image size is unknown: set it on the calibration or pass image_size")
    if params is None:
        params = init_params(config, voxels.features.shape[1], fmap.shape[2])
    f_v = encode_voxels(voxels, params)
    timings["encode"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    world = indices_to_world(voxels)
    if augmentation is not None:
        world = invert_augmentation(world, augmentation)
    cal = dataclasses.replace(calib, h=config.scale_h)
    pixels, _, valid = project_points(world, cal, image_size=size)
    timings["project"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    full = bilinear_upsample(fmap, size[0], size[1])
    timings["upsample"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    mask = valid if config.mask_invalid else None
    f_iv = point_fusion(full, pixels, f_v, config.combiner, mask)
    f_kiv = patch_fusion(full, pixels, config.pattern(), f_v, config.combiner, mask)
    fused_feat, _ = saf_forward(f_kiv, f_iv, params.saf_p2, chunk=config.chunk, keep_cache=False)
    fused = voxels.with_features(fused_feat)
    timings["p2fusion"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    fb = fb_fuse(fused, params.saf_fb, params.score, config.threshold, config.chunk, config.fore_first)
    timings["fbfusion"] = time.perf_counter() - t0
    if not np.all(np.isfinite(fb.output.features)):
        raise NumericError("fbfusion")
    return PipelineResult(voxels, f_v, pixels, valid, fused, fb, timings)


def run_pipeline(points, calib, fmap, config, params=None, augmentation=None, image_size=None):
    """Voxelize raw ``(M, 3 + F)`` points and fuse them with the image features."""
    t0 = time.perf_counter()
    voxels = voxelize(np.asarray(points, dtype=np.float64), config.grid_spec(), config.max_points)
    elapsed = time.perf_counter() - t0
    result = fuse_voxels(voxels, calib, fmap, config, params, augmentation, image_size)
    result.timings = {"voxelize": elapsed, **result.timings}
    return result


SWEEP_PARAMS = ("T", "k_off", "stage")
DEFAULT_SWEEPS = {
    "T": (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
    "k_off": (9, 16, 25, 36),
    "stage": (1, 2, 3, 4),
}
SWEEP_COLUMNS = ("param", "value", "patch", "stride", "n_voxels", "alpha", "beta",
                 "expanded", "n_dense_fore", "n_out", "wall_time_s")


def _sweep_config(config, param, value):
    if param == "T":
        return config.replace(threshold=float(value))
    if param == "k_off":
        offs = PatchPattern.from_count(int(value)).offsets
        return config.replace(patch=tuple(int(v) for v in np.unique(offs[:, 0])))
    if param == "stage":
        return config.replace(stage=int(value), stride=None)
    raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")


def sweep(points, calib, fmap, config, param, values=None, image_size=None):
    """Rerun the pipeline once per value of ``param``; returns one summary dict per value.

    A threshold sweep reuses the patch-point fusion result, since only the
    FB stage depends on the threshold.
    """
    if param not in SWEEP_PARAMS:
        raise ValueError(f"sweep parameter must be one of {SWEEP_PARAMS}, got {param!r}")
    values = DEFAULT_SWEEPS[param] if values is None else tuple(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    configs = [_sweep_config(config, param, v) for v in values]
    rows = []
    base = base_params = None
    for value, cfg in zip(values, configs):
        t0 = time.perf_counter()
        if param == "T" and base is not None:
            fb = fb_fuse(base.fused, base_params.saf_fb, base_params.score, cfg.threshold,
                         cfg.chunk, cfg.fore_first)
            summary = fb.summary()
        else:
            pts = np.asarray(points, dtype=np.float64)
            base_params = init_params(cfg, pts.shape[1], np.asarray(fmap).shape[2])
            base = run_pipeline(pts, calib, fmap, cfg, base_params, image_size=image_size)
            summary = base.fb.summary()
        row = {"param": param, "value": value, "patch": " ".join(str(v) for v in cfg.patch),
               "stride": cfg.effective_stride}
        row.update(summary)
        row["wall_time_s"] = round(time.perf_counter() - t0, 6)
        rows.append(row)
    return rows
