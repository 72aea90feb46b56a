"""Deterministic synthetic driving scenes.

A spinning multi-beam LiDAR at the origin is ray-cast against a flat ground
plane and a handful of car-sized oriented boxes standing on it. The camera
uses KITTI-like intrinsics and the usual LiDAR-to-camera axis swap. Image
features are a smooth field of Gaussian bumps at quarter resolution,
standing in for a segmentation backbone.

Every random draw comes from :class:`vfuse.rng.Xoshiro256`, so a seed
fixes the scene on any platform.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .analytics import DIFFICULTIES, OrientedBox
from .calib import KittiCalibration, read_velodyne_bin, write_kitti_calib, write_velodyne_bin
from .calib import parse_kitti_calib
from .errors import FormatError
from .rng import Xoshiro256
from .tensor import npy_read, npy_write

# LiDAR frame (x forward, y left, z up) -> camera frame (x right, y down, z forward)
VELO_TO_CAM_R = np.array([[0.0, -1.0, 0.0], [0.0, 0.0, -1.0], [1.0, 0.0, 0.0]])
VELO_TO_CAM_T = np.array([0.0, -0.08, -0.27])

GROUND = -1


@dataclass(frozen=True)
class SceneSpec:
    seed: int = 0
    n_objects: int = 8
    x_range: tuple = (6.0, 60.0)
    y_range: tuple = (-15.0, 15.0)
    beams: int = 64
    fov_up: float = 2.0
    fov_down: float = -24.8
    azimuth_res: float = 0.2
    max_range: float = 120.0
    lidar_height: float = 1.73
    width: int = 1242
    height: int = 375
    fx: float = 721.5377
    fy: float = 721.5377
    cx: float = 609.5593
    cy: float = 172.854
    n_bumps: int = 12
    amplitude: float = 1.0
    bump_sigma: tuple = (2.0, 12.0)

    def __post_init__(self):
        if self.beams < 1:
            raise ValueError("beam count must be >= 1")
        if self.width < 16 or self.height < 16:
            raise ValueError("image must be at least 16x16")
        if not (self.max_range > 0 and self.lidar_height > 0 and self.azimuth_res > 0):
            raise ValueError("ranges and resolutions must be positive")
        if self.n_objects < 0 or self.n_bumps < 0:
            raise ValueError("object and bump counts must be non-negative")


@dataclass
class Scene:
    points: np.ndarray
    boxes: list
    difficulties: list
    calib: KittiCalibration
    surface: np.ndarray
    spec: SceneSpec = None


def make_calibration(spec):
    p2 = np.array([[spec.fx, 0.0, spec.cx, 0.0], [0.0, spec.fy, spec.cy, 0.0], [0.0, 0.0, 1.0, 0.0]])
    tr = np.hstack([VELO_TO_CAM_R, VELO_TO_CAM_T[:, None]])
    return KittiCalibration(p2, np.eye(3), tr, image_size=(spec.width, spec.height))


def beam_directions(spec):
    """Unit ray directions, beam-major then azimuth, shape (beams * columns, 3)."""
    if spec.beams == 1:
        elev = np.array([math.radians(spec.fov_down)])
    else:
        elev = np.radians(np.linspace(spec.fov_up, spec.fov_down, spec.beams))
    cols = int(round(360.0 / spec.azimuth_res))
    az = np.radians(-180.0 + spec.azimuth_res * np.arange(cols))
    ce, se = np.cos(elev)[:, None], np.sin(elev)[:, None]
    d = np.stack([ce * np.cos(az), ce * np.sin(az), np.broadcast_to(se, (spec.beams, cols))], axis=-1)
    return d.reshape(-1, 3)


def _place_boxes(spec, rng):
    boxes = []
    tries = 0
    while len(boxes) < spec.n_objects and tries < 50 * max(1, spec.n_objects):
        tries += 1
        x = rng.uniform(*spec.x_range)
        y = rng.uniform(*spec.y_range)
        length = rng.uniform(3.5, 4.5)
        width = rng.uniform(1.5, 1.8)
        height = rng.uniform(1.4, 1.7)
        yaw = rng.uniform(-math.pi, math.pi)
        if any(math.hypot(x - b.center[0], y - b.center[1]) < 6.0 for b in boxes):
            continue
        boxes.append(OrientedBox((x, y, -spec.lidar_height + height / 2.0), (length, width, height), yaw))
    return boxes


def _rotation(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def ray_box_distance(dirs, box):
    """Distance along each ray from the origin to ``box`` (inf when missed)."""
    R = _rotation(box.yaw)
    o = R.T @ (-np.asarray(box.center, dtype=np.float64))
    d = dirs @ R
    half = np.asarray(box.size, dtype=np.float64) / 2.0
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (-half - o) * inv
        t2 = (half - o) * inv
    tmin = np.max(np.minimum(t1, t2), axis=1)
    tmax = np.min(np.maximum(t1, t2), axis=1)
    hit = (tmax >= tmin) & (tmin > 0)
    return np.where(hit, tmin, np.inf)


def difficulty_for(box):
    """Distance-based stand-in for KITTI difficulty labels."""
    dist = math.hypot(box.center[0], box.center[1])
    if dist < 20.0:
        return DIFFICULTIES[0]
    if dist < 40.0:
        return DIFFICULTIES[1]
    return DIFFICULTIES[2]


def generate_scene(spec):
    """Ray-cast the scene; points are (M, 4) float64 ``x, y, z, reflectance``.

    ``surface[i]`` is the box index hit by point ``i`` or -1 for the ground.
    """
    rng = Xoshiro256(spec.seed)
    boxes = _place_boxes(spec, rng)
    refl = [rng.uniform(0.3, 0.9) for _ in boxes]
    dirs = beam_directions(spec)
    best = np.full(dirs.shape[0], np.inf)
    surface = np.full(dirs.shape[0], GROUND, dtype=np.int64)
    down = dirs[:, 2] < 0
    best[down] = -spec.lidar_height / dirs[down, 2]
    for i, box in enumerate(boxes):
        t = ray_box_distance(dirs, box)
        closer = t < best
        best[closer] = t[closer]
        surface[closer] = i
    keep = best <= spec.max_range
    t = best[keep]
    pts = dirs[keep] * t[:, None]
    surface = surface[keep]
    r = np.where(surface == GROUND, 0.25, np.array(refl + [0.25])[surface])
    points = np.hstack([pts, r[:, None]])
    diffs = [difficulty_for(b) for b in boxes]
    return Scene(points, boxes, diffs, make_calibration(spec), surface, spec)


def generate_feature_map(spec, c):
    """Quarter-resolution ``(W//4, H//4, c)`` field of Gaussian bumps.

    Bump weights are drawn per channel from ``[-1, 1]``; each channel is
    then rescaled so its largest magnitude equals the amplitude ``A``.
    """
    if c < 1:
        raise ValueError("channel count must be >= 1")
    w, h = spec.width // 4, spec.height // 4
    out = np.zeros((w, h, c))
    n = spec.n_bumps
    if n == 0:
        return out
    rng = Xoshiro256(spec.seed).spawn(0xFEA7)
    xs = np.arange(w, dtype=np.float64)[:, None]
    ys = np.arange(h, dtype=np.float64)[None, :]
    for _ in range(n):
        cx = rng.uniform(0.0, w)
        cy = rng.uniform(0.0, h)
        sigma = rng.uniform(*spec.bump_sigma)
        weights = rng.uniform_array((c,), -1.0, 1.0)
        g = np.exp(-((xs - cx) ** 2 + (ys - cy) ** 2) / (2.0 * sigma * sigma))
        out += g[:, :, None] * weights
    peak = np.max(np.abs(out), axis=(0, 1))
    out *= np.where(peak > 0, spec.amplitude / np.where(peak > 0, peak, 1.0), 0.0)
    return out


# --- scene directories ----------------------------------------------------

VELO_FILE = "velodyne.bin"
CALIB_FILE = "calib.txt"
FEATURE_FILE = "image_features.npy"
BOXES_FILE = "boxes.txt"
META_FILE = "scene.txt"


def write_scene(scene, fmap, out_dir):
    """Write KITTI-style ``velodyne.bin``/``calib.txt`` plus features, boxes and metadata."""
    os.makedirs(out_dir, exist_ok=True)
    write_velodyne_bin(scene.points, os.path.join(out_dir, VELO_FILE))
    write_kitti_calib(scene.calib, os.path.join(out_dir, CALIB_FILE))
    npy_write(np.asarray(fmap, dtype=np.float32), os.path.join(out_dir, FEATURE_FILE))
    with open(os.path.join(out_dir, BOXES_FILE), "w", encoding="ascii") as fh:
        for box, diff in zip(scene.boxes, scene.difficulties):
            vals = list(box.center) + list(box.size) + [box.yaw]
            fh.write(diff + " " + " ".join(repr(float(v)) for v in vals) + "\n")
    w, h = scene.calib.image_size
    with open(os.path.join(out_dir, META_FILE), "w", encoding="ascii") as fh:
        fh.write(f"image_width: {w}\nimage_height: {h}\npoints: {scene.points.shape[0]}\n")
    return [os.path.join(out_dir, f) for f in (VELO_FILE, CALIB_FILE, FEATURE_FILE, BOXES_FILE, META_FILE)]


def read_boxes(path):
    boxes, diffs = [], []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 8:
                raise FormatError(f"{path}:{lineno}: expected 'difficulty cx cy cz l w h yaw'")
            vals = [float(v) for v in parts[1:]]
            boxes.append(OrientedBox(tuple(vals[:3]), tuple(vals[3:6]), vals[6]))
            diffs.append(parts[0])
    return boxes, diffs


def read_scene(scene_dir):
    """Load ``(points, calib, feature_map, boxes, difficulties)`` from a scene directory."""
    points = read_velodyne_bin(os.path.join(scene_dir, VELO_FILE))
    calib = parse_kitti_calib(os.path.join(scene_dir, CALIB_FILE))
    fmap = npy_read(os.path.join(scene_dir, FEATURE_FILE))
    size = (1242, 375)
    meta_path = os.path.join(scene_dir, META_FILE)
    if os.path.exists(meta_path):
        meta = {}
        with open(meta_path, "r", encoding="ascii") as fh:
            for line in fh:
                key, _, val = line.partition(":")
                meta[key.strip()] = val.strip()
        size = (int(meta["image_width"]), int(meta["image_height"]))
    calib = KittiCalibration(calib.P2, calib.R0_rect, calib.Tr_velo_to_cam, calib.h, size, calib.extra)
    boxes_path = os.path.join(scene_dir, BOXES_FILE)
    boxes, diffs = read_boxes(boxes_path) if os.path.exists(boxes_path) else ([], [])
    return points, calib, fmap, boxes, diffs
