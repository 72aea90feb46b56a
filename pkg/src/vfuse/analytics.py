"""Sparsity statistics: image-pixel occupancy and per-box point counts."""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .calib import project_points

DISTANCE_BINS = ((0.0, 20.0), (20.0, 40.0), (40.0, np.inf))
DIFFICULTIES = ("easy", "moderate", "hard")


def _bin_label(lo, hi):
    return f"{lo:g}-{hi:g}m" if np.isfinite(hi) else f"{lo:g}m-inf"


@dataclass
class OccupancyReport:
    total_pixels: int
    hit_pixels: int
    n_points: int
    n_projected: int
    bins: list = field(default_factory=list)

    @property
    def occupancy_rate(self):
        return self.hit_pixels / self.total_pixels if self.total_pixels else 0.0

    def rows(self):
        out = [("total_pixels", self.total_pixels), ("hit_pixels", self.hit_pixels),
               ("occupancy_rate", f"{self.occupancy_rate:.6f}"),
               ("n_points", self.n_points), ("n_projected", self.n_projected)]
        for b in self.bins:
            tag = b["label"]
            out += [(f"bin.{tag}.points", b["points"]), (f"bin.{tag}.hit_pixels", b["hit_pixels"]),
                    (f"bin.{tag}.occupancy_rate", f"{b['occupancy_rate']:.6f}")]
        return out

    def to_text(self):
        return "".join(f"{k}: {v}\n" for k, v in self.rows())

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["bin", "points", "hit_pixels", "occupancy_rate"])
        w.writerow(["all", self.n_projected, self.hit_pixels, f"{self.occupancy_rate:.6f}"])
        for b in self.bins:
            w.writerow([b["label"], b["points"], b["hit_pixels"], f"{b['occupancy_rate']:.6f}"])
        return buf.getvalue()


def occupancy(points, calib, image_w, image_h):
    """Fraction of image pixels hit by at least one projected point.

    A point hits the pixel ``(floor(u), floor(v))`` when its projection is
    valid. Per-distance bins use the point's Euclidean range from the sensor.
    """
    pts = np.asarray(points, dtype=np.float64)
    xyz = pts[:, :3] if pts.size else np.zeros((0, 3))
    pixels, _, valid = project_points(xyz, calib, image_size=(image_w, image_h))
    u = np.floor(pixels[valid, 0]).astype(np.int64)
    v = np.floor(pixels[valid, 1]).astype(np.int64)
    dist = np.linalg.norm(xyz[valid], axis=1)
    total = int(image_w) * int(image_h)
    hit = int(kernels.mark_pixels(u, v, int(image_w), int(image_h)).sum())
    bins = []
    for lo, hi in DISTANCE_BINS:
        sel = (dist >= lo) & (dist < hi)
        nb = int(kernels.mark_pixels(u[sel], v[sel], int(image_w), int(image_h)).sum())
        bins.append({"label": _bin_label(lo, hi), "lo": lo, "hi": hi, "points": int(sel.sum()),
                     "hit_pixels": nb, "occupancy_rate": nb / total if total else 0.0})
    return OccupancyReport(total, hit, int(xyz.shape[0]), int(valid.sum()), bins)


@dataclass(frozen=True)
class OrientedBox:
    """3D box with ``center``, ``size`` = (length, width, height) and ``yaw`` about z."""

    center: tuple
    size: tuple
    yaw: float = 0.0

    def __post_init__(self):
        if any(s <= 0 for s in self.size):
            raise ValueError("box sizes must be positive")


def points_in_box(points, box):
    """Boolean mask of points inside ``box``.

    Points are rotated by ``-yaw`` about the center; inside means
    ``-size/2 <= local < size/2`` on every axis.
    """
    pts = np.asarray(points, dtype=np.float64)[:, :3]
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    d = pts - np.asarray(box.center, dtype=np.float64)
    local = np.stack([c * d[:, 0] + s * d[:, 1], -s * d[:, 0] + c * d[:, 1], d[:, 2]], axis=1)
    half = np.asarray(box.size, dtype=np.float64) / 2.0
    return np.all((local >= -half) & (local < half), axis=1)


@dataclass
class BoxPointHistogram:
    counts: np.ndarray
    difficulties: list

    def fraction_below(self, threshold, difficulty=None):
        """Fraction of boxes (optionally of one difficulty) with fewer than ``threshold`` points."""
        sel = self._select(difficulty)
        if sel.size == 0:
            return 0.0
        return float(np.mean(sel < threshold))

    def _select(self, difficulty):
        if difficulty is None:
            return self.counts
        mask = np.array([d == difficulty for d in self.difficulties], dtype=bool)
        return self.counts[mask] if mask.size else self.counts[:0]

    def cumulative(self, thresholds, difficulty=None):
        return [self.fraction_below(t, difficulty) for t in thresholds]

    def to_text(self, threshold=180):
        lines = [f"boxes: {len(self.counts)}", f"points_in_boxes: {int(self.counts.sum())}"]
        lines.append(f"fraction_below_{threshold}: {self.fraction_below(threshold):.6f}")
        for d in DIFFICULTIES:
            n = int(sum(1 for x in self.difficulties if x == d))
            lines.append(f"{d}.boxes: {n}")
            lines.append(f"{d}.fraction_below_{threshold}: {self.fraction_below(threshold, d):.6f}")
        return "".join(ln + "\n" for ln in lines)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["box", "difficulty", "points"])
        for i, (n, d) in enumerate(zip(self.counts.tolist(), self.difficulties)):
            w.writerow([i, d, n])
        return buf.getvalue()


def box_point_counts(points, boxes, difficulties):
    """Count the points inside each oriented box."""
    if len(boxes) != len(difficulties):
        raise ValueError("one difficulty label per box is required")
    counts = np.array([int(points_in_box(points, b).sum()) for b in boxes], dtype=np.int64)
    return BoxPointHistogram(counts, list(difficulties))
