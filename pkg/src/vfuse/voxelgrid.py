"""Sparse voxel tensors on a regular grid.

Index to world follows the corner convention
``world = (index * stride) * voxel_size + range_min``; a voxel's index
points at its minimum corner, not its center. Set
``VoxelGridSpec.center_offset`` to add half a cell when a
center-based convention is needed for comparison.
"""

import itertools
import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import npy_read, npy_write
from .errors import FormatError

# tolerance (in cells) within which a coordinate counts as sitting on a cell corner
_SNAP = 1e-9


def _snap_floor(q):
    """floor() that treats values within a hair of an integer as that integer."""
    r = np.rint(q)
    near = np.abs(q - r) <= _SNAP * np.maximum(1.0, np.abs(r))
    return np.where(near, r, np.floor(q))


@dataclass(frozen=True)
class VoxelGridSpec:
    voxel_size: tuple = (0.05, 0.05, 0.1)
    pc_min: tuple = (0.0, -40.0, -3.0)
    pc_max: tuple = (70.4, 40.0, 1.0)
    stride: int = 1
    center_offset: bool = False

    def __post_init__(self):
        size = tuple(float(v) for v in self.voxel_size)
        lo = tuple(float(v) for v in self.pc_min)
        hi = tuple(float(v) for v in self.pc_max)
        if len(size) != 3 or len(lo) != 3 or len(hi) != 3:
            raise ValueError("voxel_size, pc_min and pc_max need three components")
        if any(s <= 0 for s in size):
            raise ValueError("voxel sizes must be positive")
        if any(b <= a for a, b in zip(lo, hi)):
            raise ValueError("point cloud range max must exceed min on every axis")
        if int(self.stride) != self.stride or self.stride < 1:
            raise ValueError("stride must be a positive integer")
        object.__setattr__(self, "voxel_size", size)
        object.__setattr__(self, "pc_min", lo)
        object.__setattr__(self, "pc_max", hi)
        object.__setattr__(self, "stride", int(self.stride))
        object.__setattr__(self, "center_offset", bool(self.center_offset))
        if np.any(self.extents < 1):
            raise ValueError(f"grid extents {tuple(self.extents)} must all be >= 1")

    @property
    def base_extents(self):
        """Stride-1 grid size per axis: ``floor((max - min) / voxel_size)``."""
        q = (np.array(self.pc_max) - np.array(self.pc_min)) / np.array(self.voxel_size)
        return _snap_floor(q).astype(np.int64)

    @property
    def extents(self):
        """Grid size at this spec's stride."""
        return self.base_extents // self.stride

    @property
    def cell_size(self):
        return np.array(self.voxel_size) * self.stride

    def with_stride(self, stride):
        return VoxelGridSpec(self.voxel_size, self.pc_min, self.pc_max, stride, self.center_offset)

    def to_line(self):
        def fmt(vals):
            return ",".join(repr(float(v)) for v in vals)

        return (f"voxel_size={fmt(self.voxel_size)} pc_min={fmt(self.pc_min)} "
                f"pc_max={fmt(self.pc_max)} stride={self.stride} "
                f"center_offset={int(self.center_offset)}")

    @classmethod
    def from_line(cls, line):
        fields = {}
        for tok in line.split():
            key, sep, val = tok.partition("=")
            if not sep:
                raise FormatError(f"bad grid spec token {tok!r}")
            fields[key] = val
        try:
            return cls(
                voxel_size=tuple(float(v) for v in fields["voxel_size"].split(",")),
                pc_min=tuple(float(v) for v in fields["pc_min"].split(",")),
                pc_max=tuple(float(v) for v in fields["pc_max"].split(",")),
                stride=int(fields["stride"]),
                center_offset=bool(int(fields.get("center_offset", "0"))),
            )
        except (KeyError, ValueError) as exc:
            raise FormatError(f"bad grid spec line {line!r}") from exc


def linear_keys(indices, extents):
    idx = np.asarray(indices, dtype=np.int64).reshape(-1, 3)
    return (idx[:, 0] * extents[1] + idx[:, 1]) * extents[2] + idx[:, 2]


class SparseVoxelTensor:
    """``N`` occupied voxels: integer ``indices`` (N, 3) with ``features`` (N, C).

    Row order is whatever the producer chose; lookups go through a sorted key
    table built on first use.
    """

    def __init__(self, indices, features, spec, check=True):
        idx = np.ascontiguousarray(np.asarray(indices).reshape(-1, 3), dtype=np.int64)
        feat = np.asarray(features)
        if feat.ndim == 1:
            feat = feat.reshape(idx.shape[0], -1)
        if feat.shape[0] != idx.shape[0]:
            raise ValueError(
                f"{idx.shape[0]} indices but {feat.shape[0]} feature rows"
            )
        self.indices = idx
        self.features = feat
        self.spec = spec
        self._sorted = None
        if check:
            self._validate()

    def _validate(self):
        ext = self.spec.extents
        if np.any(self.indices < 0) or np.any(self.indices >= ext):
            raise ValueError(f"voxel indices fall outside grid extents {tuple(ext)}")
        keys, _ = self.sorted_keys()
        if keys.shape[0] > 1 and np.any(keys[1:] == keys[:-1]):
            raise ValueError("duplicate voxel indices")

    def __len__(self):
        return self.indices.shape[0]

    @property
    def channels(self):
        return self.features.shape[1]

    def __repr__(self):
        return f"SparseVoxelTensor(N={len(self)}, C={self.channels}, extents={tuple(self.spec.extents)})"

    def sorted_keys(self):
        """``(keys, perm)``: ascending linear keys and the row id behind each."""
        if self._sorted is None:
            keys = linear_keys(self.indices, self.spec.extents)
            perm = np.argsort(keys, kind="stable")
            self._sorted = (np.ascontiguousarray(keys[perm]), perm.astype(np.int64))
        return self._sorted

    def lookup_many(self, query):
        """Row id for each (i, j, k) in ``query``, -1 where absent."""
        q = np.asarray(query, dtype=np.int64).reshape(-1, 3)
        zero = np.zeros((1, 3), dtype=np.int64)
        return self.neighbor_table(zero, q)[:, 0]

    def lookup(self, index):
        """Row id of voxel ``index`` or ``None`` when it is empty."""
        row = int(self.lookup_many([index])[0])
        return None if row < 0 else row

    def neighbor_table(self, offsets, base=None):
        """(N, K) row ids of ``base[i] + offsets[k]``; -1 for empty or off-grid sites."""
        keys, perm = self.sorted_keys()
        base = self.indices if base is None else base
        off = np.ascontiguousarray(np.asarray(offsets, dtype=np.int64).reshape(-1, 3))
        return kernels.neighbor_table(
            keys, perm, np.ascontiguousarray(base), off, self.spec.extents.astype(np.int64)
        )

    def with_features(self, features):
        out = SparseVoxelTensor(self.indices, features, self.spec, check=False)
        out._sorted = self._sorted
        return out

    def subset(self, rows):
        rows = np.asarray(rows, dtype=np.int64)
        return SparseVoxelTensor(self.indices[rows], self.features[rows], self.spec, check=False)


def world_to_indices(points, spec):
    """Grid index of the cell containing each point (no range filtering)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    q = (pts - np.array(spec.pc_min)) / spec.cell_size
    return _snap_floor(q).astype(np.int64)


def indices_to_world(t):
    """World coordinates (meters) of each voxel's minimum corner.

    ``(V_I * stride) * voxel_size + range_min``; with ``center_offset`` the
    result moves to the cell center.
    """
    spec = t.spec if isinstance(t, SparseVoxelTensor) else None
    if spec is None:
        raise TypeError("indices_to_world expects a SparseVoxelTensor")
    idx = t.indices.astype(np.float64)
    scaled = idx * spec.stride
    if spec.center_offset:
        scaled = scaled + 0.5 * spec.stride
    return scaled * np.array(spec.voxel_size) + np.array(spec.pc_min)


def voxelize(points, spec, max_points_per_voxel=5):
    """Mean-pool raw points into occupied voxels.

    ``points`` is (M, 3 + F); the voxel feature is the mean over all 3 + F
    columns of the first ``max_points_per_voxel`` points (input order) that
    fall in the voxel. Points outside the grid are dropped. Output rows are
    sorted lexicographically by index.
    """
    if max_points_per_voxel < 1:
        raise ValueError("max_points_per_voxel must be >= 1")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] < 3:
        raise ValueError(f"points must be (M, 3+F), got shape {pts.shape}")
    ext = spec.extents
    pts = pts[np.all(np.isfinite(pts), axis=1)]
    idx = world_to_indices(pts[:, :3], spec)
    inside = np.all((idx >= 0) & (idx < ext), axis=1)
    idx = idx[inside]
    vals = np.ascontiguousarray(pts[inside])
    keys = np.ascontiguousarray(linear_keys(idx, ext))
    uniq, means, _ = kernels.segment_mean(keys, vals, int(max_points_per_voxel))
    out_idx = np.stack(
        [uniq // (ext[1] * ext[2]), (uniq // ext[2]) % ext[1], uniq % ext[2]], axis=1
    )
    t = SparseVoxelTensor(out_idx, means, spec, check=False)
    t._sorted = (uniq, np.arange(uniq.shape[0], dtype=np.int64))
    return t


def kernel_offsets(k_s):
    """All (dx, dy, dz) in the k_s^3 cube, lexicographic, center included."""
    if k_s < 1 or k_s % 2 == 0:
        raise ValueError(f"kernel size must be a positive odd integer, got {k_s}")
    r = (k_s - 1) // 2
    return np.array(list(itertools.product(range(-r, r + 1), repeat=3)), dtype=np.int64)


def neighbor_offsets(k_s):
    """The k_s^3 - 1 neighbor displacements, lexicographic, center excluded."""
    cube = kernel_offsets(k_s)
    return cube[np.any(cube != 0, axis=1)].reshape(-1, 3)


def lookup(t, index):
    return t.lookup(index)


def save_sparse(t, stem):
    """Write ``<stem>.idx.npy``, ``<stem>.feat.npy`` and ``<stem>.spec.txt``."""
    stem = os.fspath(stem)
    npy_write(t.indices.astype(np.float64), stem + ".idx.npy")
    npy_write(np.asarray(t.features, dtype=np.float32), stem + ".feat.npy")
    with open(stem + ".spec.txt", "w", encoding="ascii") as fh:
        fh.write(t.spec.to_line() + "\n")


def load_sparse(stem):
    stem = os.fspath(stem)
    idx = npy_read(stem + ".idx.npy")
    feat = npy_read(stem + ".feat.npy")
    with open(stem + ".spec.txt", "r", encoding="ascii") as fh:
        spec = VoxelGridSpec.from_line(fh.readline().strip())
    if idx.ndim != 2 or (idx.size and idx.shape[1] != 3):
        raise FormatError(f"{stem}.idx.npy must be (N, 3)")
    if np.any(idx != np.round(idx)):
        raise FormatError(f"{stem}.idx.npy holds non-integer indices")
    return SparseVoxelTensor(idx.astype(np.int64), feat.reshape(idx.shape[0], -1), spec)
