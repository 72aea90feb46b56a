"""Foreground/background split and foreground densification.

A submanifold convolution scores every occupied voxel with K_S^3 importance
values: one for the voxel itself and one per neighbor site. Voxels whose own
score exceeds the threshold are foreground. Each foreground feature is
copied onto the neighbor sites whose score also exceeds the threshold,
weighted by that score; the rest are discarded. The densified foreground
and the untouched background then go through one more SAF pass.

Score channel order defaults to ``[neighbors..., self]``; pass
``fore_first=True`` for ``[self, neighbors...]``. Neighbor channel ``j``
belongs to ``neighbor_offsets(k_s)[j]``.

Collision rules when placing expanded copies:

* a copy landing on a voxel that already exists is dropped;
* copies landing on the same empty site are averaged;
* copies landing outside the grid are dropped.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .p2fusion import SafParameters, saf_forward
from .rng import Xoshiro256
from .voxelgrid import SparseVoxelTensor, kernel_offsets, linear_keys, neighbor_offsets


@dataclass
class ScoreWeights:
    """Submanifold kernel: ``weight[tap, c_in, c_out]`` and ``bias[c_out]``.

    Taps follow ``kernel_offsets(k_s)``; outputs are the K_S^3 score channels.
    """

    weight: np.ndarray
    bias: np.ndarray
    k_s: int

    def __post_init__(self):
        taps = self.k_s ** 3
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 3 or self.weight.shape[0] != taps or self.weight.shape[2] != taps:
            raise ValueError(f"score weights must be ({taps}, C, {taps}), got {self.weight.shape}")
        if self.bias.shape != (taps,):
            raise ValueError(f"score bias must be ({taps},)")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("score weights must be finite")

    @classmethod
    def init(cls, k_s, c, seed=0, gain=1.0):
        """Uniform in ``[-gain/sqrt(fan_in), gain/sqrt(fan_in)]``.

        Untrained kernels with unit gain give logits near zero and scores
        bunched around 0.5; a larger gain spreads them across (0, 1).
        """
        taps = k_s ** 3
        bound = gain / math.sqrt(taps * c)
        rng = Xoshiro256(seed)
        w = rng.uniform_array((taps, c, taps), -bound, bound)
        b = rng.uniform_array((taps,), -bound, bound)
        return cls(w, b, k_s)

    @classmethod
    def zeros(cls, k_s, c):
        taps = k_s ** 3
        return cls(np.zeros((taps, c, taps)), np.zeros(taps), k_s)


@dataclass
class ImportanceScores:
    raw: np.ndarray
    fore_first: bool = False

    @property
    def fore(self):
        """Center score per voxel, shape (N,)."""
        return self.raw[:, 0] if self.fore_first else self.raw[:, -1]

    @property
    def expand(self):
        """Neighbor scores, shape (N, K_S^3 - 1)."""
        return self.raw[:, 1:] if self.fore_first else self.raw[:, :-1]


@dataclass
class FbSplit:
    fore_rows: np.ndarray
    back_rows: np.ndarray

    @property
    def alpha(self):
        return int(self.fore_rows.shape[0])

    @property
    def beta(self):
        return int(self.back_rows.shape[0])


@dataclass
class Expansion:
    """Surviving expanded copies, one row per (foreground source, neighbor offset)."""

    source: np.ndarray
    offset_id: np.ndarray
    targets: np.ndarray
    features: np.ndarray

    def __len__(self):
        return int(self.source.shape[0])


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    # keep scores strictly inside (0, 1)
    return np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def submanifold_conv(t, weights):
    """Convolution evaluated only at occupied sites; empty neighbors contribute zero."""
    offs = kernel_offsets(weights.k_s)
    n = len(t)
    taps, c, cout = weights.weight.shape
    if t.channels != c:
        raise ValueError(f"tensor has {t.channels} channels, kernel expects {c}")
    if n == 0:
        return np.zeros((0, cout))
    nbr = t.neighbor_table(offs)
    padded = np.vstack([np.asarray(t.features, dtype=np.float64), np.zeros((1, c))])
    gathered = padded[np.where(nbr < 0, n, nbr)]  # (N, taps, C)
    return gathered.reshape(n, taps * c) @ weights.weight.reshape(taps * c, cout) + weights.bias


def score_importance(t, weights, fore_first=False):
    """Sigmoid of the submanifold convolution: (N, K_S^3) scores in (0, 1)."""
    return ImportanceScores(_sigmoid(submanifold_conv(t, weights)), fore_first)


def split_foreground_background(t, scores, threshold):
    """Foreground rows have center score strictly above ``threshold``."""
    if not 0.0 < threshold < 1.0:
        raise ValueError("threshold must lie in (0, 1)")
    fore = scores.fore > threshold
    return FbSplit(np.flatnonzero(fore), np.flatnonzero(~fore))


def expand_and_discard(t, split, scores, k_s, threshold, features=None):
    """Copy foreground features onto neighbor sites scoring above ``threshold``.

    Entries come out ordered by (source row, offset id). Copies are weighted
    by the neighbor score; off-grid targets are dropped.
    """
    feats = np.asarray(t.features if features is None else features, dtype=np.float64)
    offs = neighbor_offsets(k_s)
    fore = split.fore_rows
    imp = scores.expand[fore]
    if imp.shape[1] != offs.shape[0]:
        raise ValueError(f"scores carry {imp.shape[1]} neighbor channels, k_s={k_s} needs {offs.shape[0]}")
    src_local, kid = np.nonzero(imp > threshold)
    src = fore[src_local]
    targets = t.indices[src] + offs[kid]
    inside = np.all((targets >= 0) & (targets < t.spec.extents), axis=1)
    src, kid, src_local, targets = src[inside], kid[inside], src_local[inside], targets[inside]
    w = imp[src_local, kid]
    return Expansion(src, kid, targets, feats[src] * w[:, None])


def assemble_dense_foreground(t, split, expansion, features=None):
    """New sites created by expansion, followed by the foreground voxels.

    New sites are sorted by index; duplicates are averaged in entry order.
    """
    feats = np.asarray(t.features if features is None else features, dtype=np.float64)
    fore_idx = t.indices[split.fore_rows]
    fore_feat = feats[split.fore_rows]
    c = feats.shape[1]
    if len(expansion) == 0:
        return SparseVoxelTensor(fore_idx, fore_feat, t.spec, check=False)
    free = t.lookup_many(expansion.targets) < 0
    tgt = expansion.targets[free]
    ext = t.spec.extents
    keys = np.ascontiguousarray(linear_keys(tgt, ext))
    uniq, means, _ = kernels.segment_mean(
        keys, np.ascontiguousarray(expansion.features[free]), np.iinfo(np.int64).max
    )
    new_idx = np.stack(
        [uniq // (ext[1] * ext[2]), (uniq // ext[2]) % ext[1], uniq % ext[2]], axis=1
    ).reshape(-1, 3)
    return SparseVoxelTensor(
        np.vstack([new_idx, fore_idx]),
        np.vstack([means.reshape(-1, c), fore_feat]),
        t.spec,
        check=False,
    )


@dataclass
class FbResult:
    output: SparseVoxelTensor
    scores: ImportanceScores
    split: FbSplit
    expansion: Expansion
    dense_fore: SparseVoxelTensor

    def summary(self):
        return {
            "n_voxels": int(self.scores.raw.shape[0]),
            "alpha": self.split.alpha,
            "beta": self.split.beta,
            "expanded": len(self.expansion),
            "n_dense_fore": len(self.dense_fore),
            "n_out": len(self.output),
        }


def fb_fuse(t, saf_params, score_weights, threshold=0.5, chunk=None, fore_first=False):
    """Score, split, expand, assemble and run the closing SAF pass.

    ``t.features`` are the fused features from patch-point fusion. The SAF
    pass uses a one-slot patch: each row's own feature, with a zero point
    term. Output rows: expanded sites, foreground, then background.
    """
    if saf_params.k != 1:
        raise ValueError("the closing SAF pass needs parameters built for K=1")
    k_s = score_weights.k_s
    scores = score_importance(t, score_weights, fore_first)
    split = split_foreground_background(t, scores, threshold)
    expansion = expand_and_discard(t, split, scores, k_s, threshold)
    dense = assemble_dense_foreground(t, split, expansion)
    idx = np.vstack([dense.indices, t.indices[split.back_rows]])
    feat = np.vstack([np.asarray(dense.features, dtype=np.float64),
                      np.asarray(t.features, dtype=np.float64)[split.back_rows]])
    fused, _ = saf_forward(feat[:, None, :], np.zeros_like(feat), saf_params,
                           chunk=chunk, keep_cache=False)
    out = SparseVoxelTensor(idx, fused, t.spec, check=False)
    return FbResult(out, scores, split, expansion, dense)


def init_fb_parameters(k_s, c, seed, depth=1, gain=1.0):
    """Seeded (scoring kernel, closing SAF parameters) pair."""
    rng = Xoshiro256(seed)
    score_seed = rng.next_u64()
    saf_seed = rng.next_u64()
    return ScoreWeights.init(k_s, c, score_seed, gain), SafParameters.init(1, c, saf_seed, depth)
