"""Patch-point fusion of image features into voxel features.

Point fusion samples the image at each voxel's projected pixel; patch
fusion samples a K-pixel neighborhood around it. The SAF block merges both
through an MLP and single-head self-attention over the voxel rows:

    X       = reshape(F_KIV, (N, K*C)) + tile(F_IV, K)
    F_C     = relu(... relu(X @ W_0 + b_0) ...)
    F_fused = softmax((F_C Wq)(F_C Wk)^T / sqrt(C)) (F_C Wv)

Attention can be restricted to contiguous blocks of ``chunk`` rows, which
equals full attention whenever ``chunk >= N``.
"""

import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import FormatError, NumericError
from .rng import Xoshiro256
from .tensor import as_tensor, npy_read, npy_write, sanitize_coords

COMBINERS = ("add", "concat")


@dataclass(frozen=True)
class PatchPattern:
    """K distinct integer pixel displacements ``(du, dv)``."""

    offsets: np.ndarray

    def __post_init__(self):
        off = np.asarray(self.offsets)
        if off.ndim != 2 or off.shape[1] != 2 or off.shape[0] < 1:
            raise ValueError(f"patch offsets must be (K >= 1, 2), got {off.shape}")
        if not np.all(off == np.round(off)):
            raise ValueError("patch offsets must be integers")
        off = off.astype(np.int64)
        if len({tuple(o) for o in off.tolist()}) != off.shape[0]:
            raise ValueError("patch offsets must be distinct")
        object.__setattr__(self, "offsets", off)

    @property
    def k(self):
        return self.offsets.shape[0]

    @classmethod
    def square(cls, values):
        """Cartesian product ``values x values``, u outer, v inner."""
        vals = [int(v) for v in values]
        return cls(np.array([(du, dv) for du in vals for dv in vals], dtype=np.int64))

    @classmethod
    def from_count(cls, k):
        """Square pattern with ``k`` slots: 9 -> [-1..1]^2, 16 -> [-1..2]^2, 25 -> [-2..2]^2, ..."""
        side = math.isqrt(int(k))
        if side < 1 or side * side != k:
            raise ValueError(f"patch size {k} is not a perfect square")
        lo = -((side - 1) // 2)
        return cls.square(range(lo, lo + side))

    @classmethod
    def point(cls):
        return cls(np.zeros((1, 2), dtype=np.int64))


def _check_inputs(img, pixels, voxfeat, combiner):
    if combiner not in COMBINERS:
        raise ValueError(f"combiner must be one of {COMBINERS}, got {combiner!r}")
    img = as_tensor(img)
    if img.ndim != 3:
        raise ValueError(f"image features must be (W, H, C), got {img.shape}")
    px = sanitize_coords(pixels)
    vf = np.asarray(voxfeat, dtype=np.float64)
    if vf.ndim != 2 or vf.shape[0] != px.shape[0]:
        raise ValueError(f"voxel features {vf.shape} do not match {px.shape[0]} pixels")
    if combiner == "add" and img.shape[2] != vf.shape[1]:
        raise ValueError(
            f"addition needs equal channels: image has {img.shape[2]}, voxels have {vf.shape[1]}"
        )
    return np.ascontiguousarray(img, dtype=np.float64), px, vf


def _combine(sampled, vf, combiner, valid):
    # sampled: (N, K, C_I); vf: (N, C_v)
    if valid is not None:
        sampled = sampled * np.asarray(valid, dtype=np.float64).reshape(-1, 1, 1)
    if combiner == "add":
        return sampled + vf[:, None, :]
    rep = np.broadcast_to(vf[:, None, :], (vf.shape[0], sampled.shape[1], vf.shape[1]))
    return np.concatenate([sampled, rep], axis=2)


def point_fusion(img, pixels, voxfeat, combiner="add", valid=None):
    """Fuse each voxel with the image feature at its projected pixel.

    ``valid`` (optional, bool per voxel) zeroes the image term for voxels
    whose projection missed the image. Returns (N, C) float64.
    """
    img, px, vf = _check_inputs(img, pixels, voxfeat, combiner)
    zero = np.zeros((1, 2), dtype=np.float64)
    sampled = kernels.bilinear_gather(img, px, zero)
    return _combine(sampled, vf, combiner, valid)[:, 0, :]


def patch_fusion(img, pixels, pattern, voxfeat, combiner="add", valid=None):
    """Fuse each voxel with the image features of a K-pixel patch.

    Slot ``k`` samples at ``pixels[i] + pattern.offsets[k]``. Returns
    (N, K, C) float64.
    """
    img, px, vf = _check_inputs(img, pixels, voxfeat, combiner)
    off = np.ascontiguousarray(pattern.offsets, dtype=np.float64)
    sampled = kernels.bilinear_gather(img, px, off)
    return _combine(sampled, vf, combiner, valid)


# --- SAF ------------------------------------------------------------------


@dataclass
class SafParameters:
    mlp_weights: list
    mlp_biases: list
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    seed: int = 0

    def __post_init__(self):
        c = self.channels
        for w in (self.w_q, self.w_k, self.w_v):
            if w.shape != (c, c):
                raise ValueError(f"attention projections must be ({c}, {c}), got {w.shape}")
        fan = self.mlp_weights[0].shape[0]
        if fan % c:
            raise ValueError("first MLP layer input width must be a multiple of C")
        width = fan
        for w, b in zip(self.mlp_weights, self.mlp_biases):
            if w.shape[0] != width or b.shape != (w.shape[1],):
                raise ValueError("inconsistent MLP layer shapes")
            width = w.shape[1]
        if width != c:
            raise ValueError("last MLP layer must output C channels")
        for _, arr in self.named():
            if not np.all(np.isfinite(arr)):
                raise ValueError("SAF parameters must be finite")

    @property
    def channels(self):
        return self.w_q.shape[0]

    @property
    def k(self):
        return self.mlp_weights[0].shape[0] // self.channels

    @property
    def depth(self):
        return len(self.mlp_weights)

    @classmethod
    def init(cls, k, c, seed=0, depth=1):
        """Uniform in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` from a seeded stream."""
        if depth < 1:
            raise ValueError("MLP depth must be >= 1")
        rng = Xoshiro256(seed)
        weights, biases = [], []
        fan = k * c
        for _ in range(depth):
            bound = 1.0 / math.sqrt(fan)
            weights.append(rng.uniform_array((fan, c), -bound, bound))
            biases.append(rng.uniform_array((c,), -bound, bound))
            fan = c
        bound = 1.0 / math.sqrt(c)
        wq, wk, wv = (rng.uniform_array((c, c), -bound, bound) for _ in range(3))
        return cls(weights, biases, wq, wk, wv, seed)

    def named(self):
        """``(name, array)`` pairs in a fixed order."""
        out = []
        for i, (w, b) in enumerate(zip(self.mlp_weights, self.mlp_biases)):
            out.append((f"mlp.{i}.weight", w))
            out.append((f"mlp.{i}.bias", b))
        out += [("attn.q", self.w_q), ("attn.k", self.w_k), ("attn.v", self.w_v)]
        return out

    def replace(self, name, value):
        """Copy with one named array swapped out."""
        weights = list(self.mlp_weights)
        biases = list(self.mlp_biases)
        wq, wk, wv = self.w_q, self.w_k, self.w_v
        if name.startswith("mlp."):
            _, i, kind = name.split(".")
            (weights if kind == "weight" else biases)[int(i)] = value
        elif name == "attn.q":
            wq = value
        elif name == "attn.k":
            wk = value
        elif name == "attn.v":
            wv = value
        else:
            raise KeyError(name)
        return SafParameters(weights, biases, wq, wk, wv, self.seed)

    def save(self, directory):
        """One NPY per tensor plus ``manifest.txt`` (``name shape`` per line)."""
        os.makedirs(directory, exist_ok=True)
        lines = [f"seed {self.seed}"]
        for name, arr in self.named():
            npy_write(np.asarray(arr, dtype=np.float64), os.path.join(directory, name + ".npy"))
            lines.append(f"{name} {'x'.join(str(n) for n in arr.shape)}")
        with open(os.path.join(directory, "manifest.txt"), "w", encoding="ascii") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "manifest.txt"), "r", encoding="ascii") as fh:
            rows = [ln.split() for ln in fh if ln.strip()]
        seed = 0
        arrays = {}
        for row in rows:
            if row[0] == "seed":
                seed = int(row[1])
                continue
            name, shape = row
            arr = npy_read(os.path.join(directory, name + ".npy"))
            expect = tuple(int(n) for n in shape.split("x"))
            if arr.shape != expect:
                raise FormatError(f"{name}: manifest shape {expect} but file holds {arr.shape}")
            arrays[name] = arr
        depth = sum(1 for n in arrays if n.endswith(".weight"))
        try:
            return cls(
                [arrays[f"mlp.{i}.weight"] for i in range(depth)],
                [arrays[f"mlp.{i}.bias"] for i in range(depth)],
                arrays["attn.q"], arrays["attn.k"], arrays["attn.v"], seed,
            )
        except KeyError as exc:
            raise FormatError(f"SAF manifest is missing {exc}") from exc


@dataclass
class SafCache:
    x: np.ndarray
    layer_inputs: list
    pre_acts: list
    f_c: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    blocks: list
    attention: list = field(repr=False)
    params: SafParameters = field(repr=False)
    shape: tuple = ()


def attention_blocks(n, chunk=None):
    """Contiguous ``(start, stop)`` row blocks; one block when ``chunk`` is None or >= n."""
    if chunk is None or chunk >= n:
        return [(0, n)] if n else []
    if chunk < 1:
        raise ValueError("attention chunk size must be >= 1")
    return [(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def _softmax_rows(s):
    s -= s.max(axis=1, keepdims=True)
    np.exp(s, out=s)
    s /= s.sum(axis=1, keepdims=True)
    return s


def _finite(stage, arr):
    if not np.all(np.isfinite(arr)):
        raise NumericError(stage)


def saf_forward(f_kiv, f_iv, params, chunk=None, keep_cache=True):
    """Run the SAF block; returns ``(F_fusion, cache)``.

    ``cache`` is None when ``keep_cache`` is False, which skips storing the
    attention matrices.
    """
    f_kiv = np.asarray(f_kiv, dtype=np.float64)
    f_iv = np.asarray(f_iv, dtype=np.float64)
    n, k, c = f_kiv.shape
    if f_iv.shape != (n, c):
        raise ValueError(f"F_IV must be ({n}, {c}), got {f_iv.shape}")
    if k != params.k or c != params.channels:
        raise ValueError(
            f"inputs have K={k}, C={c} but parameters expect K={params.k}, C={params.channels}"
        )
    x = f_kiv.reshape(n, k * c) + np.tile(f_iv, (1, k))
    layer_inputs, pre_acts = [], []
    h = x
    for w, b in zip(params.mlp_weights, params.mlp_biases):
        layer_inputs.append(h)
        z = h @ w + b
        pre_acts.append(z)
        h = np.maximum(z, 0.0)
    _finite("saf.mlp", h)
    f_c = h
    q = f_c @ params.w_q
    kk = f_c @ params.w_k
    v = f_c @ params.w_v
    scale = 1.0 / math.sqrt(c)
    out = np.empty((n, c), dtype=np.float64)
    blocks = attention_blocks(n, chunk)
    attn = []
    for s, e in blocks:
        a = _softmax_rows((q[s:e] @ kk[s:e].T) * scale)
        out[s:e] = a @ v[s:e]
        # a NaN anywhere in the block shows up in its output rows
        _finite("saf.attention", out[s:e])
        if keep_cache:
            attn.append(a)
    _finite("saf.output", out)
    if not keep_cache:
        return out, None
    cache = SafCache(x, layer_inputs, pre_acts, f_c, q, kk, v, blocks, attn, params, (n, k, c))
    return out, cache


def saf_backward(cache, grad_out):
    """Reverse-mode gradients of :func:`saf_forward`.

    Returns a dict keyed by parameter name (see ``SafParameters.named``)
    plus ``"F_KIV"`` and ``"F_IV"``.
    """
    if not isinstance(cache, SafCache):
        raise ValueError("saf_backward needs the cache returned by saf_forward")
    n, k, c = cache.shape
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != (n, c):
        raise ValueError(f"grad_out must be ({n}, {c}), got {g.shape}")
    p = cache.params
    scale = 1.0 / math.sqrt(c)
    dq = np.zeros_like(cache.q)
    dk = np.zeros_like(cache.k)
    dv = np.zeros_like(cache.v)
    for (s, e), a in zip(cache.blocks, cache.attention):
        go = g[s:e]
        dv[s:e] = a.T @ go
        da = go @ cache.v[s:e].T
        ds = a * (da - np.sum(da * a, axis=1, keepdims=True)) * scale
        dq[s:e] = ds @ cache.k[s:e]
        dk[s:e] = ds.T @ cache.q[s:e]
    grads = {
        "attn.q": cache.f_c.T @ dq,
        "attn.k": cache.f_c.T @ dk,
        "attn.v": cache.f_c.T @ dv,
    }
    dh = dq @ p.w_q.T + dk @ p.w_k.T + dv @ p.w_v.T
    for i in reversed(range(p.depth)):
        dz = dh * (cache.pre_acts[i] > 0)
        grads[f"mlp.{i}.weight"] = cache.layer_inputs[i].T @ dz
        grads[f"mlp.{i}.bias"] = dz.sum(axis=0)
        dh = dz @ p.mlp_weights[i].T
    dx = dh.reshape(n, k, c)
    grads["F_KIV"] = dx.copy()
    grads["F_IV"] = dx.sum(axis=1)
    return grads


def attention_matrix(cache):
    """Dense (N, N) attention matrix, zero outside the chunk blocks."""
    n = cache.shape[0]
    full = np.zeros((n, n))
    for (s, e), a in zip(cache.blocks, cache.attention):
        full[s:e, s:e] = a
    return full
