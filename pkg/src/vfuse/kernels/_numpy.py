"""Pure-numpy implementations of the hot kernels.

Each function here has a twin with the same name and signature in
``_numba``. Both accumulate in the same order so their outputs agree
bit for bit; the test suite checks that.
"""

import numpy as np


def segment_mean(keys, values, max_points):
    """Group rows by integer key and average the first ``max_points`` of each group.

    Rows are taken in input order within a group. Returns the sorted unique
    keys, the per-group means and the number of rows that went into each mean.
    """
    m = keys.shape[0]
    f = values.shape[1]
    if m == 0:
        return (np.empty(0, np.int64), np.empty((0, f), np.float64),
                np.empty(0, np.int64))
    order = np.argsort(keys, kind="stable")
    sk = keys[order]
    new_group = np.empty(m, dtype=bool)
    new_group[0] = True
    np.not_equal(sk[1:], sk[:-1], out=new_group[1:])
    starts = np.flatnonzero(new_group)
    group = np.cumsum(new_group) - 1
    rank = np.arange(m) - starts[group]
    keep = rank < max_points

    ng = starts.shape[0]
    sums = np.zeros((ng, f), dtype=np.float64)
    # add.at is unbuffered and sums in index order, matching the loop kernel
    np.add.at(sums, group[keep], values[order[keep]])
    counts = np.bincount(group[keep], minlength=ng).astype(np.int64)
    return sk[starts].copy(), sums / counts[:, None], counts


def bilinear_gather(fmap, coords, offsets):
    """Sample ``fmap`` (W, H, C) at every ``coords[i] + offsets[k]``.

    Coordinates are clamped to the pixel rectangle. Returns (N, K, C) float64.
    """
    w, h, c = fmap.shape
    x = coords[:, None, 0] + offsets[None, :, 0]
    y = coords[:, None, 1] + offsets[None, :, 1]
    x = np.minimum(np.maximum(x, 0.0), w - 1.0)
    y = np.minimum(np.maximum(y, 0.0), h - 1.0)
    x0 = np.floor(x).astype(np.int64)
    y0 = np.floor(y).astype(np.int64)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    ax = (x - x0)[..., None]
    ay = (y - y0)[..., None]
    bx = 1.0 - ax
    by = 1.0 - ay
    top = fmap[x0, y0] * bx + fmap[x1, y0] * ax
    bot = fmap[x0, y1] * bx + fmap[x1, y1] * ax
    return top * by + bot * ay


def neighbor_table(sorted_keys, perm, indices, offsets, extents):
    """Row id of ``indices[i] + offsets[k]`` in the sparse set, or -1.

    ``sorted_keys`` are the linearized indices in ascending order and
    ``perm[j]`` is the row holding ``sorted_keys[j]``.
    """
    n = indices.shape[0]
    k = offsets.shape[0]
    if n == 0 or k == 0 or sorted_keys.shape[0] == 0:
        return np.full((n, k), -1, dtype=np.int64)
    tgt = indices[:, None, :] + offsets[None, :, :]
    inside = np.all((tgt >= 0) & (tgt < extents), axis=2)
    key = (tgt[..., 0] * extents[1] + tgt[..., 1]) * extents[2] + tgt[..., 2]
    pos = np.searchsorted(sorted_keys, key)
    pos = np.minimum(pos, sorted_keys.shape[0] - 1)
    found = inside & (sorted_keys[pos] == key)
    return np.where(found, perm[pos], -1).astype(np.int64)


def mark_pixels(u, v, width, height):
    """Boolean (W, H) mask with True at every (u[i], v[i])."""
    hit = np.zeros((width, height), dtype=bool)
    hit[u, v] = True
    return hit
