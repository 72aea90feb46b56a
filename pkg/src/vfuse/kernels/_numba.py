"""Numba-compiled kernels; same contracts as ``_numpy``."""

import numpy as np
from numba import njit


@njit(cache=True)
def segment_mean(keys, values, max_points):
    m = keys.shape[0]
    f = values.shape[1]
    order = np.argsort(keys, kind="mergesort")
    ng = 0
    for j in range(m):
        if j == 0 or keys[order[j]] != keys[order[j - 1]]:
            ng += 1
    uniq = np.empty(ng, np.int64)
    sums = np.zeros((ng, f), np.float64)
    counts = np.zeros(ng, np.int64)
    g = -1
    for j in range(m):
        r = order[j]
        if j == 0 or keys[r] != keys[order[j - 1]]:
            g += 1
            uniq[g] = keys[r]
        if counts[g] < max_points:
            for c in range(f):
                sums[g, c] += values[r, c]
            counts[g] += 1
    means = np.empty((ng, f), np.float64)
    for g in range(ng):
        for c in range(f):
            means[g, c] = sums[g, c] / counts[g]
    return uniq, means, counts


@njit(cache=True)
def bilinear_gather(fmap, coords, offsets):
    w, h, c = fmap.shape
    n = coords.shape[0]
    k = offsets.shape[0]
    out = np.empty((n, k, c), np.float64)
    for i in range(n):
        for j in range(k):
            x = coords[i, 0] + offsets[j, 0]
            y = coords[i, 1] + offsets[j, 1]
            x = min(max(x, 0.0), w - 1.0)
            y = min(max(y, 0.0), h - 1.0)
            x0 = int(np.floor(x))
            y0 = int(np.floor(y))
            x1 = min(x0 + 1, w - 1)
            y1 = min(y0 + 1, h - 1)
            ax = x - x0
            ay = y - y0
            bx = 1.0 - ax
            by = 1.0 - ay
            for ch in range(c):
                top = fmap[x0, y0, ch] * bx + fmap[x1, y0, ch] * ax
                bot = fmap[x0, y1, ch] * bx + fmap[x1, y1, ch] * ax
                out[i, j, ch] = top * by + bot * ay
    return out


@njit(cache=True)
def neighbor_table(sorted_keys, perm, indices, offsets, extents):
    n = indices.shape[0]
    k = offsets.shape[0]
    m = sorted_keys.shape[0]
    out = np.full((n, k), -1, np.int64)
    for i in range(n):
        for j in range(k):
            a = indices[i, 0] + offsets[j, 0]
            b = indices[i, 1] + offsets[j, 1]
            c = indices[i, 2] + offsets[j, 2]
            if a < 0 or b < 0 or c < 0:
                continue
            if a >= extents[0] or b >= extents[1] or c >= extents[2]:
                continue
            key = (a * extents[1] + b) * extents[2] + c
            lo = 0
            hi = m
            while lo < hi:
                mid = (lo + hi) >> 1
                if sorted_keys[mid] < key:
                    lo = mid + 1
                else:
                    hi = mid
            if lo < m and sorted_keys[lo] == key:
                out[i, j] = perm[lo]
    return out


@njit(cache=True)
def mark_pixels(u, v, width, height):
    hit = np.zeros((width, height), np.bool_)
    for i in range(u.shape[0]):
        hit[u[i], v[i]] = True
    return hit
