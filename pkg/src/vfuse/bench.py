"""Time the numba kernels against their numpy fallbacks."""

import time

import numpy as np

from . import kernels


def _time(fn, args, repeat):
    fn(*args)  # warm-up; triggers JIT compilation on the numba side
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(n=20000, seed=0):
    rng = np.random.default_rng(seed)
    ext = np.array([1408, 1600, 40], dtype=np.int64)
    keys = rng.integers(0, n // 2, size=5 * n).astype(np.int64)
    vals = rng.normal(size=(5 * n, 4))
    fmap = rng.normal(size=(1242, 375, 16))
    coords = rng.uniform(0, [1241, 374], size=(n, 2))
    pattern = np.array([(a, b) for a in (-1, 0, 1) for b in (-1, 0, 1)], dtype=np.float64)
    idx = np.unique(rng.integers(0, [200, 200, 40], size=(n, 3)), axis=0).astype(np.int64)
    lin = (idx[:, 0] * ext[1] + idx[:, 1]) * ext[2] + idx[:, 2]
    perm = np.argsort(lin, kind="stable").astype(np.int64)
    offs = np.array([(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1)],
                    dtype=np.int64)
    u = rng.integers(0, 1242, size=5 * n)
    v = rng.integers(0, 375, size=5 * n)
    return {
        "segment_mean": (keys, vals, 5),
        "bilinear_gather": (fmap, coords, pattern),
        "neighbor_table": (np.ascontiguousarray(lin[perm]), perm, idx, offs, ext),
        "mark_pixels": (u, v, 1242, 375),
    }


def run_benchmark(n=20000, repeat=3, seed=0):
    """Rows of ``(kernel, numpy seconds, numba seconds or None, outputs equal)``."""
    rows = []
    for name, args in kernel_cases(n, seed).items():
        np_fn = getattr(kernels.numpy_backend, name)
        t_np = _time(np_fn, args, repeat)
        t_nb = None
        same = None
        if kernels.numba_backend is not None:
            nb_fn = getattr(kernels.numba_backend, name)
            t_nb = _time(nb_fn, args, repeat)
            a, b = np_fn(*args), nb_fn(*args)
            a = a if isinstance(a, tuple) else (a,)
            b = b if isinstance(b, tuple) else (b,)
            same = all(np.array_equal(x, y) for x, y in zip(a, b))
        rows.append((name, t_np, t_nb, same))
    return rows


def format_rows(rows):
    lines = [f"{'kernel':<16} {'numpy_s':>10} {'numba_s':>10} {'speedup':>8} {'equal':>6}"]
    for name, t_np, t_nb, same in rows:
        if t_nb is None:
            lines.append(f"{name:<16} {t_np:10.5f} {'n/a':>10} {'n/a':>8} {'n/a':>6}")
        else:
            lines.append(f"{name:<16} {t_np:10.5f} {t_nb:10.5f} {t_np / t_nb:8.2f} {str(same):>6}")
    return "\n".join(lines) + "\n"
