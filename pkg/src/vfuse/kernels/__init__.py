"""Hot loops with a numba backend and a pure-numpy fallback.

The backend is picked once at import time. Set ``VFUSE_DISABLE_NUMBA=1``
to force the numpy path; it is also used when numba cannot be imported.
Both modules stay importable so the benchmark can time them side by side.
"""

import os

from . import _numpy as numpy_backend

_disabled = os.environ.get("VFUSE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

numba_backend = None
if not _disabled:
    try:
        from . import _numba as numba_backend
    except ImportError:  # pragma: no cover - numba is a hard dependency in CI
        numba_backend = None

if numba_backend is not None:
    BACKEND = "numba"
    segment_mean = numba_backend.segment_mean
    bilinear_gather = numba_backend.bilinear_gather
    neighbor_table = numba_backend.neighbor_table
    mark_pixels = numba_backend.mark_pixels
else:
    BACKEND = "numpy"
    segment_mean = numpy_backend.segment_mean
    bilinear_gather = numpy_backend.bilinear_gather
    neighbor_table = numpy_backend.neighbor_table
    mark_pixels = numpy_backend.mark_pixels

__all__ = [
    "BACKEND",
    "bilinear_gather",
    "mark_pixels",
    "neighbor_table",
    "numba_backend",
    "numpy_backend",
    "segment_mean",
]
