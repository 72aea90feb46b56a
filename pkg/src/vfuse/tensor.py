"""Dense float tensors: NPY v1.0 file IO and bilinear resampling.

Tensors are plain numpy arrays. Feature maps are laid out ``(W, H, C)``,
so a pixel coordinate ``(u, v)`` indexes ``fmap[u, v]``.
"""

import ast
import struct

import numpy as np

from . import kernels
from .errors import FormatError, UnsupportedFormatError

NPY_MAGIC = b"\x93NUMPY"
_SUPPORTED_DESCR = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}
_HEADER_KEYS = {"descr", "fortran_order", "shape"}


def as_tensor(data, dtype=None):
    """Validate ``data`` as a dense float tensor and return it C-contiguous.

    Every extent must be at least one and the dtype float32 or float64.
    """
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        raise TypeError(f"tensor dtype must be float32 or float64, got {arr.dtype}")
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(n < 1 for n in arr.shape):
        raise ValueError(f"tensor extents must all be >= 1, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def _parse_header(text):
    try:
        header = ast.literal_eval(text)
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"unparsable NPY header: {text!r}") from exc
    if not isinstance(header, dict) or set(header) != _HEADER_KEYS:
        raise FormatError(f"NPY header must hold exactly {sorted(_HEADER_KEYS)}")
    shape = header["shape"]
    if not isinstance(shape, tuple) or not all(isinstance(n, int) and n >= 0 for n in shape):
        raise FormatError(f"bad NPY shape {shape!r}")
    if header["fortran_order"] is not False:
        raise UnsupportedFormatError("fortran-ordered NPY files are not supported")
    descr = header["descr"]
    if descr not in _SUPPORTED_DESCR:
        raise UnsupportedFormatError(f"unsupported NPY dtype {descr!r}")
    return _SUPPORTED_DESCR[descr], shape


def npy_loads(buf):
    """Decode NPY v1.0 bytes into an array (see :func:`npy_read`)."""
    buf = bytes(buf)
    if len(buf) < 10 or buf[:6] != NPY_MAGIC:
        raise FormatError("missing NPY magic string")
    major, minor = buf[6], buf[7]
    if (major, minor) != (1, 0):
        raise UnsupportedFormatError(f"NPY version {major}.{minor} is not supported")
    (hlen,) = struct.unpack("<H", buf[8:10])
    if len(buf) < 10 + hlen:
        raise FormatError("truncated NPY header")
    try:
        text = buf[10:10 + hlen].decode("latin1")
    except UnicodeDecodeError as exc:  # pragma: no cover - latin1 decodes anything
        raise FormatError("NPY header is not latin1") from exc
    dtype, shape = _parse_header(text)
    payload = buf[10 + hlen:]
    count = int(np.prod(shape, dtype=np.int64))
    if len(payload) != count * dtype.itemsize:
        raise FormatError(
            f"NPY payload has {len(payload)} bytes, expected {count * dtype.itemsize}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def npy_dumps(arr):
    """Encode a float32/float64 array as NPY v1.0 bytes."""
    arr = np.asarray(arr)
    if arr.dtype == np.float32:
        descr = "<f4"
    elif arr.dtype == np.float64:
        descr = "<f8"
    else:
        raise TypeError(f"only float32/float64 arrays can be written, got {arr.dtype}")
    arr = np.ascontiguousarray(arr, dtype=_SUPPORTED_DESCR[descr])
    shape = tuple(int(n) for n in arr.shape)
    text = "{'descr': '%s', 'fortran_order': False, 'shape': %r, }" % (descr, shape)
    # pad so the payload starts on a 64-byte boundary, newline-terminated
    pad = -(10 + len(text) + 1) % 64
    header = (text + " " * pad + "\n").encode("latin1")
    return NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header)) + header + arr.tobytes()


def npy_read(path):
    """Read an NPY v1.0 file of little-endian float32 or float64 values.

    Raises ``FormatError`` for a malformed file and
    ``UnsupportedFormatError`` for fortran order or other dtypes.
    """
    with open(path, "rb") as fh:
        return npy_loads(fh.read())


def npy_write(arr, path):
    """Write ``arr`` as NPY v1.0, C-order, little-endian."""
    data = npy_dumps(arr)
    with open(path, "wb") as fh:
        fh.write(data)


def _resample_axis(f, n_out, axis):
    n_in = f.shape[axis]
    if n_out == n_in:
        return f
    if n_in == 1:
        return np.repeat(f, n_out, axis=axis)
    pos = np.arange(n_out, dtype=np.float64) * (n_in - 1) / (n_out - 1)
    i0 = np.minimum(np.floor(pos).astype(np.int64), n_in - 1)
    i1 = np.minimum(i0 + 1, n_in - 1)
    a = pos - i0
    shape = [1] * f.ndim
    shape[axis] = n_out
    a = a.reshape(shape)
    return np.take(f, i0, axis=axis) * (1.0 - a) + np.take(f, i1, axis=axis) * a


def bilinear_upsample(fmap, target_w, target_h):
    """Upsample a ``(w, h, C)`` feature map to ``(target_w, target_h, C)``.

    Uses the align-corners convention: output corner pixels coincide with
    input corner pixels, so any output pixel that lands on an input grid
    point reproduces that value exactly. Returns float64.
    """
    fmap = as_tensor(fmap)
    if fmap.ndim != 3:
        raise ValueError(f"feature map must be (W, H, C), got shape {fmap.shape}")
    w, h, _ = fmap.shape
    if target_w < w or target_h < h:
        raise ValueError(
            f"target ({target_w}, {target_h}) is smaller than source ({w}, {h})"
        )
    f = fmap.astype(np.float64)
    f = _resample_axis(f, int(target_w), 0)
    f = _resample_axis(f, int(target_h), 1)
    return np.ascontiguousarray(f)


def sanitize_coords(coords):
    """Float64 (N, 2) copy with NaN mapped to 0 and infinities to large finite values."""
    coords = np.asarray(coords, dtype=np.float64).reshape(-1, 2)
    return np.nan_to_num(coords, nan=0.0, posinf=1e18, neginf=-1e18)


def bilinear_sample(fmap, coords):
    """Bilinearly sample a ``(W, H, C)`` map at fractional ``(u, v)`` coordinates.

    Coordinates outside the map are clamped to the edge pixels. Returns an
    ``(N, C)`` float64 array.
    """
    fmap = as_tensor(fmap)
    f = np.ascontiguousarray(fmap, dtype=np.float64)
    zero = np.zeros((1, 2), dtype=np.float64)
    return kernels.bilinear_gather(f, sanitize_coords(coords), zero)[:, 0, :]
