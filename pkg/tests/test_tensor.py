import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bilinear_scalar
from vfuse.errors import FormatError, UnsupportedFormatError
from vfuse.tensor import (as_tensor, bilinear_sample, bilinear_upsample, npy_dumps, npy_loads,
                          npy_read, npy_write)


def _header(descr="<f8", fortran=False, shape=(2,)):
    text = "{'descr': '%s', 'fortran_order': %s, 'shape': %r, }" % (descr, fortran, shape)
    text += " " * (-(10 + len(text) + 1) % 64) + "\n"
    return b"\x93NUMPY\x01\x00" + struct.pack("<H", len(text)) + text.encode("latin1")


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_npy_roundtrip_seeded(tmp_path, dtype):
    rng = np.random.default_rng(7)
    for i in range(100):
        ndim = int(rng.integers(1, 5))
        shape = tuple(int(n) for n in rng.integers(1, 6, size=ndim))
        arr = rng.normal(size=shape).astype(dtype)
        path = tmp_path / f"a{i}.npy"
        npy_write(arr, path)
        back = npy_read(path)
        assert back.dtype == arr.dtype and back.shape == arr.shape
        assert np.array_equal(back, arr)


def test_npy_readable_by_numpy(tmp_path):
    arr = np.arange(24, dtype=np.float64).reshape(2, 3, 4) / 7.0
    npy_write(arr, tmp_path / "x.npy")
    assert np.array_equal(np.load(tmp_path / "x.npy"), arr)


def test_reads_numpy_written_file():
    arr = np.linspace(-1, 1, 15, dtype=np.float32).reshape(3, 5)
    buf = io.BytesIO()
    np.save(buf, arr)
    assert np.array_equal(npy_loads(buf.getvalue()), arr)


def test_header_aligned_to_64():
    data = npy_dumps(np.zeros((3, 3)))
    (hlen,) = struct.unpack("<H", data[8:10])
    assert (10 + hlen) % 64 == 0
    assert data[10 + hlen - 1:10 + hlen] == b"\n"


def test_zero_extent_array_roundtrip():
    assert npy_loads(npy_dumps(np.zeros((0, 3)))).shape == (0, 3)


def test_bad_magic():
    with pytest.raises(FormatError):
        npy_loads(b"NOTNUMPY" + b"\x00" * 40)


def test_unsupported_variants():
    with pytest.raises(UnsupportedFormatError):
        npy_loads(_header(fortran=True) + b"\x00" * 16)
    with pytest.raises(UnsupportedFormatError):
        npy_loads(_header(descr="<i4") + b"\x00" * 8)
    with pytest.raises(UnsupportedFormatError):
        npy_loads(b"\x93NUMPY\x02\x00" + b"\x00" * 60)


def test_truncated_payload():
    with pytest.raises(FormatError):
        npy_loads(_header(shape=(4,)) + b"\x00" * 8)


def test_as_tensor_rejects():
    with pytest.raises(ValueError):
        as_tensor(np.zeros((0, 2)))
    with pytest.raises(TypeError):
        as_tensor(np.zeros(3, dtype=np.int32))


def test_upsample_corners_and_grid_points():
    rng = np.random.default_rng(1)
    f = rng.normal(size=(5, 4, 2))
    # (W - 1) is a multiple of (w - 1), so every source pixel has an output twin
    up = bilinear_upsample(f, 17, 10)
    assert up.shape == (17, 10, 2)
    assert np.array_equal(up[::4, ::3], f)


def test_upsample_rejects_shrinking():
    with pytest.raises(ValueError):
        bilinear_upsample(np.zeros((4, 4, 1)), 3, 8)


def test_sample_small_example():
    f = np.array([[[0.0], [1.0]], [[2.0], [3.0]]])
    # f[u, v] = 2u + v
    assert bilinear_sample(f, [[0.5, 0.5]])[0, 0] == 1.5
    assert bilinear_sample(f, [[0.25, 1.0]])[0, 0] == 1.5
    # clamped outside the map
    assert bilinear_sample(f, [[-3.0, 9.0]])[0, 0] == 1.0


def test_sample_nan_coordinates_are_finite():
    f = np.ones((3, 3, 1))
    out = bilinear_sample(f, [[np.nan, np.inf]])
    assert np.all(np.isfinite(out))


def test_sample_matches_scalar_oracle():
    rng = np.random.default_rng(2)
    f = rng.normal(size=(9, 7, 3))
    coords = rng.uniform(-2, 11, size=(200, 2))
    got = bilinear_sample(f, coords)
    want = np.array([[bilinear_scalar(f, u, v, c) for c in range(3)] for u, v in coords])
    assert np.array_equal(got, want)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5),
       w=st.integers(2, 8), h=st.integers(2, 8), seed=st.integers(0, 2**16))
def test_affine_fields_are_exact(a, b, c, w, h, seed):
    u, v = np.meshgrid(np.arange(w), np.arange(h), indexing="ij")
    f = (a * u + b * v + c)[:, :, None]
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(0, w - 1, 50), rng.uniform(0, h - 1, 50)])
    got = bilinear_sample(f, pts)[:, 0]
    assert np.max(np.abs(got - (a * pts[:, 0] + b * pts[:, 1] + c))) < 1e-9
