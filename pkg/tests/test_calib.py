import numpy as np
import pytest

from oracles import project_chain
from vfuse.calib import (AugmentationRecord, CalibrationMatrix, KittiCalibration,
                         apply_augmentation, format_kitti_calib, invert_augmentation,
                         parse_kitti_calib, parse_kitti_calib_text, project_points,
                         read_velodyne_bin, write_kitti_calib, write_velodyne_bin)
from vfuse.errors import CalibParseError, FormatError
from vfuse.scenegen import SceneSpec, make_calibration


def test_identity_chain():
    cal = CalibrationMatrix.from_intrinsics(1.0, 1.0, 0.0, 0.0)
    px, depth, valid = project_points([[2.0, 3.0, 1.0]], cal)
    assert np.array_equal(px, [[2.0, 3.0]])
    assert depth[0] == 1.0 and valid[0]


def test_focal_and_principal_point():
    cal = CalibrationMatrix.from_intrinsics(2.0, 2.0, 1.0, 1.0, image_size=(10, 10))
    px, _, valid = project_points([[3.0, 4.0, 2.0]], cal)
    assert np.array_equal(px, [[4.0, 5.0]])
    assert valid[0]


def test_scale_factor_after_divide():
    cal = CalibrationMatrix.from_intrinsics(2.0, 2.0, 1.0, 1.0, h=0.25)
    px, _, _ = project_points([[3.0, 4.0, 2.0]], cal)
    assert np.array_equal(px, [[1.0, 1.25]])


def test_behind_camera_and_image_bounds():
    cal = CalibrationMatrix.from_intrinsics(1.0, 1.0, 0.0, 0.0, image_size=(4, 4))
    _, depth, valid = project_points([[1.0, 1.0, -1.0], [4.0, 1.0, 1.0], [3.99, 0.0, 1.0]], cal)
    assert depth[0] < 0
    assert valid.tolist() == [False, False, True]


def test_rejects_bad_rotation():
    with pytest.raises(ValueError):
        CalibrationMatrix(np.eye(3), np.diag([1.0, 2.0, 1.0]), np.zeros(3))


def test_kitti_composite_equals_chain():
    cal = make_calibration(SceneSpec())
    rng = np.random.default_rng(4)
    pts = np.column_stack([rng.uniform(2, 70, 500), rng.uniform(-30, 30, 500), rng.uniform(-3, 2, 500)])
    px, depth, _ = project_points(pts, cal)
    want, wdepth = project_chain(pts, cal.P2, cal.R0_rect, cal.Tr_velo_to_cam)
    assert np.max(np.abs(px - want) / np.abs(want).clip(1.0)) < 1e-12
    assert np.allclose(depth, wdepth, rtol=1e-12)


def test_calib_text_roundtrip(tmp_path):
    cal = make_calibration(SceneSpec())
    path = tmp_path / "calib.txt"
    write_kitti_calib(cal, path)
    back = parse_kitti_calib(path)
    assert np.array_equal(back.matrix(), cal.matrix())
    assert format_kitti_calib(back) == path.read_text()


def test_extra_keys_kept():
    text = format_kitti_calib(make_calibration(SceneSpec())) + "Tr_imu_to_velo: " + " ".join(["0"] * 12)
    cal = parse_kitti_calib_text(text)
    assert len(cal.extra["Tr_imu_to_velo"]) == 12


def test_missing_key_named():
    text = "P2: " + " ".join(["1"] * 12) + "\nR0_rect: 1 0 0 0 1 0 0 0 1\n"
    with pytest.raises(CalibParseError, match="Tr_velo_to_cam"):
        parse_kitti_calib_text(text)


def test_wrong_value_count():
    text = "P2: 1 2 3\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: " + " ".join(["0"] * 12)
    with pytest.raises(CalibParseError, match="P2"):
        parse_kitti_calib_text(text)


def test_velodyne_roundtrip(tmp_path):
    pts = np.random.default_rng(0).normal(size=(100, 4)).astype(np.float32)
    write_velodyne_bin(pts, tmp_path / "v.bin")
    assert np.array_equal(read_velodyne_bin(tmp_path / "v.bin"), pts)


def test_velodyne_bad_size(tmp_path):
    (tmp_path / "v.bin").write_bytes(b"\x00" * 20)
    with pytest.raises(FormatError):
        read_velodyne_bin(tmp_path / "v.bin")


def test_augmentation_inverts():
    rng = np.random.default_rng(5)
    pts = rng.uniform(-50, 50, size=(1000, 3))
    rec = AugmentationRecord((("flip", 0), ("rotate_z", 0.7), ("scale", 1.05), ("rotate_z", -0.2)))
    back = invert_augmentation(apply_augmentation(pts, rec), rec)
    assert np.max(np.abs(back - pts)) < 1e-9


def test_augmentation_validates():
    with pytest.raises(ValueError):
        AugmentationRecord((("shear", 1.0),))
    with pytest.raises(ValueError):
        AugmentationRecord((("scale", 0.0),))


def test_kitti_requires_finite():
    with pytest.raises(ValueError):
        KittiCalibration(np.full((3, 4), np.nan), np.eye(3), np.zeros((3, 4)))
