import csv
import os
import subprocess
import sys

import numpy as np
import pytest

from vfuse import load_config, run_pipeline, scenegen
from vfuse.cli import main
from vfuse.voxelgrid import load_sparse


def _files(d):
    return {f: open(os.path.join(d, f), "rb").read() for f in sorted(os.listdir(d))}


def test_synth_is_byte_deterministic(tmp_path):
    args = ["synth", "--seed", "4", "--beams", "8", "--objects", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert _files(tmp_path / "a") == _files(tmp_path / "b")


def test_fuse_matches_api(tmp_path, scene_dir):
    out = tmp_path / "fuse"
    assert main(["fuse", "--scene", scene_dir, "--out", str(out), "--dump"]) == 0
    pts, calib, fmap, _, _ = scenegen.read_scene(scene_dir)
    res = run_pipeline(pts, calib, fmap, load_config())
    fb = load_sparse(out / "fb")
    assert np.array_equal(fb.indices, res.fb.output.indices)
    assert np.array_equal(fb.features, res.fb.output.features.astype(np.float32))
    assert np.array_equal(np.load(out / "scores.npy"), res.fb.scores.raw)
    mask = np.load(out / "fore_mask.npy")
    assert int(mask.sum()) == res.fb.split.alpha
    summary = (out / "summary.txt").read_text()
    assert f"alpha: {res.fb.split.alpha}" in summary


def test_fuse_empty_scene(tmp_path):
    scene_dir = tmp_path / "empty"
    spec = scenegen.SceneSpec(n_objects=0, beams=2)
    scene = scenegen.generate_scene(spec)
    scene.points = scene.points[:0]
    scenegen.write_scene(scene, scenegen.generate_feature_map(spec, 16), scene_dir)
    assert main(["fuse", "--scene", str(scene_dir), "--out", str(tmp_path / "o")]) == 0
    assert "n_out: 0" in (tmp_path / "o" / "summary.txt").read_text()


def test_project_and_stats(tmp_path, scene_dir, capsys):
    assert main(["project", "--scene", scene_dir, "--out", str(tmp_path / "p")]) == 0
    proj = np.load(tmp_path / "p" / "projection.npy")
    assert proj.shape[1] == 4
    assert main(["stats", "--scene", scene_dir, "--out", str(tmp_path / "s")]) == 0
    text = capsys.readouterr().out
    assert "occupancy_rate" in text and "fraction_below_180" in text
    rows = list(csv.reader(open(tmp_path / "s" / "occupancy.csv")))
    assert rows[0] == ["bin", "points", "hit_pixels", "occupancy_rate"] and len(rows) == 5


def _sweep(scene_dir, tmp_path, param, extra=()):
    path = tmp_path / f"{param}.csv"
    assert main(["sweep", "--scene", scene_dir, "--param", param, "--out", str(path), *extra]) == 0
    return list(csv.DictReader(open(path)))


def test_sweep_threshold(scene_dir, tmp_path):
    rows = _sweep(scene_dir, tmp_path, "T")
    assert [float(r["value"]) for r in rows] == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]
    alpha = [int(r["alpha"]) for r in rows]
    expanded = [int(r["expanded"]) for r in rows]
    assert all(a >= b for a, b in zip(alpha, alpha[1:]))
    assert all(a >= b for a, b in zip(expanded, expanded[1:]))
    assert all(int(r["alpha"]) + int(r["beta"]) == int(r["n_voxels"]) for r in rows)


def test_sweep_patch_sizes(scene_dir, tmp_path):
    rows = _sweep(scene_dir, tmp_path, "k_off")
    assert [r["value"] for r in rows] == ["9", "16", "25", "36"]
    assert [len(r["patch"].split()) ** 2 for r in rows] == [9, 16, 25, 36]


def test_sweep_stage(scene_dir, tmp_path):
    rows = _sweep(scene_dir, tmp_path, "stage", ["--values", "1,2"])
    assert [int(r["stride"]) for r in rows] == [1, 2]
    assert int(rows[1]["n_voxels"]) <= int(rows[0]["n_voxels"])


def test_gradcheck_exit_codes(capsys):
    assert main(["gradcheck", "--n", "6", "--k", "4", "--c", "4"]) == 0
    assert "result: PASS" in capsys.readouterr().out
    assert main(["gradcheck", "--n", "6", "--k", "4", "--c", "4", "--corrupt", "mlp.0.weight"]) == 4


@pytest.mark.parametrize("argv", [
    ["sweep", "--scene", ".", "--param", "k_off", "--values", "10"],
    ["fuse", "--scene", ".", "--out", "x", "--set", "fb.threshold=2"],
    ["fuse", "--scene", ".", "--out", "x", "--set", "bogus"],
])
def test_bad_arguments_exit_2(argv):
    assert main(argv) == 2


def test_unknown_option_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["fuse", "--nope"])
    assert exc.value.code == 2


def test_io_errors_exit_3(tmp_path):
    assert main(["fuse", "--scene", str(tmp_path / "missing"), "--out", str(tmp_path / "o")]) == 3
    bad = tmp_path / "bad"
    bad.mkdir()
    (bad / "velodyne.bin").write_bytes(b"\x00" * 10)
    assert main(["stats", "--scene", str(bad)]) == 3


def test_console_script_installed():
    out = subprocess.run([sys.executable, "-m", "vfuse.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "sweep" in out.stdout
