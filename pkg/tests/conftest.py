import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from vfuse import scenegen  # noqa: E402


@pytest.fixture(scope="session")
def small_scene():
    """A light 16-beam scene with quarter-resolution features (C=16)."""
    spec = scenegen.SceneSpec(seed=3, beams=16, azimuth_res=0.4, n_objects=5)
    return scenegen.generate_scene(spec), scenegen.generate_feature_map(spec, 16)


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory, small_scene):
    scene, fmap = small_scene
    out = tmp_path_factory.mktemp("scene")
    scenegen.write_scene(scene, fmap, str(out))
    return str(out)


ACCEPTANCE_LINES = []


def record(number, title, ok, detail=""):
    """Log one acceptance line; the caller still asserts ``ok``."""
    line = f"{'PASS' if ok else 'FAIL'}  [{number:>2}] {title}" + (f"  ({detail})" if detail else "")
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
