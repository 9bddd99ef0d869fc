import functools

import numpy as np
import pytest

from voxelforge import _accel


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run a test once per kernel backend."""
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setenv("VOXELFORGE_NUMBA", "1" if request.param == "numba" else "0")
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@functools.lru_cache(maxsize=None)
def rendered(seed, difficulty=0.8):
    from voxelforge.data.scene import generate_scene, render

    scene = generate_scene(seed, difficulty)
    return scene, render(scene)


@functools.lru_cache(maxsize=None)
def prepared(seed, difficulty=0.8):
    from voxelforge.pipeline import prepare_sample

    return prepare_sample(rendered(seed, difficulty)[1])


def poster_seed(start=0):
    """First seed at or after ``start`` whose scene carries a poster."""
    from voxelforge.data.scene import generate_scene

    s = start
    while not generate_scene(s, 0.8).decals:
        s += 1
    return s
