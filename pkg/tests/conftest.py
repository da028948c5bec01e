"""
Shared test fixtures: seeded random state, synthetic images, temp files and
a small rendered scene set.
"""

import os

import numpy as np
import pytest

# Set env vars BEFORE any package imports
os.environ.setdefault("NIOM_SEED", "0")
os.environ.setdefault("NIOM_LOG_LEVEL", "WARNING")
os.environ.pop("NIOM_PROJECTION_WEIGHTS", None)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def square_image():
    """256x256 RGB, centered white 64x64 square on black: four clean corners."""
    image = np.zeros((256, 256, 3))
    image[96:160, 96:160] = 1.0
    return image


@pytest.fixture
def chessboard_image():
    """192x192 RGB chessboard with 16 px cells (121 interior corners)."""
    yy, xx = np.mgrid[0:192, 0:192]
    board = ((xx // 16 + yy // 16) % 2).astype(np.float64)
    return np.repeat(board[..., None], 3, axis=2)


@pytest.fixture
def textured_image():
    """160x160 RGB smoothed noise: plenty of corners everywhere."""
    from scipy import ndimage

    noise = np.random.default_rng(7).random((160, 160))
    smooth = ndimage.gaussian_filter(noise, 2.0)
    smooth = (smooth - smooth.min()) / (smooth.max() - smooth.min())
    return np.repeat(smooth[..., None], 3, axis=2)


@pytest.fixture
def write_png(tmp_path):
    """Writes an array as PNG under tmp_path and returns the path."""
    from niom.formats import write_image

    def _write(name, image):
        path = str(tmp_path / name)
        write_image(path, image)
        return path

    return _write


@pytest.fixture(scope="session")
def scene_dir(tmp_path_factory):
    """Three rendered synthetic pairs with manifest.jsonl (built once per session)."""
    from niom.harness.scenes import build_benchmark

    out = tmp_path_factory.mktemp("scenes")
    build_benchmark(str(out), n_pairs=3, seed=0)
    return str(out)


@pytest.fixture(scope="session")
def scene_pairs(scene_dir):
    from niom.harness.manifest import load_manifest

    return load_manifest(os.path.join(scene_dir, "manifest.jsonl"))
