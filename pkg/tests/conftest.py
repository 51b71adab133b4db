"""
Shared fixtures: small synthetic scenes written in the raw + header format
"""
import logging

import numpy as np
import pytest

from gwcl.services.hsi_data import write_cube, write_labels


def two_class_scene(height=20, width=20, bands=8, noise=0.05, seed=0):
    """
    Left half class 1, right half class 2, spectra separated by their mean
    shape; returns ((bands, M, N) cube, (M, N) labels)
    """
    rng = np.random.default_rng(seed)
    labels = np.ones((height, width), dtype=np.int64)
    labels[:, width // 2:] = 2
    means = np.stack([np.linspace(0.0, 1.0, bands), np.linspace(1.0, 0.0, bands)]) * 10.0
    cube = means[labels - 1].transpose(2, 0, 1) + rng.normal(0.0, noise, (bands, height, width))
    return cube, labels


def four_class_scene(height=24, width=24, bands=10, noise=0.6, seed=0):
    """Four quadrants with overlapping spectra (class means closer than the noise)"""
    rng = np.random.default_rng(seed)
    labels = np.ones((height, width), dtype=np.int64)
    labels[: height // 2, width // 2:] = 2
    labels[height // 2:, : width // 2] = 3
    labels[height // 2:, width // 2:] = 4
    base = np.linspace(0.0, 1.0, bands)
    means = np.stack([base, base[::-1], np.sin(3 * base), np.cos(3 * base)])
    cube = means[labels - 1].transpose(2, 0, 1) + rng.normal(0.0, noise, (bands, height, width))
    return cube, labels


@pytest.fixture(autouse=True)
def _reset_logging():
    """The CLI installs a stream handler; drop it so it never outlives a captured stream"""
    yield
    logger = logging.getLogger("gwcl")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.setLevel(logging.NOTSET)


@pytest.fixture
def scene_files(tmp_path):
    """Two-class 20x20 scene on disk; returns (cube stem, labels stem)"""
    cube, labels = two_class_scene()
    cube_stem = tmp_path / "scene"
    labels_stem = tmp_path / "scene_gt"
    write_cube(cube_stem, cube, dtype="f64")
    write_labels(labels_stem, labels)
    return cube_stem, labels_stem


@pytest.fixture
def random_points():
    rng = np.random.default_rng(7)
    return rng.random((500, 22))
