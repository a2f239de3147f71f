"""
Pytest configuration and fixtures.
"""

import numpy as np
import pytest

from base_model_class import PointSet
from geometry import get_model_class


def pytest_addoption(parser):
    parser.addoption(
        "--runslow", action="store_true", default=False, help="run statistical benchmark tests"
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: statistical benchmark, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def line_class():
    return get_model_class("line")


@pytest.fixture
def circle_class():
    return get_model_class("circle")


@pytest.fixture
def parabola_class():
    return get_model_class("parabola")


@pytest.fixture
def noise_free_line():
    """20 points on y = 0.5 x + 0.1."""
    x = np.linspace(-0.5, 0.5, 20)
    return PointSet(points=np.column_stack([x, 0.5 * x + 0.1]), gt_labels=np.ones(20, dtype=int))


@pytest.fixture
def circle_and_segments():
    """One circle and two separated collinear segments, small noise."""
    rng = np.random.default_rng(3)
    theta = rng.uniform(0, 2 * np.pi, 40)
    circle = np.column_stack([-0.25 + 0.2 * np.cos(theta), 0.2 * np.sin(theta)])
    circle += rng.normal(0, 0.002, circle.shape)
    left = np.column_stack([np.linspace(0.1, 0.2, 20), np.full(20, 0.3)])
    right = np.column_stack([np.linspace(0.35, 0.45, 20), np.full(20, -0.3)])
    left[:, 1] += rng.normal(0, 0.002, 20)
    right[:, 1] += rng.normal(0, 0.002, 20)
    points = np.concatenate([circle, left, right])
    labels = np.repeat([1, 2, 3], [40, 20, 20])
    return PointSet(points=points, gt_labels=labels)
