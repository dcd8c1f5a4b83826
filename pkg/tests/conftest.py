"""
Shared fixtures: small hand-built games with known outcomes.

Rows are written with ``None`` on the diagonal; agents A..F are 0..5.
"""

import os

import numpy as np
import pytest

from teamform.model import Game

DATA_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "data")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False,
                     help="run full-scale statistical reproductions")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-scale run, skipped unless --runslow is given")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


def make_game(rows, k_min, k_max=None):
    matrix = [[0.0 if v is None else float(v) for v in row] for row in rows]
    return Game(np.array(matrix), k_min, k_max if k_max is not None else k_min)


x = None

MAXIMIN_ROWS = [
    [x, 1, 0, 2, 3, 2],
    [2, x, 1, 0, 3, 2],
    [2, 2, x, 1, 0, 3],
    [1, 2, 2, x, 2, 1],
    [0, 2, 3, 1, x, 2],
    [2, 1, 2, 2, 1, x],
]

ENVY_ROWS = [
    [x, 0, 1, 2, 4, 8],
    [8, x, 4, 2, 1, 0],
    [8, 0, x, 4, 2, 1],
    [8, 1, 0, x, 4, 2],
    [8, 2, 1, 0, x, 4],
    [8, 4, 2, 1, 0, x],
]

HBS_EFFICIENT_ROWS = [
    [x, 1, 8, 0, 6, 4],
    [1, x, 10, 0, 5, 3],
    [0, 8, x, 5, 4, 2],
    [0, 8, 5, x, 4, 2],
    [8, 0, 5, 4, x, 2],
    [8, 0, 5, 4, 2, x],
]

# Shared by the HBS and OPOP incentive examples; row A' is A's misreport
DRAFT_INCENTIVE_ROWS = [
    [x, 5.0, 4.9, 7.0, 0.2, 0.0],
    [0, x, 1.1, 1.6, 1.2, 1.3],
    [0, 1.1, x, 1.6, 1.2, 1.3],
    [0, 1.1, 1.6, x, 1.2, 1.3],
    [0, 1.1, 1.6, 1.2, x, 1.3],
    [0, 1.1, 1.6, 1.2, 1.3, x],
]
DRAFT_INCENTIVE_MISREPORT = [0.0, 5.0, 6.0, 7.0, 0.2, 0.0]

OPOP_EFFICIENT_ROWS = [
    [x, 2, 10, 9, 6, 0],
    [0, x, 10, 9, 2, 6],
    [0, 10, x, 2, 6, 9],
    [10, 0, 2, x, 6, 9],
    [10, 0, 2, 6, x, 9],
    [0, 10, 2, 6, 9, x],
]

CYCLE_ROWS = [
    [x, 2, 1, 0],
    [0, x, 2, 1],
    [1, 0, x, 2],
    [2, 1, 0, x],
]


@pytest.fixture
def maximin_game():
    return make_game(MAXIMIN_ROWS, 3)


@pytest.fixture
def envy_game():
    return make_game(ENVY_ROWS, 3)


@pytest.fixture
def hbs_efficient_game():
    return make_game(HBS_EFFICIENT_ROWS, 3)


@pytest.fixture
def draft_incentive_game():
    return make_game(DRAFT_INCENTIVE_ROWS, 3)


@pytest.fixture
def draft_misreport():
    return list(DRAFT_INCENTIVE_MISREPORT)


@pytest.fixture
def opop_efficient_game():
    return make_game(OPOP_EFFICIENT_ROWS, 3)


@pytest.fixture
def cycle_game():
    return make_game(CYCLE_ROWS, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_game(rng, n, k_min, k_max=None, integer=False):
    """Random non-negative game; integer values make ties likely."""
    if integer:
        matrix = rng.integers(0, 5, size=(n, n)).astype(float)
    else:
        matrix = rng.uniform(0.0, 10.0, size=(n, n))
    return Game(matrix, k_min, k_max if k_max is not None else k_min)


def data_file(name):
    """Path to a bundled data file, skipping the test when it is absent."""
    path = os.path.join(DATA_DIR, name)
    if not os.path.exists(path):
        pytest.skip(f"{name} is not present in data/")
    return path
