"""
Shared fixtures for the test suite
"""

import logging
import sys
from pathlib import Path

import numpy as np
import pytest

# Add repository root to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from forward import FrequencySchedule, Measurements, spiral_schedule  # noqa: E402
from geometry import Curve, SparseMeasure, TimeGrid  # noqa: E402
from problem import Problem, synthesize  # noqa: E402


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the experiment-scale acceptance tests')


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: experiment-scale run, needs --runslow')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def restore_root_logger():
    """Undo handler and level changes made by setup_logging"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        root.removeHandler(handler)
        if handler not in handlers:
            handler.close()
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def grid10():
    return TimeGrid(10)


@pytest.fixture
def flat_schedule(grid10):
    """Zero frequency only: the kernel is chi(x1) chi(x2)"""
    return FrequencySchedule.constant([[0.0, 0.0]], grid10.T)


def static_problem(schedule, point=(0.5, 0.5), intensity=2.0, alpha=0.1, beta=0.1):
    """Noiseless data of one static source"""
    grid = TimeGrid(schedule.T)
    truth = SparseMeasure.from_intensities(alpha, beta, [intensity], [Curve.constant(point, grid)])
    return Problem(grid, schedule, synthesize(truth, schedule), alpha, beta), truth


@pytest.fixture
def flat_problem(flat_schedule):
    problem, _ = static_problem(flat_schedule)
    return problem


@pytest.fixture
def spiral_source_problem():
    """Static source at (0.4, 0.6) seen through a 20-point spiral, T = 10"""
    problem, _ = static_problem(spiral_schedule(20, 10), point=(0.4, 0.6), intensity=1.0)
    return problem


def random_problem(rng, T=4, n=6, alpha=0.2, beta=0.3):
    """Random frequencies and random complex data"""
    schedule = FrequencySchedule(tuple(rng.uniform(-4, 4, size=(n, 2)) for _ in range(T + 1)))
    data = Measurements([rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(T + 1)])
    return Problem(TimeGrid(T), schedule, data, alpha, beta)


def random_curve(rng, T, low=0.15, high=0.85):
    return Curve(rng.uniform(low, high, size=(T + 1, 2)))
