import math

import numpy as np
import pytest
from scipy.stats import special_ortho_group

from manifold_dp import BallSpec, Point, sphere_manifold, spdm_manifold

NORTH = np.array([0.0, 0.0, 1.0])


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


@pytest.fixture
def s2():
    return sphere_manifold(2)


@pytest.fixture
def p2():
    return spdm_manifold(2)


@pytest.fixture
def cap_ball(s2):
    return BallSpec(Point(s2, NORTH), math.pi / 8)


@pytest.fixture
def spd_ball(p2):
    return BallSpec(Point(p2, np.eye(2)), 1.5)


def random_unit(rng, dim=3):
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def random_spd(rng, k=2, spread=1.0):
    a = rng.standard_normal((k, k)) * spread
    w, q = np.linalg.eigh(0.5 * (a + a.T))
    return (q * np.exp(w)) @ q.T


def random_sym(rng, k=2, scale=1.0):
    a = rng.standard_normal((k, k)) * scale
    return 0.5 * (a + a.T)


def random_rotation(rng, dim=3):
    return special_ortho_group.rvs(dim, random_state=rng)


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
