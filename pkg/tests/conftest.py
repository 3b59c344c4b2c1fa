import numpy as np
import pytest

from toricflow.polytope import from_vertices

CP1_VERTICES = [[-1], [1]]
P1XP1_VERTICES = [[1, 1], [1, -1], [-1, 1], [-1, -1]]
CP2_VERTICES = [[-1, -1], [2, -1], [-1, 2]]
BLP_VERTICES = [[1, 0], [0, 1], [-1, 1], [1, -1], [-1, -1]]


@pytest.fixture(scope="session")
def cp1():
    return from_vertices(CP1_VERTICES)


@pytest.fixture(scope="session")
def p1xp1():
    return from_vertices(P1XP1_VERTICES)


@pytest.fixture(scope="session")
def cp2():
    return from_vertices(CP2_VERTICES)


@pytest.fixture(scope="session")
def blp_cp2():
    return from_vertices(BLP_VERTICES)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240817)
