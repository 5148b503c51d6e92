"""Shared fixtures: small algebras, Lip-norm balls and seeded generators"""

import numpy as np
import pytest

from src.algebra import FiniteCStarAlgebra
from src.convexopt import HRepBall, LinearTerm, VRepBall
from src.settings import DEFAULT_CONFIG, set_config

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


@pytest.fixture(autouse=True)
def default_config():
    set_config(DEFAULT_CONFIG)
    yield
    set_config(DEFAULT_CONFIG)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def m2():
    return FiniteCStarAlgebra((2,))


@pytest.fixture
def c2():
    return FiniteCStarAlgebra((1, 1))


@pytest.fixture
def paulis(m2):
    return [m2.element([s]) for s in (PAULI_X, PAULI_Y, PAULI_Z)]


@pytest.fixture
def pauli_ball(m2, paulis):
    """Balanced hull of ±σ_x, ±σ_y, ±σ_z plus the unit line"""
    return VRepBall(m2, paulis)


@pytest.fixture
def two_point_ball(c2):
    """Lipschitz ball {(s, t) : |s − t| ≤ 1} of the two-point space"""
    return HRepBall(c2, [LinearTerm(np.array([1.0, -1.0]), 1.0)])
