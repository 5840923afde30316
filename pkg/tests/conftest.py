"""Pytest configuration and shared fixtures."""
import numpy as np
import pytest

from app.core.catalog import dirac, frac_power, log_resolvent
from app.core.semigroups import GeneratorTuple, planted_tuple, random_basis


@pytest.fixture
def diag_pair():
    """A = diag(-1, -2) and B = diag(-1.5, -2.5), single generators."""
    a = GeneratorTuple(np.diag([-1.0, -2.0]), label="A")
    b = GeneratorTuple(np.diag([-1.5, -2.5]), label="B")
    return a, b


@pytest.fixture
def third_diag():
    """C = diag(-0.5, -3), for cocycle and chain-rule checks."""
    return GeneratorTuple(np.diag([-0.5, -3.0]), label="C")


@pytest.fixture
def nilpotent_tuple():
    """A_1 = [[0, 1], [0, 0]], A_2 = I: commuting but not a bounded stable pair."""
    return GeneratorTuple(np.stack([np.array([[0.0, 1.0], [0.0, 0.0]]), np.eye(2)]), label="shear")


@pytest.fixture
def rotated_tuple():
    """Two generators planted in a seeded orthogonal basis, eigenvalues <= -0.2."""
    basis = random_basis(np.random.default_rng(7), 4, "orthogonal")
    eigenvalues = np.array([[-1.0, -2.0], [-3.0, -1.0], [-0.5, -4.0], [-2.0, -0.2]])
    return planted_tuple(eigenvalues, basis, label="rotated")


@pytest.fixture
def shared_basis():
    return random_basis(np.random.default_rng(21), 4, "orthogonal")


@pytest.fixture
def jump():
    """dirac(1): psi(s) = exp(s) - 1."""
    return dirac([1.0])


@pytest.fixture
def half():
    """frac_power(1/2): psi(s) = -sqrt(-s)."""
    return frac_power(0.5)


@pytest.fixture
def resolvent1():
    """log_resolvent(1): psi(s) = -log(1 - s)."""
    return log_resolvent(1.0)
