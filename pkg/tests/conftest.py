import numpy as np
import pytest

from ellpoles import elliptic as ell
from ellpoles.identities import random_lattice


@pytest.fixture
def square():
    return ell.square_lattice()


@pytest.fixture
def skew():
    """A fixed non-rectangular lattice."""
    return random_lattice(np.random.default_rng(12345))


@pytest.fixture(params=["square", "skew"])
def lattice(request):
    if request.param == "square":
        return ell.square_lattice()
    return random_lattice(np.random.default_rng(12345))


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


def rel_err(a, b):
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
