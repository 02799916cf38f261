import math

import numpy as np
import pytest

from bpre.environment import EnvironmentModel
from bpre.offspring import OffspringLaw


def geometric_pair(lambda0=1.0):
    """Means e and e^2, equiprobable: X = log m_0 is 1 or 2."""
    return EnvironmentModel.from_atoms(
        [(OffspringLaw.shifted_geometric(math.exp(-1)), 0.5),
         (OffspringLaw.shifted_geometric(math.exp(-2)), 0.5)],
        lambda0,
    )


@pytest.fixture
def standard_model():
    return geometric_pair()


@pytest.fixture
def mixed_model():
    """Three families, asymmetric weights; still admissible."""
    return EnvironmentModel.from_atoms(
        [(OffspringLaw.shifted_poisson(1.5), 0.3),
         (OffspringLaw.finite({1: 0.2, 3: 0.5, 4: 0.3}), 0.5),
         (OffspringLaw.shifted_geometric(0.25), 0.2)],
    )


@pytest.fixture
def deterministic_model():
    return EnvironmentModel.from_atoms([(OffspringLaw.finite({2: 1.0}), 1.0)])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
