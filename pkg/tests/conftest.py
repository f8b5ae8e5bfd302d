import math

import numpy as np
import pytest

from trivial_beltrami.presets import constant_spec, figure1_spec, identity_spec


@pytest.fixture(scope="session")
def fig1():
    return figure1_spec()


@pytest.fixture(scope="session")
def const03():
    return constant_spec(0.3)


@pytest.fixture(scope="session")
def ident():
    return identity_spec()


Q03 = 1.3 / 0.7  # (1 + c) / (1 - c) for c = 0.3, i.e. 13/7


def disk_points(rng, n, r_max=1.0):
    r = r_max * np.sqrt(rng.uniform(0, 1, n))
    return r * np.exp(2j * math.pi * rng.uniform(0, 1, n))


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
