import sys

import numpy as np
import pytest

from hodge_neck.complex import build_sphere3, build_torus4
from hodge_neck.s3_spectral import closed_modes


@pytest.fixture(scope="session")
def sphere1():
    return build_sphere3(1)


@pytest.fixture(scope="session")
def sphere2():
    return build_sphere3(2)


@pytest.fixture(scope="session")
def modes1(sphere1):
    return closed_modes(sphere1, 30)


@pytest.fixture(scope="session")
def modes2(sphere2):
    return closed_modes(sphere2, 30)


@pytest.fixture(scope="session")
def torus3():
    return build_torus4(3)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
