import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import runs  # noqa: E402


@pytest.fixture(scope="session")
def tg_run():
    return runs.taylor_green_run()


@pytest.fixture(scope="session")
def shear_run():
    return runs.shear_run()


@pytest.fixture(scope="session")
def perturbed_tg_run():
    return runs.perturbed_taylor_green_run()


@pytest.fixture(scope="session")
def forced_run():
    return runs.forced_run()


@pytest.fixture(scope="session")
def small_forced_run():
    return runs.small_forced_run()
