import numpy as np
import pytest

from mspf import kernels
from mspf.datagen import generate_series
from mspf.model import trend_model


@pytest.fixture(scope="session")
def series():
    return generate_series()


@pytest.fixture(scope="session")
def gauss_model():
    return trend_model("gauss")


@pytest.fixture(scope="session")
def cauchy_model():
    return trend_model("cauchy")


@pytest.fixture(params=[b.name for b in kernels.available_backends()])
def backend(request):
    return kernels.get_backend(request.param)


needs_cython = pytest.mark.skipif(kernels.cython is None, reason="compiled kernels not built")


def rng(seed=0):
    return np.random.default_rng(seed)


# -- acceptance verdicts -------------------------------------------------------

VERDICTS = {}


@pytest.fixture
def verdict():
    """Record ``(criterion, passed, detail)`` for the end-of-run summary."""
    def record(number, passed, detail):
        VERDICTS[number] = (bool(passed), detail)
        print(f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(VERDICTS):
        passed, detail = VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
