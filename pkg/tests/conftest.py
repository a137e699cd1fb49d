import sys

import numpy as np
import pytest

from dsikit import testcase
from dsikit.variance import EstimatorConfig


@pytest.fixture
def exact():
    return EstimatorConfig(mode="exact")


@pytest.fixture
def mc():
    # reduced double-loop sizes keep Monte Carlo tests fast
    return EstimatorConfig(m=10_000, n_var=10_000, n_inner=300, n_outer=1_000, n_perm=200, mode="mc")


@pytest.fixture
def linear():
    return testcase.linear_model()


@pytest.fixture(params=list(testcase.CORRELATION_SETS))
def table_set(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    module = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = sorted(getattr(module, "RESULTS", []), key=lambda r: r.number)
    if results:
        terminalreporter.section("acceptance criteria")
        for r in results:
            terminalreporter.write_line(r.line())
