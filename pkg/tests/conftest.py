import sys

import numpy as np
import pytest

from pemdelay.core import AssumptionParams, scalar_problem


@pytest.fixture
def zero_problem():
    return scalar_problem(lambda x, y: 0 * x, lambda x, y: 0 * x, lambda t: 0.5, 1.0, 2.0,
                          AssumptionParams(5.0))


def make_scalar(f, g, xi=np.cos, q=5.0, delay=1.0, horizon=2.0, **kw):
    return scalar_problem(f, g, xi, delay, horizon, AssumptionParams(q, **kw))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULT_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
