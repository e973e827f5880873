import numpy as np
import pytest

from mcaprice import Scenario, UtilityFunction


def two_user(theta=(4.0, 4.0), C=(1.0, 1.0), e=(1.0, 2.0), c=0.0, a=1.0, wifi=None):
    """Two logarithmic users, one per MNO."""
    return Scenario(2, [0, 1], list(C), list(e), [c, c], wifi,
                    tuple(UtilityFunction.logarithmic(t, a) for t in theta))


@pytest.fixture
def ex2():
    return two_user()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
