import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

PI = math.pi


def poly_fn(coeffs):
    """u(x, y, alpha) for sum c_ab x^a y^b given as {(a, b): c}."""
    def falling(n, k):
        out = 1.0
        for i in range(k):
            out *= n - i
        return out

    def u(x, y, alpha=(0, 0)):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for (a, b), c in coeffs.items():
            if a < alpha[0] or b < alpha[1]:
                continue
            out = out + c * falling(a, alpha[0]) * falling(b, alpha[1]) * x ** (a - alpha[0]) * y ** (b - alpha[1])
        return out
    return u


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for cid in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[cid])
