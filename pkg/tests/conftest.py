import math
import sys

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from dderace.core import ArmamentMatrix

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def race():
    """The worked 2x2 example: det 1.25, threshold pi/5."""
    return ArmamentMatrix(2.0, 1.0, 3.0, 0.25)


@st.composite
def stable_matrices(draw, min_det=0.05, min_disc=1e-3):
    a = draw(st.floats(0.2, 4.0))
    b = draw(st.floats(0.2, 4.0))
    k = draw(st.floats(0.0, 3.0))
    lim = (a * b - min_det) / k if k > 0 else 3.0
    l = draw(st.floats(0.0, max(0.0, min(3.0, lim))))
    A = ArmamentMatrix(a, b, k, l)
    if A.determinant() < min_det or A.discriminant() < min_disc:
        from hypothesis import assume

        assume(False)
    return A


def random_matrix(rng, min_det=0.05):
    while True:
        a, b = rng.uniform(0.2, 4.0, 2)
        k, l = rng.uniform(0.0, 3.0, 2)
        A = ArmamentMatrix(a, b, k, l)
        if A.determinant() > min_det and A.discriminant() > 1e-3:
            return A


def rel(x, y):
    return abs(x - y) / max(abs(y), 1e-300)


PI = math.pi


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
