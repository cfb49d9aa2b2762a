import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from qlcrisk.prob_core import ProbSpace, Scenario

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

E = float(np.e)

log_values = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)


@st.composite
def log_vectors(draw, n=None, min_n=2, max_n=6):
    n = n or draw(st.integers(min_n, max_n))
    return np.array(draw(st.lists(log_values, min_size=n, max_size=n)))


@st.composite
def densities(draw, n):
    raw = np.array(draw(st.lists(st.floats(0.05, 3.0), min_size=n, max_size=n)))
    return raw / raw.mean()


@pytest.fixture
def two_atoms():
    return ProbSpace.uniform(2)


@pytest.fixture
def tilt2(two_atoms):
    return Scenario(two_atoms, [0.8, 1.2])


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import GATE
    except ImportError:
        return
    if GATE:
        terminalreporter.section("acceptance gate")
        for line in sorted(GATE, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
