import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@st.composite
def matrices(draw, max_rows=24, max_cols=24, min_side=1):
    m = draw(st.integers(min_side, max_rows))
    n = draw(st.integers(min_side, max_cols))
    return draw(arrays(np.float64, (m, n), elements=st.floats(-100, 100, allow_subnormal=False)))


@st.composite
def partitioned(draw, max_block=8, max_grid=4):
    """A matrix with a uniform block partition (r, c) dividing its shape."""
    r = draw(st.integers(1, max_grid))
    c = draw(st.integers(1, max_grid))
    m = r * draw(st.integers(1, max_block))
    n = c * draw(st.integers(1, max_block))
    x = draw(arrays(np.float64, (m, n), elements=st.floats(-10, 10, allow_subnormal=False)))
    return x, (r, c)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
