import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def rayleigh(rng, n, size=None):
    shape = (n,) if size is None else (size, n)
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * np.sqrt(0.5)


def uniform_in_doughnut(rng, inner, outer):
    r = np.sqrt(rng.uniform(inner**2, outer**2))
    return r * np.exp(1j * rng.uniform(-np.pi, np.pi))


# Acceptance tests append "[k] PASS/FAIL ..." lines here; they are echoed in
# the terminal summary so a plain `pytest -v` run shows one line per criterion.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[1:s.index("]")])):
            terminalreporter.write_line(line)
