import numpy as np
import pytest

from dyadnet.data import RelationshipLabel
from dyadnet.synthgen import default_profiles, generate


@pytest.fixture(scope="session")
def small_separable():
    return generate(default_profiles("separable"), {lab: 12 for lab in RelationshipLabel}, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, shown after the run even when output is captured
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("#")[1].split()[0])):
            terminalreporter.write_line(line)
