import numpy as np
import pytest

from dscmplan.analytics import LinkProfile
from dscmplan.simulator import WaveformConfig

REFERENCE_SES = (4.8, 4.4, 4.0, 3.6, 3.2, 2.8, 2.4, 2.0)


@pytest.fixture(scope="session")
def profile():
    return LinkProfile.reference()


@pytest.fixture
def small_wf():
    return WaveformConfig(rrc_rolloff=1.0 / 64.0, symbols_per_block=1024, blocks=2, seed=11)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Print and keep one PASS/FAIL line for an acceptance criterion."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
