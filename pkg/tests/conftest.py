import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gridmi.estimators import build_calibration

# curve Monte Carlo seed; shared so every test sees the same fixed curves
CURVE_SEED = 2025

_acceptance_lines = []


@pytest.fixture(scope="session")
def curve720():
    """Recalibration curve for the default record length."""
    return build_calibration(720, 8, seed=CURVE_SEED, replicates=1000)


@pytest.fixture(scope="session")
def curve1440():
    """Curve for the double-length records the confound tests use."""
    return build_calibration(1440, 8, seed=CURVE_SEED, replicates=1000)


@pytest.fixture(scope="session")
def acceptance_report():
    """Sink for one PASS/FAIL line per acceptance criterion."""
    return _acceptance_lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for line in _acceptance_lines:
        terminalreporter.write_line(line)
