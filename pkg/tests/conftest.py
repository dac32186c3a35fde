import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from offaxis_nls.grid import build_grid  # noqa: E402
from offaxis_nls.groundstate import compute_ground_state  # noqa: E402
from acceptance_report import ACCEPTANCE_LINES  # noqa: E402


@pytest.fixture(scope="session")
def townes():
    g = build_grid(2, 0, 0.0, [20.0, 20.0], [128, 128])
    return compute_ground_state(2, 1.0, g, tol=1e-10)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
