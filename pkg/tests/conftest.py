import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = pytest.StashKey[list]()


@pytest.fixture
def criteria_log(request):
    """List shared across the session that collects acceptance verdicts."""
    return request.config.stash.setdefault(_CRITERIA, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
