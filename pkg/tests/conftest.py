import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).parent
if str(TESTS) not in sys.path:
    sys.path.insert(0, str(TESTS))

from snakesmith.llm.backends import ReplayBackend  # noqa: E402
from snakesmith.llm.gateway import Gateway, ModelProfile  # noqa: E402
from snakesmith.llm.scripted import ScriptedBackend  # noqa: E402

FIXTURES = TESTS / "fixtures"


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def profile() -> ModelProfile:
    return ModelProfile()


@pytest.fixture
def scripted_gateway() -> Gateway:
    return Gateway(ScriptedBackend())


@pytest.fixture
def replay_gateway() -> Gateway:
    return Gateway(ReplayBackend(FIXTURES / "llm"))


# One line per end-to-end guarantee, filled in by test_acceptance.py and
# echoed after the run summary so the results read as a checklist.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance checks")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
