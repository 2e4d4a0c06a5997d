import os
from pathlib import Path

import pytest

from kairanban.core import FIVE_CLASS, THREE_CLASS, LabelSpace
from kairanban.orchestrator import PipelineConfig
from kairanban.prompting import format_agent_reply

GOLDEN = Path(__file__).parent / "golden"
UPDATE_GOLDEN = os.environ.get("KAIRANBAN_UPDATE_GOLDEN") == "1"


@pytest.fixture
def space3():
    return THREE_CLASS


@pytest.fixture
def space5():
    return FIVE_CLASS


@pytest.fixture
def abc():
    return LabelSpace(("a", "b", "c"))


def reply(probs, space=THREE_CLASS, analysis="It reads as mixed.", reasoning="Tone is mixed."):
    return format_agent_reply(analysis, reasoning, probs, space)


def kcs_cfg(system="kcs", space=THREE_CLASS, **kw):
    return PipelineConfig(system, space, **kw)


def assert_golden(name: str, text: str) -> None:
    path = GOLDEN / name
    if UPDATE_GOLDEN:
        path.write_text(text, encoding="utf-8")
    assert path.exists(), f"missing golden {name}; rerun with KAIRANBAN_UPDATE_GOLDEN=1"
    assert text == path.read_text(encoding="utf-8")


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
