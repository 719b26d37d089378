"""Regenerate the replay fixtures under tests/fixtures/llm/.

Runs every canonical scenario against the scripted backend wrapped in a
recorder.  The scripted backend is deterministic, so regeneration is
stable; delete a .jsonl file and rerun to refresh it.

Usage: python3 scripts/record_fixtures.py
"""

from __future__ import annotations

import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

import scenarios  # noqa: E402

from snakesmith.llm.backends import RecordingBackend  # noqa: E402
from snakesmith.llm.gateway import Gateway, ModelProfile  # noqa: E402
from snakesmith.llm.scripted import ScriptedBackend  # noqa: E402
from snakesmith.validation import validate_and_correct  # noqa: E402

PROFILE = ModelProfile()


def recorder(name: str) -> Gateway:
    return Gateway(RecordingBackend(ScriptedBackend(),
                                    scenarios.LLM_FIXTURES / name))


def record_fixes() -> None:
    gateway = recorder("fixes.jsonl")
    for path in sorted((scenarios.FIXTURES / "seeded_errors").glob("*.smk")):
        validate_and_correct(path.read_text(), gateway, PROFILE, mode="internal")


def record_codegen() -> None:
    gateway = recorder("codegen.jsonl")
    for name in scenarios.notebook_manifest():
        with tempfile.TemporaryDirectory() as tmp:
            scenarios.notebook_export_scenario(gateway, PROFILE, name, tmp)
    # The plain CLI export path skips terminal marks, so its prompts differ.
    with tempfile.TemporaryDirectory() as tmp:
        scenarios.notebook_export_scenario(gateway, PROFILE, "nb01_linear.ipynb",
                                           tmp, mark_terminals=False)


def record_convert() -> None:
    gateway = recorder("convert.jsonl")
    with tempfile.TemporaryDirectory() as tmp:
        job = scenarios.convert_all_scenario(gateway, PROFILE, tmp)
    scenarios.docs_scenario(gateway, PROFILE, job.workflow)


def record_chat() -> None:
    gateway = recorder("chat.jsonl")
    scenarios.assistant_turns_scenario(gateway, PROFILE, apply=True)


def record_chat_ui() -> None:
    gateway = recorder("chat_ui.jsonl")
    scenarios.ui_chat_scenario(gateway, PROFILE)


def main() -> None:
    scenarios.LLM_FIXTURES.mkdir(parents=True, exist_ok=True)
    for path in scenarios.LLM_FIXTURES.glob("*.jsonl"):
        path.unlink()
    record_fixes()
    record_codegen()
    record_convert()
    record_chat()
    record_chat_ui()
    for path in sorted(scenarios.LLM_FIXTURES.glob("*.jsonl")):
        count = sum(1 for line in path.read_text().splitlines() if line.strip())
        print(f"{path.relative_to(ROOT)}: {count} exchange(s)")


if __name__ == "__main__":
    main()
