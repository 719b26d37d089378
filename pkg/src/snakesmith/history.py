"""Recorded shell activity: capture, import, curation, persistence.

Two sources feed a history: a shell prompt hook that appends one JSON
line per command to a spool file (rich metadata: exit code, cwd, time,
environment hints), and plain shell history text (commands only).  Users
curate the result by removing, editing, and grouping commands before
conversion.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

HISTORY_VERSION = 1

# Environment variables worth keeping when a command is recorded; they
# identify the interpreter context the command ran in.
CAPTURED_ENV_VARS = ("CONDA_DEFAULT_ENV", "VIRTUAL_ENV")

_NUMBERED = re.compile(r"^\s*\d+[*\s]\s?")
_ZSH_EXTENDED = re.compile(r"^:\s*\d+:\d+;")


class HistoryError(ValueError):
    pass


@dataclass
class RecordedCommand:
    text: str
    exit_code: int | None = None
    cwd: str | None = None
    ts: float | None = None
    env: dict[str, str] = field(default_factory=dict)
    relevant: bool | None = None

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "exit": self.exit_code,
            "cwd": self.cwd,
            "ts": self.ts,
            "env": self.env,
            "relevant": self.relevant,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RecordedCommand":
        if "text" not in data:
            raise HistoryError("command entry is missing 'text'")
        return cls(
            text=str(data["text"]),
            exit_code=data.get("exit"),
            cwd=data.get("cwd"),
            ts=data.get("ts"),
            env=dict(data.get("env") or {}),
            relevant=data.get("relevant"),
        )


@dataclass
class CompositeEntry:
    """A named group of history entries treated as one workflow step."""

    name: str
    indices: list[int]

    def to_dict(self) -> dict:
        return {"name": self.name, "indices": list(self.indices)}


@dataclass
class HistoryUnit:
    """One candidate workflow step: a single command or a composite."""

    text: str
    indices: list[int]
    name: str | None = None


@dataclass
class History:
    entries: list[RecordedCommand] = field(default_factory=list)
    composites: list[CompositeEntry] = field(default_factory=list)

    # -- curation ----------------------------------------------------------

    def add(self, command: RecordedCommand) -> int:
        self.entries.append(command)
        return len(self.entries) - 1

    def _check_index(self, index: int) -> None:
        if not 0 <= index < len(self.entries):
            raise HistoryError(f"history index {index} out of range")

    def remove(self, index: int) -> RecordedCommand:
        self._check_index(index)
        removed = self.entries.pop(index)
        remapped: list[CompositeEntry] = []
        for comp in self.composites:
            indices = [i - (i > index) for i in comp.indices if i != index]
            if indices:
                remapped.append(CompositeEntry(comp.name, indices))
        self.composites = remapped
        return removed

    def edit_text(self, index: int, text: str) -> str:
        self._check_index(index)
        old = self.entries[index].text
        self.entries[index].text = text
        return old

    def group(self, name: str, indices: list[int]) -> CompositeEntry:
        if not name:
            raise HistoryError("composite name must be non-empty")
        if any(comp.name == name for comp in self.composites):
            raise HistoryError(f"composite {name!r} already exists")
        cleaned = sorted(set(indices))
        if not cleaned:
            raise HistoryError("composite needs at least one entry")
        for i in cleaned:
            self._check_index(i)
        grouped = self.grouped_indices()
        overlap = grouped.intersection(cleaned)
        if overlap:
            raise HistoryError(f"entries already grouped: {sorted(overlap)}")
        comp = CompositeEntry(name=name, indices=cleaned)
        self.composites.append(comp)
        return comp

    def ungroup(self, name: str) -> CompositeEntry:
        for pos, comp in enumerate(self.composites):
            if comp.name == name:
                return self.composites.pop(pos)
        raise HistoryError(f"no composite named {name!r}")

    def grouped_indices(self) -> set[int]:
        return {i for comp in self.composites for i in comp.indices}

    def units(self) -> list[HistoryUnit]:
        """Workflow candidates in history order, composites collapsed."""
        starts = {comp.indices[0]: comp for comp in self.composites}
        grouped = self.grouped_indices()
        units: list[HistoryUnit] = []
        for i, entry in enumerate(self.entries):
            comp = starts.get(i)
            if comp is not None:
                text = " && ".join(self.entries[j].text for j in comp.indices)
                units.append(HistoryUnit(text=text, indices=list(comp.indices), name=comp.name))
            elif i not in grouped:
                units.append(HistoryUnit(text=entry.text, indices=[i]))
        return units

    def relevant_units(self) -> list[HistoryUnit]:
        """Units whose entries were marked relevant (composites count if any member is)."""
        out = []
        for unit in self.units():
            if any(self.entries[i].relevant for i in unit.indices):
                out.append(unit)
        return out

    # -- ingestion ---------------------------------------------------------

    def import_text(self, text: str) -> int:
        """Add commands from plain shell history output.

        Strips `history` line numbers and zsh extended-history prefixes and
        joins backslash continuations.  Imported entries carry no exit
        code, directory, or timestamp.
        """
        added = 0
        pending: str | None = None
        for raw in text.splitlines():
            line = _ZSH_EXTENDED.sub("", _NUMBERED.sub("", raw)).rstrip()
            if pending is not None:
                line = pending + " " + line.lstrip()
                pending = None
            if line.endswith("\\"):
                pending = line[:-1].rstrip()
                continue
            if not line.strip():
                continue
            self.add(RecordedCommand(text=line.strip()))
            added += 1
        if pending is not None and pending.strip():
            self.add(RecordedCommand(text=pending.strip()))
            added += 1
        return added

    def ingest_spool(self, path: str | Path, clear: bool = True) -> int:
        """Append commands from the hook's spool file; malformed lines are skipped."""
        spool = Path(path)
        if not spool.exists():
            return 0
        added = 0
        for line in spool.read_text().splitlines():
            if not line.strip():
                continue
            try:
                data = json.loads(line)
                command = RecordedCommand(
                    text=str(data["text"]),
                    exit_code=data.get("exit"),
                    cwd=data.get("cwd"),
                    ts=data.get("ts"),
                    env=dict(data.get("env") or {}),
                )
            except (ValueError, KeyError, TypeError):
                continue
            self.add(command)
            added += 1
        if clear:
            spool.write_text("")
        return added

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": HISTORY_VERSION,
            "entries": [e.to_dict() for e in self.entries],
            "composites": [c.to_dict() for c in self.composites],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "History":
        if data.get("version") != HISTORY_VERSION:
            raise HistoryError(f"unsupported history version: {data.get('version')!r}")
        history = cls(
            entries=[RecordedCommand.from_dict(e) for e in data.get("entries", [])],
        )
        for comp in data.get("composites", []):
            indices = sorted(set(int(i) for i in comp.get("indices", [])))
            name = comp.get("name")
            if not name or not indices:
                raise HistoryError("composite entries need a name and indices")
            for i in indices:
                if not 0 <= i < len(history.entries):
                    raise HistoryError(f"composite {name!r} references index {i}")
            history.composites.append(CompositeEntry(name=name, indices=indices))
        return history

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "History":
        try:
            data = json.loads(Path(path).read_text())
        except json.JSONDecodeError as err:
            raise HistoryError(f"history file is not valid JSON: {err}")
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# relevance classification


def classify_relevance(history: History, gateway, profile) -> list[int]:
    """Mark each entry relevant or not; returns indexes of relevant units.

    The prompt sees command text only, so replayed classifications stay
    stable across machines and sessions.
    """
    from .llm.prompts import build_exchange

    units = history.units()
    if not units:
        return []
    payload = [{"index": i, "command": unit.text} for i, unit in enumerate(units)]
    exchange = build_exchange("classify_relevance", history=json.dumps(payload))
    data = gateway.complete_structured(profile, exchange, {"relevant": [int]})
    chosen = {i for i in data["relevant"] if 0 <= i < len(units)}
    for i, unit in enumerate(units):
        for entry_index in unit.indices:
            history.entries[entry_index].relevant = i in chosen
    return sorted(chosen)


# ---------------------------------------------------------------------------
# shell hook


def hook_snippet(shell: str, spool_path: str) -> str:
    """Shell rc snippet that records each command to the spool file."""
    if shell == "bash":
        return f"""\
# Record finished commands for workflow conversion.
__workflow_record() {{
    local st=$?
    local cmd
    cmd=$(HISTTIMEFORMAT= builtin history 1 | sed 's/^ *[0-9]* *//')
    if [ -n "$cmd" ] && [ "$cmd" != "$__WORKFLOW_LAST" ]; then
        __WORKFLOW_LAST=$cmd
        snakesmith record-append --spool "{spool_path}" --exit "$st" --text "$cmd" || true
    fi
}}
PROMPT_COMMAND="__workflow_record${{PROMPT_COMMAND:+;$PROMPT_COMMAND}}"
"""
    if shell == "zsh":
        return f"""\
# Record finished commands for workflow conversion.
__workflow_record() {{
    local st=$?
    local cmd
    cmd=$(fc -ln -1 2>/dev/null)
    cmd=${{cmd##[[:space:]]}}
    if [ -n "$cmd" ] && [ "$cmd" != "$__WORKFLOW_LAST" ]; then
        __WORKFLOW_LAST=$cmd
        snakesmith record-append --spool "{spool_path}" --exit "$st" --text "$cmd" || true
    fi
}}
precmd_functions+=(__workflow_record)
"""
    raise HistoryError(f"unsupported shell {shell!r} (use bash or zsh)")
