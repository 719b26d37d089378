"""Shell history: import formats, curation, grouping, persistence."""

import json
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from snakesmith.history import (
    CompositeEntry,
    History,
    HistoryError,
    RecordedCommand,
    classify_relevance,
    hook_snippet,
)

HISTORIES = Path(__file__).parent / "fixtures" / "histories"


# ---------------------------------------------------------------------------
# text import


@pytest.mark.parametrize("name", ["bash_indexed", "zsh_extended", "bare_continuations"])
def test_import_recorded_shell_output(name):
    history = History()
    added = history.import_text((HISTORIES / f"{name}.txt").read_text())
    expected = (HISTORIES / f"{name}.expected.txt").read_text().splitlines()
    assert [e.text for e in history.entries] == expected
    assert added == len(expected)


def test_import_strips_index_star_marker():
    history = History()
    history.import_text("  498  ls data\n  499* git status\n")
    assert [e.text for e in history.entries] == ["ls data", "git status"]


def test_import_joins_continuations_and_skips_blanks():
    history = History()
    added = history.import_text("bwa mem \\\n    -t 4 ref.fa\n\n\nls\n")
    assert added == 2
    assert history.entries[0].text == "bwa mem -t 4 ref.fa"


def test_import_trailing_continuation_still_added():
    history = History()
    assert history.import_text("sort a.txt \\") == 1
    assert history.entries[0].text == "sort a.txt"


def test_imported_entries_have_no_metadata():
    history = History()
    history.import_text(": 1723370112:0;samtools sort a.bam\n")
    entry = history.entries[0]
    assert entry.text == "samtools sort a.bam"
    assert entry.exit_code is None and entry.cwd is None and entry.ts is None
    assert entry.relevant is None


_HIST_LINE = st.one_of(
    st.integers(1, 9999).map(lambda n: f"  {n}  echo hi"),
    st.integers(1, 9999).map(lambda n: f": {n}:0;echo hi"),
    st.just("echo hi"),
)


@given(st.lists(_HIST_LINE, min_size=1, max_size=10))
@settings(max_examples=100, deadline=None)
def test_import_normalizes_all_line_formats(lines):
    history = History()
    history.import_text("\n".join(lines) + "\n")
    assert [e.text for e in history.entries] == ["echo hi"] * len(lines)


# ---------------------------------------------------------------------------
# spool ingestion


def test_ingest_spool_reads_and_clears(tmp_path):
    spool = tmp_path / "spool.jsonl"
    spool.write_text(
        json.dumps({"text": "ls", "exit": 0, "cwd": "/w", "ts": 5.0, "env": {"VIRTUAL_ENV": "v"}})
        + "\nnot json\n"
        + json.dumps({"no_text": 1})
        + "\n"
        + json.dumps({"text": "pwd"})
        + "\n"
    )
    history = History()
    assert history.ingest_spool(spool) == 2
    assert [e.text for e in history.entries] == ["ls", "pwd"]
    assert history.entries[0].exit_code == 0
    assert history.entries[0].env == {"VIRTUAL_ENV": "v"}
    assert spool.read_text() == ""


def test_ingest_spool_keep_option_and_missing_file(tmp_path):
    spool = tmp_path / "spool.jsonl"
    spool.write_text(json.dumps({"text": "ls"}) + "\n")
    history = History()
    history.ingest_spool(spool, clear=False)
    assert spool.read_text() != ""
    assert History().ingest_spool(tmp_path / "absent.jsonl") == 0


# ---------------------------------------------------------------------------
# curation


def _history(*texts: str) -> History:
    return History(entries=[RecordedCommand(text=t) for t in texts])


def test_remove_remaps_composite_indices():
    history = _history("a", "b", "c", "d")
    history.group("pair", [2, 3])
    history.remove(0)
    assert history.composites == [CompositeEntry("pair", [1, 2])]
    history.remove(1)  # member of the composite
    assert history.composites == [CompositeEntry("pair", [1])]
    history.remove(1)  # last member: composite dissolves
    assert history.composites == []


def test_group_rejects_overlap_duplicate_name_and_bad_index():
    history = _history("a", "b", "c")
    history.group("g", [0, 1])
    with pytest.raises(HistoryError, match="already grouped"):
        history.group("h", [1, 2])
    with pytest.raises(HistoryError, match="already exists"):
        history.group("g", [2])
    with pytest.raises(HistoryError, match="out of range"):
        history.group("h", [9])
    with pytest.raises(HistoryError):
        history.group("", [2])
    with pytest.raises(HistoryError):
        history.group("h", [])


def test_units_collapse_composites_in_order():
    history = _history("ls", "bwa mem", "samtools sort", "wc")
    history.group("align", [1, 2])
    units = history.units()
    assert [u.text for u in units] == ["ls", "bwa mem && samtools sort", "wc"]
    assert units[1].name == "align"
    assert units[1].indices == [1, 2]
    history.ungroup("align")
    assert [u.text for u in history.units()] == ["ls", "bwa mem", "samtools sort", "wc"]
    with pytest.raises(HistoryError):
        history.ungroup("align")


def test_relevant_units_follow_entry_marks():
    history = _history("ls", "bwa mem", "samtools sort")
    history.group("align", [1, 2])
    history.entries[2].relevant = True
    assert [u.text for u in history.relevant_units()] == ["bwa mem && samtools sort"]


def test_edit_text_returns_previous():
    history = _history("ls")
    assert history.edit_text(0, "ls -la") == "ls"
    assert history.entries[0].text == "ls -la"
    with pytest.raises(HistoryError):
        history.edit_text(5, "x")


# ---------------------------------------------------------------------------
# persistence


def test_save_load_roundtrip(tmp_path):
    history = _history("a", "b", "c")
    history.group("bc", [1, 2])
    history.entries[0].relevant = True
    history.entries[0].env = {"CONDA_DEFAULT_ENV": "rnaseq"}
    path = tmp_path / "history.json"
    history.save(path)
    loaded = History.load(path)
    assert loaded.to_dict() == history.to_dict()


def test_load_rejects_bad_version_and_bad_composites(tmp_path):
    with pytest.raises(HistoryError, match="version"):
        History.from_dict({"version": 99, "entries": []})
    with pytest.raises(HistoryError, match="references index"):
        History.from_dict(
            {
                "version": 1,
                "entries": [{"text": "ls"}],
                "composites": [{"name": "g", "indices": [4]}],
            }
        )
    bad = tmp_path / "history.json"
    bad.write_text("{broken")
    with pytest.raises(HistoryError, match="not valid JSON"):
        History.load(bad)


# ---------------------------------------------------------------------------
# relevance + hook


def test_classify_relevance_marks_units(scripted_gateway, profile):
    history = _history("bwa mem ref.fa r.fq > a.sam", "git status", "samtools sort a.sam")
    chosen = classify_relevance(history, scripted_gateway, profile)
    marks = [e.relevant for e in history.entries]
    assert all(isinstance(m, bool) for m in marks)
    assert chosen == [i for i, m in enumerate(marks) if m]
    assert marks[1] is False  # version-control housekeeping is not a step


def test_classify_relevance_empty_history(scripted_gateway, profile):
    assert classify_relevance(History(), scripted_gateway, profile) == []


def test_hook_snippet_mentions_spool_and_shell():
    for shell, marker in (("bash", "PROMPT_COMMAND"), ("zsh", "precmd_functions")):
        snippet = hook_snippet(shell, "/tmp/spool.jsonl")
        assert "/tmp/spool.jsonl" in snippet
        assert marker in snippet
    with pytest.raises(HistoryError):
        hook_snippet("fish", "/tmp/s")
