"""Chat assistant: command URIs, dispatch, journaling, and replay turns."""

import pytest

import scenarios
from snakesmith.assistant import (
    AssistantContext,
    AssistantError,
    CommandUri,
    Workspace,
    apply_action,
    extract_uris,
    handle_message,
    undo_last,
)
from snakesmith.config import ToolConfig
from snakesmith.history import History, RecordedCommand
from snakesmith.llm.gateway import TransportError
from snakesmith.nb.session import NotebookSession


def workspace_with_session(*sources):
    return Workspace(settings=ToolConfig().settings_dict(),
                     history=History(),
                     session=NotebookSession.from_sources(list(sources)))


# -- command URIs ---------------------------------------------------------

def test_uri_parse_and_build():
    uri = CommandUri.parse("snakemaker://set_setting?key=model_name&value=x")
    assert uri.action == "set_setting"
    assert uri.params == {"key": "model_name", "value": "x"}
    built = CommandUri.build("edit_history", op="remove", index="2")
    assert built.raw == "snakemaker://edit_history?op=remove&index=2"
    bare = CommandUri.build("print_rules")
    assert bare.raw == "snakemaker://print_rules"
    assert bare.params == {}
    # blank values survive parsing
    assert CommandUri.parse("snakemaker://edit_code?cell=0&find=").params == {
        "cell": "0", "find": ""}


def test_uri_rejects_foreign_schemes_and_actions():
    with pytest.raises(AssistantError, match="not a snakemaker URI"):
        CommandUri.parse("https://set_setting?key=a")
    with pytest.raises(AssistantError, match="unknown action"):
        CommandUri.parse("snakemaker://format_disk?target=all")


def test_extract_uris_strips_punctuation_and_warns():
    text = ("Try snakemaker://print_rules. Then "
            "snakemaker://edit_history?op=remove&index=1, or maybe "
            "snakemaker://explode?now=1 if you like.")
    uris, warnings = extract_uris(text)
    assert [u.action for u in uris] == ["print_rules", "edit_history"]
    assert uris[1].params == {"op": "remove", "index": "1"}
    assert len(warnings) == 1 and "explode" in warnings[0]


def test_extract_uris_stops_at_quotes_and_brackets():
    uris, _ = extract_uris('(see snakemaker://print_rules) and '
                           '"snakemaker://edit_history?op=remove&index=0"')
    assert [u.action for u in uris] == ["print_rules", "edit_history"]
    assert uris[1].params == {"op": "remove", "index": "0"}


# -- settings --------------------------------------------------------------

def test_set_setting_coerces_and_validates():
    ws = Workspace(settings=ToolConfig().settings_dict())
    report = apply_action(CommandUri.build("set_setting", key="ui_port",
                                           value="9000"), ws)
    assert report.ok and report.changed
    assert ws.settings["ui_port"] == 9000
    report = apply_action(CommandUri.build("set_setting", key="config_generation",
                                           value="false"), ws)
    assert ws.settings["config_generation"] is False
    report = apply_action(CommandUri.build("set_setting", key="model_name",
                                           value="gpt-4o-mini"), ws)
    assert ws.settings["model_name"] == "gpt-4o-mini"


def test_unknown_setting_leaves_workspace_untouched():
    ws = Workspace(settings=ToolConfig().settings_dict())
    before = ws.snapshot()
    report = apply_action(CommandUri.build("set_setting", key="voltage",
                                           value="11"), ws)
    assert not report.ok
    assert "unknown setting" in report.message
    assert ws.snapshot() == before
    assert ws.journal == []


# -- history edits ----------------------------------------------------------

def test_edit_history_ops():
    ws = Workspace(history=History())
    for text in ("bwa mem a b > c", "git status", "sort c -o d"):
        ws.history.add(RecordedCommand(text=text))
    report = apply_action(CommandUri.build("edit_history", op="mark_irrelevant",
                                           filter="git"), ws)
    assert report.ok and report.changed
    assert ws.history.entries[1].relevant is False
    assert ws.history.entries[0].relevant is None

    report = apply_action(CommandUri.build("edit_history", op="remove",
                                           index="1"), ws)
    assert "git status" in report.message
    assert [e.text for e in ws.history.entries] == ["bwa mem a b > c",
                                                    "sort c -o d"]

    report = apply_action(CommandUri.build("edit_history", op="group",
                                           start="0", end="1", name="align"), ws)
    assert report.ok
    assert ws.history.composites[0].name == "align"

    report = apply_action(CommandUri.build("edit_history", op="ungroup",
                                           name="align"), ws)
    assert report.ok and ws.history.composites == []


def test_filter_matches_whole_words_only():
    ws = Workspace(history=History())
    ws.history.add(RecordedCommand(text="legit_tool run"))
    ws.history.add(RecordedCommand(text="git push"))
    report = apply_action(CommandUri.build("edit_history", op="mark_irrelevant",
                                           filter="git"), ws)
    assert "marked 1 command(s) incidental" in report.message
    assert ws.history.entries[0].relevant is None
    assert ws.history.entries[1].relevant is False


def test_mark_without_matches_changes_nothing():
    ws = Workspace(history=History())
    ws.history.add(RecordedCommand(text="bwa mem"))
    report = apply_action(CommandUri.build("edit_history", op="mark_irrelevant",
                                           filter="conda"), ws)
    assert report.ok and not report.changed
    assert ws.journal == []


def test_bad_history_index_reports_without_mutating():
    ws = Workspace(history=History())
    ws.history.add(RecordedCommand(text="ls"))
    before = ws.snapshot()
    report = apply_action(CommandUri.build("edit_history", op="remove",
                                           index="7"), ws)
    assert not report.ok
    assert ws.snapshot() == before


# -- rule printing ------------------------------------------------------------

def test_print_rules_drafts_without_mutating(scripted_gateway, profile):
    ws = Workspace(history=History())
    ws.history.add(RecordedCommand(text="bwa mem ref.fa reads.fq > out.sam",
                                   relevant=True))
    report = apply_action(CommandUri.build("print_rules"), ws,
                          scripted_gateway, profile)
    assert report.ok and not report.changed
    assert "rule bwa_mem:" in report.message
    assert ws.workflow_text == ""
    assert ws.journal == []


def test_print_rules_postprocess_runs_pipeline(scripted_gateway, profile):
    ws = Workspace(history=History())
    ws.history.add(RecordedCommand(text="bwa mem ref.fa reads.fq > out.sam",
                                   relevant=True))
    report = apply_action(
        CommandUri.build("print_rules", postprocess="true"), ws,
        scripted_gateway, profile)
    assert report.ok and report.changed
    assert ws.workflow_text and "rule" in ws.workflow_text
    assert len(ws.journal) == 1


def test_print_rules_requires_gateway():
    ws = Workspace(history=History())
    ws.history.add(RecordedCommand(text="ls"))
    report = apply_action(CommandUri.build("print_rules"), ws)
    assert not report.ok and "gateway" in report.message


# -- dag and code edits ---------------------------------------------------------

def test_edit_dag_dispatch_equals_direct_calls():
    sources = ["x = 1\n", "y = x\n", "z = y\nw = z\n"]
    via_uri = workspace_with_session(*sources)
    direct = NotebookSession.from_sources(list(sources))

    for uri in (
        CommandUri.build("edit_dag", cell="c0", label="script"),
        CommandUri.build("edit_dag", op="split", cell="2", line="1"),
    ):
        report = apply_action(uri, via_uri)
        assert report.ok, report.message

    direct.set_label(0, "script")
    direct.split_cell(2, 1)
    assert via_uri.session.to_dict() == direct.to_dict()


def test_edit_dag_ops_round_trip():
    ws = workspace_with_session("x = 1\n", "x = 2\n", "rows = [x]\n")
    assert apply_action(CommandUri.build(
        "edit_dag", op="pin_writer", dst="2", name="x", src="0"), ws).ok
    assert ws.session.dag.edge(2, "x").src == 0
    assert apply_action(CommandUri.build(
        "edit_dag", op="resolution", cell="2", name="x", value="wildcard",
        wildcard="sample"), ws).ok
    assert ws.session.dag.edge(2, "x").wildcard == "sample"
    assert apply_action(CommandUri.build(
        "edit_dag", op="format", cell="2", name="rows", value="json_text"), ws).ok
    assert ws.session.format_pins[(2, "rows")] == "json_text"
    assert apply_action(CommandUri.build(
        "edit_dag", op="terminal", cell="2", name="rows"), ws).ok
    assert ws.session.terminal_marks == [(2, "rows", None)]
    assert apply_action(CommandUri.build(
        "edit_dag", op="merge", cells="0,1"), ws).ok
    assert len(ws.session.cells) == 2


def test_cell_references_accept_ids():
    ws = workspace_with_session("x = 1\n")
    full_id = ws.session.dag.nodes[0].content_id(0)
    report = apply_action(CommandUri.build("edit_dag", cell=full_id,
                                           label="script"), ws)
    assert report.ok
    assert ws.session.labels[0] == "script"
    report = apply_action(CommandUri.build("edit_dag", cell="xyz", label="rule"), ws)
    assert not report.ok and "bad cell reference" in report.message


def test_edit_code_find_replace():
    ws = workspace_with_session("total = 1\n", "print(total)\n")
    report = apply_action(CommandUri.build("edit_code", cell="0",
                                           find="1", replace="2"), ws)
    assert report.ok
    assert ws.session.cells[0].source == "total = 2"
    before = ws.snapshot()
    report = apply_action(CommandUri.build("edit_code", cell="0",
                                           find="missing"), ws)
    assert not report.ok and "does not occur" in report.message
    assert ws.snapshot() == before


def test_edit_code_requires_session():
    ws = Workspace()
    report = apply_action(CommandUri.build("edit_code", cell="0", source="x\n"), ws)
    assert not report.ok and "no notebook session" in report.message


# -- journal and undo ------------------------------------------------------------

def test_undo_restores_exact_snapshots():
    ws = workspace_with_session("x = 1\n")
    ws.history.add(RecordedCommand(text="ls"))
    start = ws.snapshot()
    apply_action(CommandUri.build("set_setting", key="ui_port", value="9000"), ws)
    mid = ws.snapshot()
    apply_action(CommandUri.build("edit_code", cell="0", source="x = 5\n"), ws)
    assert len(ws.journal) == 2

    assert undo_last(ws).ok
    assert ws.snapshot() == mid
    assert undo_last(ws).ok
    assert ws.snapshot() == start
    report = undo_last(ws)
    assert not report.ok and report.message == "nothing to undo"


def test_failed_actions_are_not_journaled():
    ws = workspace_with_session("x = 1\n")
    apply_action(CommandUri.build("edit_dag", cell="c9", label="rule"), ws)
    assert ws.journal == []


# -- chat turns -------------------------------------------------------------------

def test_handle_message_extracts_actions(scripted_gateway, profile):
    context = AssistantContext.capture(ToolConfig().settings_dict(), History())
    reply, uris = handle_message("use model gpt-4o-mini", context,
                                 scripted_gateway, profile)
    (uri,) = uris
    assert uri.action == "set_setting"
    assert uri.params == {"key": "model_name", "value": "gpt-4o-mini"}
    assert "snakemaker://" in reply

    reply, uris = handle_message("what can you do here?", context,
                                 scripted_gateway, profile)
    assert uris == []
    assert "settings" in reply


def test_handle_message_reports_transport_failures(profile):
    class _Down:
        def complete(self, *a, **k):
            raise TransportError("connection refused")

    context = AssistantContext.capture({}, History())
    reply, uris = handle_message("hello", context, _Down(), profile)
    assert reply.startswith("The model request failed")
    assert uris == []


def test_context_render_includes_readme_and_dag():
    session = NotebookSession.from_sources(["x = 1\n"])
    context = AssistantContext.capture({"a": 1}, History(), session,
                                       readme_text="Demo project.\n")
    rendered = context.render()
    assert '"cells"' in rendered
    assert rendered.endswith("README:\nDemo project.\n")


def test_replay_canonical_turns(replay_gateway, profile):
    results = scenarios.assistant_turns_scenario(replay_gateway, profile,
                                                 apply=True)
    by_message = {message: (reply, uris, reports, ws)
                  for message, reply, uris, reports, ws in results}

    reply, uris, reports, ws = by_message[
        "please mark all git commands as incidental"]
    assert [u.action for u in uris] == ["edit_history"]
    assert reports[0].ok
    assert ws.history.entries[1].relevant is False
    assert ws.history.entries[0].relevant is None

    reply, uris, reports, ws = by_message["use model gpt-4o-mini"]
    assert ws.settings["model_name"] == "gpt-4o-mini"

    reply, uris, reports, ws = by_message["remove command 2"]
    assert [e.text for e in ws.history.entries] == [
        "bwa mem ref.fa reads.fq > aligned.sam", "git commit -m wip"]

    reply, uris, reports, ws = by_message["show me the rules"]
    assert [u.action for u in uris] == ["print_rules"]
    assert reports[0].ok
    assert "rule" in reports[0].message

    reply, uris, reports, ws = by_message["what can you do here?"]
    assert uris == [] and reports == []
    assert reply
