"""Chat assistant that reads tool state and acts through command URIs.

The model sees a snapshot of the workspace plus the tool's own README and
replies in plain text.  Requested changes are embedded as
``snakemaker://<action>?<urlencoded params>`` URIs, which are parsed here
and dispatched to the owning module's edit operations.  Every mutation is
journaled with a full prior snapshot so the last action can be undone.
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import dataclass, field
from urllib.parse import parse_qsl, urlencode, urlsplit

from .history import History
from .llm.gateway import Gateway, ModelProfile, TransportError
from .llm.prompts import build_exchange
from .pipeline import ContextBundle, ConversionJob, convert, draft_rules
from .smk.model import render_rule

ACTIONS = ("set_setting", "edit_history", "print_rules", "edit_dag", "edit_code")

_URI_RE = re.compile(r"snakemaker://[^\s\"'<>)\]]+")


class AssistantError(ValueError):
    pass


@dataclass(frozen=True)
class CommandUri:
    raw: str
    action: str
    params: dict[str, str]

    @classmethod
    def parse(cls, raw: str) -> "CommandUri":
        parts = urlsplit(raw)
        if parts.scheme != "snakemaker":
            raise AssistantError(f"not a snakemaker URI: {raw!r}")
        action = parts.netloc
        if action not in ACTIONS:
            raise AssistantError(f"unknown action {action!r}")
        params = dict(parse_qsl(parts.query, keep_blank_values=True))
        return cls(raw=raw, action=action, params=params)

    @classmethod
    def build(cls, action: str, **params: str) -> "CommandUri":
        query = urlencode(params)
        raw = f"snakemaker://{action}?{query}" if query else f"snakemaker://{action}"
        return cls.parse(raw)


def extract_uris(text: str) -> tuple[list[CommandUri], list[str]]:
    """All well-formed command URIs in order, plus a warning per reject."""
    uris: list[CommandUri] = []
    warnings: list[str] = []
    for raw in _URI_RE.findall(text):
        raw = raw.rstrip(".,;:")
        try:
            uris.append(CommandUri.parse(raw))
        except AssistantError as err:
            warnings.append(f"ignored command {raw!r}: {err}")
    return uris, warnings


@dataclass(frozen=True)
class AssistantContext:
    """Immutable snapshot of everything the model may read."""

    settings: dict
    history: list[dict]
    dag: dict | None
    plans: list[dict] | None
    readme_text: str

    @classmethod
    def capture(cls, settings: dict, history: History, session=None,
                plans=None, readme_text: str = "") -> "AssistantContext":
        dag = session.to_dict() if session is not None else None
        plan_rows = None
        if plans is not None:
            plan_rows = [
                {"cell": p.cell, "script": p.script_path, "body": p.body}
                for p in plans
            ]
        return cls(
            settings=copy.deepcopy(settings),
            history=[e.to_dict() for e in history.entries],
            dag=dag,
            plans=plan_rows,
            readme_text=readme_text,
        )

    def render(self) -> str:
        state = {
            "settings": self.settings,
            "history": self.history,
            "dag": self.dag,
            "plans": self.plans,
        }
        out = json.dumps(state, indent=1, default=str)
        if self.readme_text:
            out += "\n\nREADME:\n" + self.readme_text
        return out


def handle_message(text: str, context: AssistantContext, gateway: Gateway,
                   profile: ModelProfile | None = None,
                   conversation: list[tuple[str, str]] | None = None,
                   ) -> tuple[str, list[CommandUri]]:
    """One chat turn: reply text plus the actions the model requested."""
    lines = [f"{role}: {content}" for role, content in (conversation or [])]
    lines.append(f"user: {text}")
    exchange = build_exchange(
        "assistant_chat",
        state=context.render(),
        conversation="\n".join(lines),
    )
    try:
        reply = gateway.complete(profile or ModelProfile(), exchange)
    except TransportError as err:
        return f"The model request failed: {err}", []
    uris, warnings = extract_uris(reply)
    if warnings:
        reply = reply.rstrip() + "\n" + "\n".join(warnings)
    return reply, uris


@dataclass
class EffectReport:
    ok: bool
    action: str
    message: str
    changed: bool = False


@dataclass
class JournalEntry:
    uri: CommandUri
    snapshot: dict


@dataclass
class Workspace:
    """Mutable state the assistant may act on.

    Settings, history, and the notebook session are the same objects the
    rest of the tool uses; actions call their existing edit operations.
    """

    settings: dict = field(default_factory=dict)
    history: History = field(default_factory=History)
    session: object | None = None
    context: ContextBundle | None = None
    workflow_text: str = ""
    journal: list[JournalEntry] = field(default_factory=list)

    def snapshot(self) -> dict:
        return {
            "settings": copy.deepcopy(self.settings),
            "history": self.history.to_dict(),
            "session": self.session.to_dict() if self.session else None,
            "workflow_text": self.workflow_text,
        }

    def restore(self, snap: dict) -> None:
        from .nb.session import NotebookSession

        self.settings = copy.deepcopy(snap["settings"])
        self.history = History.from_dict(snap["history"])
        if snap["session"] is not None:
            self.session = NotebookSession.from_dict(snap["session"])
        else:
            self.session = None
        self.workflow_text = snap["workflow_text"]


def apply_action(uri: CommandUri, workspace: Workspace,
                 gateway: Gateway | None = None,
                 profile: ModelProfile | None = None) -> EffectReport:
    """Dispatch one URI to the owning module; journal mutations."""
    before = workspace.snapshot()
    try:
        report = _dispatch(uri, workspace, gateway, profile)
    except Exception as err:
        workspace.restore(before)
        return EffectReport(False, uri.action, str(err))
    if report.changed:
        workspace.journal.append(JournalEntry(uri=uri, snapshot=before))
    return report


def undo_last(workspace: Workspace) -> EffectReport:
    if not workspace.journal:
        return EffectReport(False, "undo", "nothing to undo")
    entry = workspace.journal.pop()
    workspace.restore(entry.snapshot)
    return EffectReport(True, "undo", f"undid {entry.uri.raw}", changed=True)


def _dispatch(uri: CommandUri, ws: Workspace, gateway, profile) -> EffectReport:
    handler = {
        "set_setting": _do_set_setting,
        "edit_history": _do_edit_history,
        "print_rules": _do_print_rules,
        "edit_dag": _do_edit_dag,
        "edit_code": _do_edit_code,
    }[uri.action]
    return handler(uri, ws, gateway, profile)


def _coerce(value: str):
    try:
        return json.loads(value)
    except (ValueError, TypeError):
        return value


def _do_set_setting(uri, ws, gateway, profile) -> EffectReport:
    key = uri.params.get("key", "")
    if "value" not in uri.params:
        raise AssistantError("set_setting needs key and value")
    if ws.settings and key not in ws.settings:
        raise AssistantError(f"unknown setting {key!r}")
    ws.settings[key] = _coerce(uri.params["value"])
    return EffectReport(True, "set_setting",
                        f"{key} = {ws.settings[key]!r}", changed=True)


def _require_int(params: dict, key: str) -> int:
    try:
        return int(params[key])
    except (KeyError, ValueError):
        raise AssistantError(f"parameter {key!r} must be an integer")


def _do_edit_history(uri, ws, gateway, profile) -> EffectReport:
    op = uri.params.get("op", "")
    history = ws.history
    if op == "remove":
        removed = history.remove(_require_int(uri.params, "index"))
        return EffectReport(True, "edit_history",
                            f"removed {removed.text!r}", changed=True)
    if op == "edit":
        old = history.edit_text(_require_int(uri.params, "index"),
                                uri.params.get("text", ""))
        return EffectReport(True, "edit_history",
                            f"replaced {old!r}", changed=True)
    if op == "group":
        if "indices" in uri.params:
            indices = [int(v) for v in uri.params["indices"].split(",") if v]
        else:
            start = _require_int(uri.params, "start")
            end = _require_int(uri.params, "end")
            indices = list(range(start, end + 1))
        comp = history.group(uri.params.get("name", "step"), indices)
        return EffectReport(True, "edit_history",
                            f"grouped {comp.indices} as {comp.name}", changed=True)
    if op == "ungroup":
        comp = history.ungroup(uri.params.get("name", ""))
        return EffectReport(True, "edit_history",
                            f"ungrouped {comp.name}", changed=True)
    if op in ("mark_relevant", "mark_irrelevant"):
        flag = op == "mark_relevant"
        if "index" in uri.params:
            index = _require_int(uri.params, "index")
            history.entries[index].relevant = flag
            touched = 1
        else:
            needle = uri.params.get("filter", "")
            if not needle:
                raise AssistantError("mark needs an index or a filter")
            pattern = re.compile(rf"\b{re.escape(needle)}\b")
            touched = 0
            for entry in history.entries:
                if pattern.search(entry.text):
                    entry.relevant = flag
                    touched += 1
        word = "relevant" if flag else "incidental"
        return EffectReport(True, "edit_history",
                            f"marked {touched} command(s) {word}",
                            changed=touched > 0)
    raise AssistantError(f"unknown edit_history op {op!r}")


def _do_print_rules(uri, ws, gateway, profile) -> EffectReport:
    if gateway is None:
        raise AssistantError("print_rules needs a model gateway")
    profile = profile or ModelProfile()
    selection = uri.params.get("selection", "all")
    units = ws.history.relevant_units() or ws.history.units()
    if selection != "all":
        chosen = {int(v) for v in selection.split(",") if v}
        units = [u for u in units if set(u.indices) & chosen]
    context = ws.context or ContextBundle(workdir=".")
    if uri.params.get("postprocess") in ("true", "1", "yes"):
        # Full pipeline run: drafted rules continue through config
        # extraction, merge, and validation.
        job = ConversionJob(context=context)
        convert(job, ws.history, gateway, profile)
        ws.workflow_text = job.text
        return EffectReport(True, "print_rules", job.text, changed=True)
    rules = draft_rules(units, ws.history, context, gateway, profile)
    text = "\n\n".join(render_rule(r) for r in rules)
    return EffectReport(True, "print_rules", text, changed=False)


def _cell_index(params: dict) -> int:
    raw = params.get("cell", "")
    match = re.fullmatch(r"c?(\d+)(?:-[0-9a-f]+)?", raw)
    if not match:
        raise AssistantError(f"bad cell reference {raw!r}")
    return int(match.group(1))


def _session_of(ws: Workspace):
    if ws.session is None:
        raise AssistantError("no notebook session is loaded")
    return ws.session


def _do_edit_dag(uri, ws, gateway, profile) -> EffectReport:
    session = _session_of(ws)
    params = uri.params
    if "label" in params:
        cell = _cell_index(params)
        session.set_label(cell, params["label"])
        return EffectReport(True, "edit_dag",
                            f"cell {cell} labeled {params['label']}", changed=True)
    op = params.get("op", "")
    if op == "merge":
        indices = [int(v) for v in params.get("cells", "").split(",") if v]
        session.merge_cells(indices)
        return EffectReport(True, "edit_dag",
                            f"merged cells {indices}", changed=True)
    if op == "split":
        cell = _cell_index(params)
        session.split_cell(cell, _require_int(params, "line"))
        return EffectReport(True, "edit_dag", f"split cell {cell}", changed=True)
    if op == "delete":
        cell = _cell_index(params)
        session.delete_cell(cell)
        return EffectReport(True, "edit_dag", f"deleted cell {cell}", changed=True)
    if op == "pin_writer":
        dst = _require_int(params, "dst")
        session.pin_writer(dst, params.get("name", ""),
                           _require_int(params, "src"))
        return EffectReport(True, "edit_dag",
                            f"pinned writer for {params.get('name')}", changed=True)
    if op == "resolution":
        cell = _cell_index(params)
        session.set_resolution(cell, params.get("name", ""),
                               params.get("value", "data_file"),
                               params.get("wildcard") or None)
        return EffectReport(True, "edit_dag", "resolution updated", changed=True)
    if op == "format":
        cell = _cell_index(params)
        session.set_format(cell, params.get("name", ""), params.get("value", ""))
        return EffectReport(True, "edit_dag", "format pinned", changed=True)
    if op == "terminal":
        cell = _cell_index(params)
        session.mark_terminal(cell, params.get("name", ""),
                              params.get("value") or None)
        return EffectReport(True, "edit_dag", "marked terminal", changed=True)
    raise AssistantError(f"unknown edit_dag op {op!r}")


def _do_edit_code(uri, ws, gateway, profile) -> EffectReport:
    session = _session_of(ws)
    cell = _cell_index(uri.params)
    if "source" in uri.params:
        session.edit_cell(cell, uri.params["source"])
        return EffectReport(True, "edit_code",
                            f"cell {cell} source replaced", changed=True)
    find = uri.params.get("find", "")
    if not find:
        raise AssistantError("edit_code needs source or find/replace")
    source = session.cells[cell].source
    if find not in source:
        raise AssistantError(f"{find!r} does not occur in cell {cell}")
    session.edit_cell(cell, source.replace(find, uri.params.get("replace", "")))
    return EffectReport(True, "edit_code",
                        f"rewrote cell {cell}", changed=True)
