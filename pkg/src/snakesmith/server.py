"""HTTP server exposing history, conversion, notebook sessions, and chat.

All mutations funnel through a single driver thread via a message queue;
request handlers submit closures and wait for the result, so module state
never sees concurrent writers.  Reads return JSON snapshots.  A server
hosts at most one conversion job and one notebook session at a time, and
pushes change events to clients over a server-sent event stream.
"""

from __future__ import annotations

import json
import queue
import threading
import traceback
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import urlsplit

from .assistant import (
    AssistantContext,
    AssistantError,
    Workspace,
    apply_action,
    handle_message,
    undo_last,
)
from .config import ToolConfig
from .history import History, HistoryError
from .llm.gateway import Gateway
from .pipeline import ContextBundle, ConversionJob, convert, gather_context
from .smk import SmkParseError

_BAD_REQUEST_ERRORS = (
    AssistantError,
    HistoryError,
    SmkParseError,
    KeyError,
    ValueError,
    IndexError,
    TypeError,
)

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
}

_FALLBACK_PAGE = """<!doctype html>
<html><head><title>snakesmith</title></head>
<body><h1>snakesmith API</h1>
<p>The review UI build was not found. The JSON API is live; see
GET /history, GET /dag, POST /convert, POST /chat, GET /events.</p>
</body></html>
"""


class Driver:
    """Single thread that owns every state mutation."""

    _STOP = object()

    def __init__(self):
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def _run(self):
        while True:
            item = self._queue.get()
            if item is self._STOP:
                return
            fn, box, done = item
            try:
                box["result"] = fn()
            except BaseException as err:
                box["error"] = err
            done.set()

    def submit(self, fn):
        """Run fn on the driver thread and return its result."""
        if threading.current_thread() is self._thread:
            return fn()
        box: dict = {}
        done = threading.Event()
        self._queue.put((fn, box, done))
        done.wait()
        if "error" in box:
            raise box["error"]
        return box.get("result")

    def stop(self):
        self._queue.put(self._STOP)
        self._thread.join(timeout=2)


class EventBus:
    """Fan-out of JSON events to any number of SSE subscribers."""

    def __init__(self):
        self._lock = threading.Lock()
        self._subscribers: list[queue.Queue] = []

    def subscribe(self) -> queue.Queue:
        q: queue.Queue = queue.Queue()
        with self._lock:
            self._subscribers.append(q)
        return q

    def unsubscribe(self, q: queue.Queue) -> None:
        with self._lock:
            if q in self._subscribers:
                self._subscribers.remove(q)

    def publish(self, event_type: str, payload) -> None:
        message = json.dumps({"type": event_type, "payload": payload})
        with self._lock:
            receivers = list(self._subscribers)
        for q in receivers:
            q.put(message)

    def close(self) -> None:
        with self._lock:
            receivers = list(self._subscribers)
            self._subscribers.clear()
        for q in receivers:
            q.put(None)


@dataclass
class ServerState:
    config: ToolConfig
    gateway: Gateway
    workspace: Workspace
    driver: Driver = field(default_factory=Driver)
    bus: EventBus = field(default_factory=EventBus)
    job: ConversionJob | None = None
    job_id: int = 0
    job_thread: threading.Thread | None = None
    chat_log: list[tuple[str, str]] = field(default_factory=list)
    stopping: bool = False

    def history_path(self) -> Path:
        return Path(self.config.workdir) / self.config.history_path

    def save_history(self) -> None:
        path = self.history_path()
        path.parent.mkdir(parents=True, exist_ok=True)
        self.workspace.history.save(path)


class _EventedJob(ConversionJob):
    """Publishes a snapshot on every stage change."""

    def __init__(self, context: ContextBundle, bus: EventBus, job_id: int, **kw):
        super().__init__(context=context, **kw)
        self._bus = bus
        self._job_id = job_id
        self._publish()

    def _publish(self):
        snap = self.snapshot()
        snap["id"] = self._job_id
        self._bus.publish("job", snap)

    def advance(self, stage: str) -> None:
        super().advance(stage)
        self._publish()

    def fail(self, message: str) -> None:
        super().fail(message)
        self._publish()


def _run_job(state: ServerState, job: _EventedJob, history: History,
             mode: str) -> None:
    try:
        convert(job, history, state.gateway, state.config.profile(),
                validate_mode=mode)
    except Exception:
        # convert() already marked the job failed with the message.
        pass


class ApiHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server_version = "snakesmith"

    # Set by make_handler.
    state: ServerState = None
    ui_root: Path | None = None

    def log_message(self, fmt, *args):
        pass

    # -- plumbing ------------------------------------------------------------

    def _send_json(self, code: int, payload) -> None:
        body = json.dumps(payload).encode()
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        if not length:
            return {}
        raw = self.rfile.read(length)
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as err:
            raise _HttpError(400, f"request body is not JSON: {err}")
        if not isinstance(data, dict):
            raise _HttpError(400, "request body must be a JSON object")
        return data

    def _route(self, method: str) -> None:
        path = urlsplit(self.path).path.rstrip("/") or "/"
        try:
            handler = _ROUTES.get((method, path))
            if handler is not None:
                handler(self)
            elif method == "GET" and path.startswith("/jobs/"):
                self._get_job(path.removeprefix("/jobs/"))
            elif method == "GET":
                self._serve_static(path)
            else:
                self._send_json(404, {"error": f"no route for {method} {path}"})
        except _HttpError as err:
            self._send_json(err.code, {"error": err.message})
        except _BAD_REQUEST_ERRORS as err:
            self._send_json(400, {"error": str(err)})
        except BrokenPipeError:
            pass
        except Exception as err:
            traceback.print_exc()
            self._send_json(500, {"error": f"{type(err).__name__}: {err}"})

    def do_GET(self):
        self._route("GET")

    def do_POST(self):
        self._route("POST")

    def do_PATCH(self):
        self._route("PATCH")

    # -- history -------------------------------------------------------------

    def _get_history(self):
        state = self.state
        snapshot = state.driver.submit(lambda: state.workspace.history.to_dict())
        self._send_json(200, snapshot)

    def _patch_history(self):
        state = self.state
        body = self._read_json()
        op = body.get("op", "")

        def mutate():
            history = state.workspace.history
            if op == "remove":
                history.remove(int(body["index"]))
            elif op == "edit":
                history.edit_text(int(body["index"]), str(body["text"]))
            elif op == "add":
                from .history import RecordedCommand

                history.add(RecordedCommand(text=str(body["text"])))
            elif op == "group":
                history.group(str(body["name"]), [int(i) for i in body["indices"]])
            elif op == "ungroup":
                history.ungroup(str(body["name"]))
            elif op == "mark":
                index = int(body["index"])
                history._check_index(index)
                history.entries[index].relevant = bool(body["relevant"])
            else:
                raise _HttpError(400, f"unknown history op {op!r}")
            state.save_history()
            return history.to_dict()

        snapshot = state.driver.submit(mutate)
        state.bus.publish("history", snapshot)
        self._send_json(200, snapshot)

    # -- conversion job ------------------------------------------------------

    def _post_convert(self):
        state = self.state
        body = self._read_json()

        def start():
            if state.job is not None and state.job.stage not in ("done", "failed"):
                raise _HttpError(409, "a conversion job is already running")
            state.job_id += 1
            context = gather_context(state.config.workdir)
            job = _EventedJob(context, state.bus, state.job_id)
            if body.get("selection"):
                job.selection = [int(i) for i in body["selection"]]
            history = History.from_dict(state.workspace.history.to_dict())
            if body.get("all"):
                for entry in history.entries:
                    entry.relevant = True
            state.job = job
            state.job_thread = threading.Thread(
                target=_run_job,
                args=(state, job, history, body.get("mode", "auto")),
                daemon=True)
            state.job_thread.start()
            return state.job_id

        job_id = state.driver.submit(start)
        self._send_json(202, {"id": job_id, "stage": "drafting"})

    def _get_job(self, raw_id: str):
        state = self.state

        def read():
            if state.job is None or raw_id != str(state.job_id):
                raise _HttpError(404, f"no job {raw_id!r}")
            snap = state.job.snapshot()
            snap["id"] = state.job_id
            return snap

        self._send_json(200, state.driver.submit(read))

    # -- notebook session ----------------------------------------------------

    def _session(self):
        session = self.state.workspace.session
        if session is None:
            raise _HttpError(404, "no notebook session is loaded")
        return session

    def _dag_payload(self):
        from .nb.dag import check_label_constraints

        session = self._session()
        payload = session.to_dict()
        payload["violations"] = [
            {"kind": v.kind, "cells": v.cells, "names": v.names,
             "message": v.message}
            for v in check_label_constraints(session.dag)
        ]
        return payload

    def _get_dag(self):
        state = self.state
        self._send_json(200, state.driver.submit(self._dag_payload))

    def _post_analyze(self):
        from .nb.session import NotebookSession

        state = self.state
        body = self._read_json()

        def analyze():
            if "notebook" in body:
                session = NotebookSession.from_notebook(str(body["notebook"]))
            elif "path" in body:
                session = NotebookSession.from_notebook(Path(str(body["path"])))
            elif "sources" in body:
                session = NotebookSession.from_sources(
                    [str(s) for s in body["sources"]])
            else:
                raise _HttpError(400, "need notebook, path, or sources")
            state.workspace.session = session
            return self._dag_payload()

        payload = state.driver.submit(analyze)
        state.bus.publish("dag", payload)
        self._send_json(200, payload)

    def _patch_dag(self):
        state = self.state
        body = self._read_json()
        op = body.get("op", "")

        def mutate():
            session = self._session()
            if op == "label":
                session.set_label(int(body["cell"]), str(body["label"]))
            elif op == "edit_cell":
                session.edit_cell(int(body["cell"]), str(body["source"]))
            elif op == "rename":
                session.rename_cell(int(body["cell"]), str(body["name"]))
            elif op == "merge":
                session.merge_cells([int(i) for i in body["cells"]])
            elif op == "split":
                session.split_cell(int(body["cell"]), int(body["line"]))
            elif op == "delete":
                session.delete_cell(int(body["cell"]))
            elif op == "set_rw":
                session.set_rw(int(body["cell"]),
                               set(map(str, body.get("reads", []))),
                               set(map(str, body.get("writes", []))))
            elif op == "clear_rw":
                session.clear_rw(int(body["cell"]))
            elif op == "pin_writer":
                session.pin_writer(int(body["cell"]), str(body["name"]),
                                   int(body["src"]))
            elif op == "unpin_writer":
                session.unpin_writer(int(body["cell"]), str(body["name"]))
            elif op == "resolution":
                session.set_resolution(int(body["cell"]), str(body["name"]),
                                       str(body["resolution"]),
                                       body.get("wildcard"))
            elif op == "format":
                session.set_format(int(body["cell"]), str(body["name"]),
                                   str(body["format"]))
            elif op == "terminal":
                session.mark_terminal(int(body["cell"]), str(body["name"]),
                                      body.get("format"))
            elif op == "refine":
                evidence = {int(k): [str(n) for n in v]
                            for k, v in (body.get("evidence") or {}).items()}
                session.refine_rw_sets(evidence or
                                       {k: sorted(v) for k, v in
                                        session.dag.external.items()},
                                       state.gateway, state.config.profile())
            else:
                raise _HttpError(400, f"unknown dag op {op!r}")
            return self._dag_payload()

        payload = state.driver.submit(mutate)
        state.bus.publish("dag", payload)
        self._send_json(200, payload)

    def _post_export(self):
        from .nb.export import ExportError, assign_artifacts, export, generate_blocks

        state = self.state
        body = self._read_json()

        def run():
            session = self._session()
            profile = state.config.profile()
            try:
                specs = assign_artifacts(session.dag, session.format_pins,
                                         session.terminal_marks)
                plans, findings = generate_blocks(
                    session.dag, specs, gateway=state.gateway,
                    session=session, profile=profile)
                result = export(plans, session.dag, state.config.workdir,
                                gateway=state.gateway, profile=profile,
                                validate_mode=body.get("mode", "auto"))
            except ExportError as err:
                raise _HttpError(422, str(err))
            return {
                "snakefile": result.text,
                "scripts": result.scripts,
                "findings": [str(f) for f in findings + result.findings],
                "config": dict(result.config.entries),
            }

        payload = state.driver.submit(run)
        state.bus.publish("export", {"written": sorted(payload["scripts"])})
        self._send_json(200, payload)

    # -- assistant -----------------------------------------------------------

    def _post_chat(self):
        state = self.state
        body = self._read_json()
        message = str(body.get("message", "")).strip()
        if not message:
            raise _HttpError(400, "chat needs a message")

        def turn():
            ws = state.workspace
            context = AssistantContext.capture(
                ws.settings, ws.history, ws.session,
                readme_text=_readme_text(state.config))
            reply, uris = handle_message(
                message, context, state.gateway, state.config.profile(),
                conversation=state.chat_log)
            state.chat_log.append(("user", message))
            state.chat_log.append(("assistant", reply))
            actions = []
            confirm = bool(ws.settings.get("confirm_assistant_actions"))
            for uri in uris:
                if confirm and not body.get("apply"):
                    actions.append({"uri": uri.raw, "ok": None,
                                    "message": "pending confirmation"})
                    continue
                report = apply_action(uri, ws, state.gateway,
                                      state.config.profile())
                actions.append({"uri": uri.raw, "ok": report.ok,
                                "message": report.message})
            if any(a["ok"] for a in actions):
                state.save_history()
            return {"reply": reply, "actions": actions}

        payload = state.driver.submit(turn)
        state.bus.publish("chat", payload)
        self._send_json(200, payload)

    def _post_undo(self):
        state = self.state
        report = state.driver.submit(lambda: undo_last(state.workspace))
        payload = {"ok": report.ok, "message": report.message}
        state.bus.publish("chat", payload)
        self._send_json(200 if report.ok else 409, payload)

    # -- events and static ---------------------------------------------------

    def _get_events(self):
        state = self.state
        q = state.bus.subscribe()
        try:
            self.send_response(200)
            self.send_header("Content-Type", "text/event-stream")
            self.send_header("Cache-Control", "no-cache")
            self.send_header("Connection", "close")
            self.end_headers()
            self.wfile.write(b": connected\n\n")
            self.wfile.flush()
            while not state.stopping:
                try:
                    message = q.get(timeout=0.5)
                except queue.Empty:
                    self.wfile.write(b": ping\n\n")
                    self.wfile.flush()
                    continue
                if message is None:
                    break
                self.wfile.write(f"data: {message}\n\n".encode())
                self.wfile.flush()
        except (BrokenPipeError, ConnectionResetError):
            pass
        finally:
            state.bus.unsubscribe(q)
            self.close_connection = True

    def _serve_static(self, path: str):
        if path == "/":
            path = "/index.html"
        root = self.ui_root
        if root is not None:
            target = (root / path.lstrip("/")).resolve()
            if str(target).startswith(str(root.resolve())) and target.is_file():
                body = target.read_bytes()
                self.send_response(200)
                ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                self.send_header("Content-Type", ctype)
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)
                return
        if path == "/index.html":
            body = _FALLBACK_PAGE.encode()
            self.send_response(200)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        self._send_json(404, {"error": f"not found: {path}"})


class _HttpError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


_ROUTES = {
    ("GET", "/history"): ApiHandler._get_history,
    ("PATCH", "/history"): ApiHandler._patch_history,
    ("POST", "/convert"): ApiHandler._post_convert,
    ("GET", "/dag"): ApiHandler._get_dag,
    ("PATCH", "/dag"): ApiHandler._patch_dag,
    ("POST", "/dag/analyze"): ApiHandler._post_analyze,
    ("POST", "/export"): ApiHandler._post_export,
    ("POST", "/chat"): ApiHandler._post_chat,
    ("POST", "/undo"): ApiHandler._post_undo,
    ("GET", "/events"): ApiHandler._get_events,
}


def _readme_text(config: ToolConfig) -> str:
    for candidate in (Path(config.workdir) / "README.md",
                      Path(__file__).resolve().parents[2] / "README.md"):
        if candidate.is_file():
            return candidate.read_text()
    return ""


def _default_ui_root() -> Path | None:
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


@dataclass
class ServerHandle:
    server: ThreadingHTTPServer
    state: ServerState
    thread: threading.Thread

    @property
    def port(self) -> int:
        return self.server.server_address[1]

    def wait(self) -> None:
        self.thread.join()

    def stop(self) -> None:
        self.state.stopping = True
        self.state.bus.close()
        self.server.shutdown()
        self.server.server_close()
        self.state.driver.stop()
        self.thread.join(timeout=2)


def serve(config: ToolConfig, gateway: Gateway | None = None,
          ui_root: Path | None = None) -> ServerHandle:
    """Start the API server; returns a handle with .port/.wait()/.stop()."""
    from .cli import make_gateway

    gateway = gateway or make_gateway(config)
    workspace = Workspace(settings=config.settings_dict(),
                          context=gather_context(config.workdir))
    history_path = Path(config.workdir) / config.history_path
    if history_path.exists():
        workspace.history = History.load(history_path)
    state = ServerState(config=config, gateway=gateway, workspace=workspace)

    handler = type("BoundApiHandler", (ApiHandler,), {
        "state": state,
        "ui_root": ui_root or _default_ui_root(),
    })
    server = ThreadingHTTPServer(("127.0.0.1", config.ui_port), handler)
    server.daemon_threads = True
    thread = threading.Thread(target=server.serve_forever,
                              kwargs={"poll_interval": 0.1}, daemon=True)
    thread.start()
    return ServerHandle(server=server, state=state, thread=thread)
