"""Command-line entry point.

Subcommands cover the full loop: recording shell activity, curating the
history, converting it to a workflow, documenting the result, analyzing
and exporting notebooks, serving the review UI, and chatting with the
assistant.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

from .config import CONFIG_FILENAME, ConfigError, ToolConfig, load_config
from .history import (
    History,
    HistoryError,
    RecordedCommand,
    classify_relevance,
    hook_snippet,
)
from .llm.backends import HttpBackend, ReplayBackend
from .llm.gateway import Gateway, StructuredOutputError, TransportError, UnrecordedPromptError
from .llm.scripted import ScriptedBackend
from .pipeline import (
    ContextBundle,
    ConversionJob,
    PipelineError,
    convert,
    gather_context,
    generate_docs,
)
from .smk import SmkParseError, parse_workflow

_USER_ERRORS = (
    ConfigError,
    HistoryError,
    PipelineError,
    SmkParseError,
    TransportError,
    UnrecordedPromptError,
    StructuredOutputError,
    OSError,
    ValueError,
)


def make_gateway(config: ToolConfig) -> Gateway:
    if config.backend == "scripted":
        return Gateway(ScriptedBackend())
    if config.backend == "replay":
        return Gateway(ReplayBackend(config.replay_path))
    return Gateway(HttpBackend())


def _history_file(config: ToolConfig) -> Path:
    return Path(config.workdir) / config.history_path


def _load_history(config: ToolConfig) -> History:
    path = _history_file(config)
    return History.load(path) if path.exists() else History()


def _save_history(config: ToolConfig, history: History) -> None:
    path = _history_file(config)
    path.parent.mkdir(parents=True, exist_ok=True)
    history.save(path)


# -- subcommands -------------------------------------------------------------


def cmd_record_hook(args, config: ToolConfig) -> int:
    spool = str((Path(config.workdir) / config.spool_path).resolve())
    print(hook_snippet(args.shell, spool))
    return 0


def cmd_record_append(args, config: ToolConfig) -> int:
    spool = Path(args.spool or Path(config.workdir) / config.spool_path)
    spool.parent.mkdir(parents=True, exist_ok=True)
    env = {}
    conda = os.environ.get("CONDA_DEFAULT_ENV")
    if conda:
        env["CONDA_DEFAULT_ENV"] = conda
    record = {
        "text": args.text,
        "exit": args.exit_code,
        "cwd": args.cwd or os.getcwd(),
        "ts": time.time(),
        "env": env,
    }
    with spool.open("a", encoding="utf-8") as fh:
        fh.write(json.dumps(record) + "\n")
    return 0


def cmd_history(args, config: ToolConfig) -> int:
    history = _load_history(config)
    if args.history_cmd == "import":
        if args.spool:
            added = history.ingest_spool(Path(config.workdir) / config.spool_path)
        else:
            text = Path(args.file).read_text() if args.file else sys.stdin.read()
            added = history.import_text(text)
        _save_history(config, history)
        print(f"imported {added} command(s)")
        return 0
    if args.history_cmd == "list":
        if args.json:
            print(json.dumps(history.to_dict(), indent=2))
            return 0
        for i, entry in enumerate(history.entries):
            flag = {True: "+", False: "-", None: "?"}[entry.relevant]
            print(f"{i:4d} [{flag}] {entry.text}")
        for comp in history.composites:
            print(f"group {comp.name}: {comp.indices}")
        return 0
    # edit
    if args.remove is not None:
        removed = history.remove(args.remove)
        print(f"removed: {removed.text}")
    elif args.text is not None:
        old = history.edit_text(args.index, args.text)
        print(f"replaced: {old}")
    elif args.group:
        indices = [int(v) for v in args.indices.split(",") if v]
        history.group(args.group, indices)
        print(f"grouped {indices} as {args.group}")
    elif args.ungroup:
        history.ungroup(args.ungroup)
        print(f"ungrouped {args.ungroup}")
    elif args.relevant is not None:
        history._check_index(args.index)
        history.entries[args.index].relevant = args.relevant == "true"
        print(f"marked {args.index} relevant={history.entries[args.index].relevant}")
    else:
        print("nothing to edit; see --help", file=sys.stderr)
        return 2
    _save_history(config, history)
    return 0


def cmd_convert(args, config: ToolConfig) -> int:
    history = _load_history(config)
    if not history.entries:
        print("error: history is empty; record or import commands first",
              file=sys.stderr)
        return 1
    gateway = make_gateway(config)
    profile = config.profile()
    if args.all:
        for entry in history.entries:
            entry.relevant = True
    elif any(entry.relevant is None for entry in history.entries):
        classify_relevance(history, gateway, profile)
        _save_history(config, history)
    job = ConversionJob(context=gather_context(config.workdir))
    if args.select:
        job.selection = [int(v) for v in args.select.split(",") if v]
    try:
        convert(job, history, gateway, profile, validate_mode=args.mode)
    except Exception as err:
        print(f"conversion failed at stage {job.stage}: {err}", file=sys.stderr)
        return 1
    out_path = Path(args.out or Path(config.workdir) / "Snakefile")
    out_path.write_text(job.text)
    written = [str(out_path)]
    if job.config.entries:
        config_path = Path(config.workdir) / "config.yaml"
        config_path.write_text(job.config.to_yaml())
        written.append(str(config_path))
    report = job.outcome.report if job.outcome else None
    print(f"stage: {job.stage}")
    print(f"rules: {', '.join(job.workflow.rule_names())}")
    if report is not None:
        verdict = "clean" if report.ok else f"{len(report.errors)} unresolved error(s)"
        print(f"validation ({report.mode}): {verdict} "
              f"after {job.outcome.rounds} round(s)")
    print("wrote: " + ", ".join(written))
    return 0


def cmd_docs(args, config: ToolConfig) -> int:
    history = _load_history(config)
    workflow = None
    snakefile = Path(config.workdir) / "Snakefile"
    if snakefile.exists():
        workflow = parse_workflow(snakefile.read_text())
    text = generate_docs(history, workflow, make_gateway(config), config.profile())
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        print(text)
    return 0


def cmd_notebook(args, config: ToolConfig) -> int:
    from .nb import ExportError, NotebookError
    from .nb.dag import check_label_constraints
    from .nb.export import assign_artifacts, export, generate_blocks
    from .nb.session import NotebookSession

    if args.notebook_cmd == "analyze":
        try:
            session = NotebookSession.from_notebook(Path(args.file))
        except (NotebookError, OSError) as err:
            print(f"error: {err}", file=sys.stderr)
            return 1
        if args.session:
            session.save(args.session)
        if args.json:
            print(json.dumps(session.to_dict(), indent=2))
            return 0
        for i, node in enumerate(session.dag.nodes):
            print(f"cell {i} [{node.label}] {node.name}: "
                  f"reads={sorted(node.reads)} writes={sorted(node.writes)}")
        for edge in session.dag.edges:
            print(f"edge {edge.src} -> {edge.dst} ({edge.name}, {edge.resolution})")
        for index, names in sorted(session.dag.external.items()):
            print(f"external: cell {index} reads {sorted(names)}")
        for violation in check_label_constraints(session.dag):
            print(f"violation: {violation.message}")
        return 0
    # export
    if args.session and Path(args.session).exists():
        session = NotebookSession.load(args.session)
    elif args.file:
        session = NotebookSession.from_notebook(Path(args.file))
    else:
        print("error: notebook export needs --session or a notebook file",
              file=sys.stderr)
        return 1
    gateway = make_gateway(config)
    profile = config.profile()
    try:
        specs = assign_artifacts(session.dag, session.format_pins,
                                 session.terminal_marks)
        plans, findings = generate_blocks(session.dag, specs, gateway=gateway,
                                          session=session, profile=profile)
        result = export(plans, session.dag, config.workdir, gateway=gateway,
                        profile=profile, validate_mode=args.mode)
    except ExportError as err:
        print(f"error: {err}", file=sys.stderr)
        for violation in err.violations:
            print(f"  {violation.message}", file=sys.stderr)
        return 1
    for finding in findings + result.findings:
        print(f"note: {finding}")
    print(f"wrote Snakefile and {len(result.scripts)} script(s) under {config.workdir}")
    return 0


def cmd_serve(args, config: ToolConfig) -> int:
    from .server import serve

    handle = serve(config)
    print(f"serving on http://127.0.0.1:{handle.port}")
    try:
        handle.wait()
    except KeyboardInterrupt:
        pass
    finally:
        handle.stop()
    return 0


def cmd_chat(args, config: ToolConfig) -> int:
    from .assistant import AssistantContext, Workspace, apply_action, handle_message

    history = _load_history(config)
    workspace = Workspace(settings=config.settings_dict(), history=history,
                          context=gather_context(config.workdir))
    if args.session and Path(args.session).exists():
        from .nb.session import NotebookSession

        workspace.session = NotebookSession.load(args.session)
    gateway = make_gateway(config)
    profile = config.profile()
    readme = Path(__file__).resolve().parents[2] / "README.md"
    context = AssistantContext.capture(
        workspace.settings, workspace.history, workspace.session,
        readme_text=readme.read_text() if readme.exists() else "")
    reply, uris = handle_message(args.message, context, gateway, profile)
    print(reply)
    if config.confirm_assistant_actions and not args.apply:
        for uri in uris:
            print(f"pending (use --apply): {uri.raw}")
        return 0
    for uri in uris:
        report = apply_action(uri, workspace, gateway, profile)
        status = "ok" if report.ok else "rejected"
        print(f"[{status}] {uri.action}: {report.message}")
    _save_history(config, workspace.history)
    if workspace.session is not None and args.session:
        workspace.session.save(args.session)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--workdir", default=".", help="project directory")
    common.add_argument("--backend", choices=["scripted", "replay", "http"])
    common.add_argument("--replay", dest="replay_path",
                        help="replay fixture file or directory")
    common.add_argument("--model-name", dest="model_name")
    common.add_argument("--endpoint")
    common.add_argument("--max-iterations", dest="max_iterations", type=int)
    common.add_argument("--ui-port", dest="ui_port", type=int)
    common.add_argument("--disable", action="append", default=[],
                        choices=["config_generation", "iterative_validation",
                                 "workflow_context"],
                        help="turn a model-assisted feature off")

    parser = argparse.ArgumentParser(
        prog="snakesmith",
        description="Convert recorded shell activity and notebooks into workflows.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("record-hook", parents=[common],
                       help="print the shell hook that records commands")
    p.add_argument("--shell", choices=["bash", "zsh"], default="bash")
    p.set_defaults(func=cmd_record_hook)

    p = sub.add_parser("record-append", parents=[common],
                       help="append one command to the spool (used by the hook)")
    p.add_argument("--spool")
    p.add_argument("--exit", dest="exit_code", type=int, default=None)
    p.add_argument("--cwd")
    p.add_argument("--text", required=True)
    p.set_defaults(func=cmd_record_append)

    p = sub.add_parser("history", help="curate recorded commands")
    hist_sub = p.add_subparsers(dest="history_cmd", required=True)
    q = hist_sub.add_parser("import", parents=[common])
    q.add_argument("--file", help="shell history text (default: stdin)")
    q.add_argument("--spool", action="store_true",
                   help="ingest the hook's spool file instead")
    q.set_defaults(func=cmd_history)
    q = hist_sub.add_parser("list", parents=[common])
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=cmd_history)
    q = hist_sub.add_parser("edit", parents=[common])
    q.add_argument("--index", type=int, default=0)
    q.add_argument("--text")
    q.add_argument("--remove", type=int)
    q.add_argument("--relevant", choices=["true", "false"])
    q.add_argument("--group", help="composite name")
    q.add_argument("--indices", default="", help="comma-separated entry indices")
    q.add_argument("--ungroup", help="composite name to dissolve")
    q.set_defaults(func=cmd_history)

    p = sub.add_parser("convert", parents=[common],
                       help="convert the recorded history into a workflow")
    p.add_argument("--all", action="store_true",
                   help="treat every command as relevant, skip classification")
    p.add_argument("--select", help="comma-separated history indices")
    p.add_argument("--out", help="Snakefile path (default: workdir/Snakefile)")
    p.add_argument("--mode", choices=["auto", "internal", "binary"], default="auto")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("docs", parents=[common],
                       help="generate markdown docs for the workflow")
    p.add_argument("--out")
    p.set_defaults(func=cmd_docs)

    p = sub.add_parser("notebook", help="notebook analysis and export")
    nb_sub = p.add_subparsers(dest="notebook_cmd", required=True)
    q = nb_sub.add_parser("analyze", parents=[common])
    q.add_argument("file")
    q.add_argument("--json", action="store_true")
    q.add_argument("--session", help="save the session state to this path")
    q.set_defaults(func=cmd_notebook)
    q = nb_sub.add_parser("export", parents=[common])
    q.add_argument("file", nargs="?")
    q.add_argument("--session", help="load session state from this path")
    q.add_argument("--mode", choices=["auto", "internal", "binary"], default="auto")
    q.set_defaults(func=cmd_notebook)

    p = sub.add_parser("serve", parents=[common],
                       help="serve the HTTP API and review UI")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("chat", parents=[common], help="one assistant turn")
    p.add_argument("--message", required=True)
    p.add_argument("--session", help="notebook session file to act on")
    p.add_argument("--apply", action="store_true",
                   help="apply actions even when confirmation is on")
    p.set_defaults(func=cmd_chat)

    return parser


_OVERRIDE_KEYS = ("backend", "replay_path", "model_name", "endpoint",
                  "max_iterations", "ui_port")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides: dict[str, object] = {}
    for key in _OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    for feature in getattr(args, "disable", []):
        overrides[feature] = False
    try:
        config = load_config(args.workdir, overrides=overrides)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    try:
        return args.func(args, config)
    except _USER_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
