"""Five-step conversion of recorded shell history into a workflow.

Context gathering, rule drafting, config extraction, deterministic
post-processing with merge, and the validation loop.  A ConversionJob
tracks progress through those stages and keeps partial artifacts when a
stage fails.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

from .history import History, HistoryUnit
from .llm.gateway import FEATURE_WORKFLOW_CONTEXT, Gateway, ModelProfile
from .llm.prompts import build_exchange
from .smk import (
    ConfigTable,
    IOEntry,
    Rule,
    ShellAction,
    SmkParseError,
    Workflow,
    extract_config,
    fix_common_errors,
    merge,
    parse_workflow,
    render,
)
from .smk.model import RawSegment, ensure_configfile_header, render_rule
from .validation import FixOutcome, validate_and_correct

STAGES = ("drafting", "configuring", "postprocessing", "validating", "done", "failed")

# Existing workflows beyond this size are truncated rule-wise for prompts.
MAX_CONTEXT_CHARS = 20_000


class PipelineError(RuntimeError):
    pass


@dataclass
class ContextBundle:
    workdir: str
    workflows: list[tuple[str, Workflow]] = field(default_factory=list)
    configs: list[tuple[str, ConfigTable]] = field(default_factory=list)

    @property
    def primary_workflow(self) -> Workflow | None:
        return self.workflows[0][1] if self.workflows else None

    @property
    def primary_config(self) -> ConfigTable:
        return self.configs[0][1].copy() if self.configs else ConfigTable()


def gather_context(workdir: str | Path, max_depth: int = 3) -> ContextBundle:
    """Collect Snakefiles and config YAMLs within a few directory levels."""
    workdir = Path(workdir)
    if not workdir.is_dir():
        raise PipelineError(f"not a directory: {workdir}")
    bundle = ContextBundle(workdir=str(workdir))
    workflow_paths: list[Path] = []
    config_paths: list[Path] = []
    root_depth = len(workdir.parts)
    for dirpath, dirnames, filenames in os.walk(workdir):
        depth = len(Path(dirpath).parts) - root_depth
        if depth >= max_depth:
            dirnames[:] = []
        dirnames[:] = [d for d in dirnames if not d.startswith(".")]
        for filename in sorted(filenames):
            path = Path(dirpath) / filename
            if filename == "Snakefile" or filename.endswith(".smk"):
                workflow_paths.append(path)
            elif (filename.startswith("config")
                  and filename.endswith((".yaml", ".yml"))):
                config_paths.append(path)
    for path in sorted(workflow_paths):
        text = path.read_text()
        try:
            workflow = parse_workflow(text)
        except SmkParseError:
            # Unparseable files still count as context, kept verbatim.
            workflow = Workflow(items=[RawSegment(text)])
        bundle.workflows.append((str(path), workflow))
    for path in sorted(config_paths):
        try:
            table = ConfigTable.from_yaml(path.read_text())
        except Exception:
            # Malformed YAML is context we cannot use; skip it.
            continue
        bundle.configs.append((str(path), table))
    return bundle


@dataclass
class ConversionJob:
    context: ContextBundle
    selection: list[int] | None = None
    stage: str = "drafting"
    error: str | None = None
    stage_history: list[str] = field(default_factory=lambda: ["drafting"])
    draft: list[Rule] = field(default_factory=list)
    config: ConfigTable = field(default_factory=ConfigTable)
    workflow: Workflow | None = None
    text: str = ""
    outcome: FixOutcome | None = None

    def advance(self, stage: str) -> None:
        order = STAGES.index
        if order(stage) <= order(self.stage) or self.stage == "failed":
            raise PipelineError(f"cannot advance from {self.stage} to {stage}")
        self.stage = stage
        self.stage_history.append(stage)

    def fail(self, message: str) -> None:
        self.error = message
        self.stage = "failed"
        self.stage_history.append("failed")

    def snapshot(self) -> dict:
        return {
            "stage": self.stage,
            "stages": list(self.stage_history),
            "error": self.error,
            "selection": self.selection,
            "draft": [render_rule(r) for r in self.draft],
            "config": dict(self.config.entries),
            "workflow": self.text,
        }


def _context_workflow_text(bundle: ContextBundle) -> str:
    texts = []
    for _, workflow in bundle.workflows:
        text = render(workflow)
        if len(text) > MAX_CONTEXT_CHARS:
            # Keep the newest rules: later file regions win the budget.
            kept: list[str] = []
            size = 0
            for rule in reversed(workflow.rules):
                piece = render_rule(rule)
                if size + len(piece) > MAX_CONTEXT_CHARS:
                    break
                kept.append(piece)
                size += len(piece)
            text = "\n\n".join(reversed(kept))
        texts.append(text)
    return "\n\n".join(texts)


def draft_rules(units: list[HistoryUnit], history: History,
                context: ContextBundle, gateway: Gateway,
                profile: ModelProfile) -> list[Rule]:
    """First pass: one rule per logical command, via the model."""
    import json

    if not units:
        raise PipelineError("no relevant commands selected")
    entries = []
    for unit in units:
        entry: dict = {"command": unit.text}
        # The active conda environment at record time, if it was not base.
        env_name = history.entries[unit.indices[0]].env.get("CONDA_DEFAULT_ENV")
        if env_name and env_name != "base":
            entry["env"] = env_name
        entries.append(entry)
    workflow_text = ""
    if profile.enabled(FEATURE_WORKFLOW_CONTEXT):
        workflow_text = _context_workflow_text(context)
    config_text = ""
    if context.configs:
        config_text = context.configs[0][1].to_yaml()
    exchange = build_exchange(
        "draft_rules",
        commands=json.dumps(entries, indent=1),
        workflow=workflow_text or "(none)",
        config=config_text or "(none)",
    )
    shape = {"rules": [{"name": str, "shell": str}]}
    reply = gateway.complete_structured(profile, exchange, shape)
    rules = []
    for item in reply["rules"]:
        rule = Rule(
            name=item["name"],
            inputs=[IOEntry(str(v)) for v in item.get("input", [])],
            outputs=[IOEntry(str(v)) for v in item.get("output", [])],
            params=[IOEntry(str(v), key=str(k))
                    for k, v in sorted(item.get("params", {}).items())],
            action=ShellAction(item["shell"]),
        )
        if item.get("log"):
            rule.log_path = str(item["log"])
        if item.get("conda"):
            rule.conda_env = f"envs/{item['conda']}.yaml"
        try:
            rule.validate_generated()
        except SmkParseError as err:
            raise PipelineError(f"drafted rule rejected: {err}") from err
        rules.append(rule)
    if not rules:
        raise PipelineError("model produced no rules")
    return rules


def convert(job: ConversionJob, history: History, gateway: Gateway,
            profile: ModelProfile, validate_mode: str = "auto") -> Workflow:
    """Run all stages on the job, leaving partial artifacts on failure."""
    try:
        units = history.relevant_units()
        if job.selection is not None:
            chosen = set(job.selection)
            units = [u for u in units if set(u.indices) & chosen]
        job.draft = draft_rules(units, history, job.context, gateway, profile)

        job.advance("configuring")
        table = job.context.primary_config
        rules, job.config = extract_config(job.draft, table, gateway, profile)

        job.advance("postprocessing")
        fixed_text = fix_common_errors(render(Workflow(items=list(rules))))
        fixed_rules = parse_workflow(fixed_text).rules
        existing = job.context.primary_workflow
        if existing is not None:
            workflow = merge(existing, fixed_rules)
        else:
            workflow = Workflow(items=list(fixed_rules))
        if job.config.entries:
            workflow = ensure_configfile_header(workflow)
        job.text = render(workflow)

        job.advance("validating")
        job.outcome = validate_and_correct(
            job.text, gateway, profile, mode=validate_mode, config=job.config)
        job.text = job.outcome.text
        job.workflow = parse_workflow(job.text)

        job.advance("done")
        return job.workflow
    except Exception as err:
        job.fail(str(err))
        raise


def generate_docs(history: History, workflow: Workflow | None,
                  gateway: Gateway, profile: ModelProfile) -> str:
    """Markdown documentation for the workflow and recorded session."""
    rules = workflow.rules if workflow is not None else []
    units = history.units()
    if not rules and not units:
        raise PipelineError("nothing to document: empty workflow and history")
    exchange = build_exchange(
        "generate_docs",
        workflow=render(workflow) if workflow is not None else "(none)",
        history="\n".join(u.text for u in units) or "(none)",
    )
    return gateway.complete(profile, exchange)
