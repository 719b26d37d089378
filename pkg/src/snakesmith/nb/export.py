"""Materialize a cell graph as scripts plus a Snakemake workflow.

Rule-labeled cells become standalone scripts invoked by rules; the data
flowing between them is serialized to files under results/.  Script
labeled cells become importable modules.  The assembled workflow then
passes through the same config extraction, cleanup, merge, and
validation stages as shell-derived workflows.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..smk import (
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
from ..smk.model import ensure_configfile_header
from .dag import Dag, check_label_constraints
from .serializers import (
    extension_for,
    import_lines,
    prefix_block,
    suffix_block,
)


class ExportError(ValueError):
    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = violations or []


@dataclass
class ArtifactSpec:
    variable: str
    producer: int
    path_template: str
    format: str


@dataclass
class CodegenPlan:
    cell: int
    prefix_block: str
    body: str
    suffix_block: str
    script_path: str
    rule: Rule | None = None

    def script_text(self) -> str:
        parts = [p for p in (self.prefix_block, self.body, self.suffix_block)
                 if p.strip()]
        return "\n\n".join(parts) + "\n"


# -- artifact assignment -------------------------------------------------

_TABULAR_CALLS = {
    "DataFrame", "Series", "read_csv", "read_table", "read_fwf",
    "read_parquet", "read_excel", "read_json",
}


def assign_artifacts(dag: Dag,
                     format_pins: dict[tuple[int, str], str] | None = None,
                     terminal_marks: list[tuple[int, str, str | None]] | None = None,
                     ) -> list[ArtifactSpec]:
    """One artifact file per variable a rule cell hands downstream."""
    violations = check_label_constraints(dag)
    if violations:
        raise ExportError(
            "label constraints violated: "
            + "; ".join(v.message for v in violations),
            violations)
    format_pins = format_pins or {}
    specs: dict[tuple[int, str], ArtifactSpec] = {}
    for edge in dag.edges:
        if dag.nodes[edge.src].label != "rule":
            continue
        key = (edge.src, edge.name)
        wildcard = edge.wildcard if edge.resolution == "wildcard" else None
        if key in specs:
            if wildcard and "{" not in specs[key].path_template:
                specs[key].path_template = _artifact_path(
                    dag.nodes[edge.src].name, edge.name,
                    specs[key].format, wildcard)
            continue
        fmt = format_pins.get(key) or _infer_format(
            dag.nodes[edge.src].source, edge.name)
        specs[key] = ArtifactSpec(
            variable=edge.name,
            producer=edge.src,
            path_template=_artifact_path(
                dag.nodes[edge.src].name, edge.name, fmt, wildcard),
            format=fmt,
        )
    for cell, variable, fmt in terminal_marks or []:
        if not 0 <= cell < len(dag.nodes):
            continue
        if dag.nodes[cell].label != "rule":
            raise ExportError(
                f"terminal artifact {variable!r} needs cell {cell} labeled rule")
        key = (cell, variable)
        fmt = fmt or format_pins.get(key) or _infer_format(
            dag.nodes[cell].source, variable)
        specs[key] = ArtifactSpec(
            variable=variable,
            producer=cell,
            path_template=_artifact_path(dag.nodes[cell].name, variable, fmt, None),
            format=fmt,
        )
    return sorted(specs.values(), key=lambda s: (s.producer, s.variable))


def _artifact_path(cell_name: str, variable: str, fmt: str,
                   wildcard: str | None) -> str:
    middle = f"{{{wildcard}}}/" if wildcard else ""
    return f"results/{cell_name}/{middle}{variable}{extension_for(fmt)}"


def _infer_format(source: str, variable: str) -> str:
    """Pick a format from the shape of the last assignment to `variable`."""
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return "generic_binary"
    value = None
    for node in ast.walk(tree):
        if isinstance(node, ast.Assign):
            targets, node_value = node.targets, node.value
        elif isinstance(node, ast.AnnAssign) and node.value is not None:
            targets, node_value = [node.target], node.value
        else:
            continue
        for target in targets:
            if isinstance(target, ast.Name) and target.id == variable:
                value = node_value
    if value is None:
        return "generic_binary"
    if isinstance(value, ast.Call):
        func = value.func
        name = func.attr if isinstance(func, ast.Attribute) else (
            func.id if isinstance(func, ast.Name) else "")
        if name in _TABULAR_CALLS:
            return "tabular_text"
        return "generic_binary"
    if isinstance(value, (ast.List, ast.ListComp)):
        return "json_text"
    if isinstance(value, ast.Dict):
        keys_ok = all(
            key is not None and isinstance(key, ast.Constant)
            and isinstance(key.value, str)
            for key in value.keys)
        if keys_ok:
            return "json_text"
    return "generic_binary"


# -- code block generation -------------------------------------------------

def generate_blocks(dag: Dag, specs: list[ArtifactSpec], gateway=None,
                    session=None, profile=None,
                    ) -> tuple[list[CodegenPlan], list[str]]:
    """Build per-cell plans: import header plus reads, body, writes."""
    spec_map = {(s.producer, s.variable): s for s in specs}
    findings: list[str] = []
    plans: list[CodegenPlan] = []
    for i, node in enumerate(dag.nodes):
        if node.label == "undecided":
            findings.append(f"cell {i} is undecided; no plan generated")
            continue
        cell_imports = list(session.cells[i].imports) if session else []
        sibling_imports = [
            f"from {dag.nodes[e.src].name} import {e.name}"
            for e in dag.in_edges(i)
            if dag.nodes[e.src].label == "script"
        ]
        if node.label == "script":
            header = _dedup(cell_imports + sibling_imports)
            plans.append(CodegenPlan(
                cell=i,
                prefix_block="\n".join(header),
                body=node.source.strip("\n"),
                suffix_block="",
                script_path=f"scripts/{node.name}.py",
            ))
            continue

        in_arts = [
            {"variable": e.name,
             "path": spec_map[(e.src, e.name)].path_template,
             "format": spec_map[(e.src, e.name)].format}
            for e in sorted(dag.in_edges(i), key=lambda e: (e.src, e.name))
            if (e.src, e.name) in spec_map
        ]
        out_arts = [
            {"variable": s.variable, "path": s.path_template, "format": s.format}
            for s in specs if s.producer == i
        ]
        for pos, item in enumerate(in_arts):
            item["arg"] = pos
        for pos, item in enumerate(out_arts):
            item["arg"] = len(in_arts) + pos

        prefix, suffix = _serializer_blocks(in_arts, out_arts, gateway, profile)
        formats = {a["format"] for a in in_arts + out_arts}
        header = []
        if in_arts or out_arts:
            header.append("import sys")
        if out_arts:
            header.append("import os")
        header += import_lines(formats) + cell_imports + sibling_imports
        header = _dedup(header)
        full_prefix = "\n".join(header + ([""] if header and prefix else []) + ([prefix] if prefix else []))

        rule = Rule(
            name=node.name,
            inputs=[IOEntry(a["path"]) for a in in_arts],
            outputs=[IOEntry(a["path"]) for a in out_arts],
        )
        shell = f"python scripts/{node.name}.py"
        if in_arts:
            shell += " {input}"
        if out_arts:
            shell += " {output}"
        rule.action = ShellAction(shell)
        plan = CodegenPlan(
            cell=i,
            prefix_block=full_prefix,
            body=node.source.strip("\n"),
            suffix_block=suffix,
            script_path=f"scripts/{node.name}.py",
            rule=rule,
        )
        try:
            compile(plan.script_text(), plan.script_path, "exec")
        except SyntaxError as err:
            findings.append(
                f"cell {i}: generated script does not parse ({err.msg} "
                f"line {err.lineno}); plan dropped")
            continue
        plans.append(plan)
    return plans, findings


def _serializer_blocks(in_arts: list[dict], out_arts: list[dict],
                       gateway, profile) -> tuple[str, str]:
    if not in_arts and not out_arts:
        return "", ""
    if gateway is None:
        return (prefix_block(in_arts, True), suffix_block(out_arts))
    import json as _json

    from ..llm.gateway import ModelProfile
    from ..llm.prompts import build_exchange

    exchange = build_exchange(
        "generate_blocks",
        inputs=_json.dumps(in_arts, indent=1),
        outputs=_json.dumps(out_arts, indent=1),
    )
    reply = gateway.complete_structured(
        profile or ModelProfile(), exchange, {"prefix": str, "suffix": str})
    return reply["prefix"], reply["suffix"]


def _dedup(lines: list[str]) -> list[str]:
    seen: set[str] = set()
    out = []
    for line in lines:
        if line and line not in seen:
            seen.add(line)
            out.append(line)
    return out


# -- change propagation ------------------------------------------------------

def propagate_change(plans: list[CodegenPlan], dag: Dag, edited_cell: int,
                     gateway=None, session=None, profile=None,
                     ) -> tuple[list[CodegenPlan], list[str]]:
    """Refresh the edited producer's suffix and its readers' prefixes.

    Every other plan object is returned untouched so callers can verify
    nothing else moved.
    """
    specs = assign_artifacts(
        dag,
        format_pins=getattr(session, "format_pins", None),
        terminal_marks=getattr(session, "terminal_marks", None),
    )
    fresh, findings = generate_blocks(dag, specs, gateway, session, profile)
    fresh_by_cell = {p.cell: p for p in fresh}
    readers = set(dag.successors(edited_cell))
    out: list[CodegenPlan] = []
    for plan in plans:
        new = fresh_by_cell.get(plan.cell)
        if new is None:
            out.append(plan)
            continue
        if plan.cell == edited_cell:
            plan.suffix_block = new.suffix_block
            plan.body = new.body
            if plan.rule is not None and new.rule is not None:
                plan.rule.outputs = new.rule.outputs
        elif plan.cell in readers:
            plan.prefix_block = new.prefix_block
            if plan.rule is not None and new.rule is not None:
                plan.rule.inputs = new.rule.inputs
        out.append(plan)
    return out, findings


# -- final assembly ------------------------------------------------------

@dataclass
class ExportResult:
    workflow: Workflow
    text: str
    config: ConfigTable
    scripts: dict[str, str]
    findings: list[str] = field(default_factory=list)
    outcome: object | None = None

    @property
    def ok(self) -> bool:
        report = getattr(self.outcome, "report", self.outcome)
        return bool(getattr(report, "ok", True))


def export(plans: list[CodegenPlan], dag: Dag, workdir: str | Path,
           gateway=None, profile=None, validate_mode: str = "auto",
           ) -> ExportResult:
    """Write scripts and Snakefile, then run the shared cleanup stages."""
    from ..llm.gateway import ModelProfile
    from ..validation import validate, validate_and_correct, validate_scripts

    if gateway is not None and profile is None:
        profile = ModelProfile()

    violations = check_label_constraints(dag)
    if violations:
        raise ExportError(
            "export refused: " + "; ".join(v.message for v in violations),
            violations)
    planned = {p.cell for p in plans}
    missing = [i for i, n in enumerate(dag.nodes)
               if n.label in ("rule", "script") and i not in planned]
    if missing:
        raise ExportError(f"no plan for cells {missing}; regenerate blocks first")

    workdir = Path(workdir)
    scripts: dict[str, str] = {}
    for plan in plans:
        text = plan.script_text()
        scripts[plan.script_path] = text
        target = workdir / plan.script_path
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(text)

    findings = [f"script issue: {f.message}"
                for f in validate_scripts(scripts)]

    rules = [plan.rule for plan in plans if plan.rule is not None]
    consumed = {e.value for r in rules for e in r.inputs}
    leaves = [e.value for r in rules for e in r.outputs
              if e.value not in consumed]
    if leaves:
        target_rule = Rule(name=_unique_rule_name("all", rules),
                           inputs=[IOEntry(p) for p in leaves])
        rules = [target_rule] + rules

    config = ConfigTable()
    config_path = workdir / "config.yaml"
    if config_path.exists():
        config = ConfigTable.from_yaml(config_path.read_text())
    if gateway is not None:
        rules, config = extract_config(rules, config, gateway, profile)

    workflow = Workflow(items=list(rules))
    snakefile = workdir / "Snakefile"
    if snakefile.exists():
        try:
            existing = parse_workflow(snakefile.read_text())
            workflow = merge(existing, rules)
        except SmkParseError as err:
            findings.append(f"existing Snakefile not merged: {err}")
    if config.entries:
        workflow = ensure_configfile_header(workflow)
    text = fix_common_errors(render(workflow))

    if gateway is not None:
        outcome = validate_and_correct(
            text, gateway, profile, mode=validate_mode, config=config)
        text = outcome.text
    else:
        outcome = validate(text, mode=validate_mode, config=config)

    snakefile.write_text(text)
    if config.entries:
        config_path.write_text(config.to_yaml())
    try:
        workflow = parse_workflow(text)
    except SmkParseError as err:
        findings.append(f"final workflow does not parse cleanly: {err}")
    return ExportResult(
        workflow=workflow,
        text=text,
        config=config,
        scripts=scripts,
        findings=findings,
        outcome=outcome,
    )


def _unique_rule_name(base: str, rules: list[Rule]) -> str:
    taken = {r.name for r in rules}
    if base not in taken:
        return base
    n = 2
    while f"{base}_{n}" in taken:
        n += 1
    return f"{base}_{n}"


def run_exported(workdir: str | Path, workflow: Workflow,
                 python: str = "python3") -> list[str]:
    """Execute exported rule scripts in topological (file) order.

    A minimal stand-in for a workflow engine used by tests and demos:
    runs each rule whose inputs exist, in declaration order, and returns
    the rule names executed.
    """
    import subprocess

    workdir = Path(workdir)
    executed: list[str] = []
    for rule in workflow.rules:
        if rule.action is None or rule.action.kind != "shell":
            continue
        if any("{" in e.value for e in rule.inputs + rule.outputs):
            continue
        command = rule.action.body
        command = command.replace(
            "{input}", " ".join(e.value for e in rule.inputs))
        command = command.replace(
            "{output}", " ".join(e.value for e in rule.outputs))
        command = re.sub(r"^python\b", python, command)
        proc = subprocess.run(
            command, shell=True, cwd=workdir,
            capture_output=True, text=True)
        if proc.returncode != 0:
            raise RuntimeError(
                f"rule {rule.name} failed ({proc.returncode}): {proc.stderr}")
        executed.append(rule.name)
    return executed
