"""Workflow validation and iterative correction.

Validation prefers the real snakemake binary (lint plus dry run) and
falls back to internal structural checks when it is not installed.  The
correction loop asks the model for a direct fix first and switches to a
step-back strategy (analyze, plan, then apply) for later rounds.
"""

from __future__ import annotations

import difflib
import json
import re
import shutil
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .llm.gateway import FEATURE_ITERATIVE_VALIDATION, Gateway, ModelProfile
from .smk.fixers import fix_common_errors
from .smk.model import ConfigTable, ShellAction, SmkParseError, parse_workflow

_RECOGNIZED_SECTIONS = ("input", "output", "params", "log", "conda", "shell", "script")

# Snakemake sections we keep as raw text rather than model; their presence
# is reported as a warning, not an error.
_TOLERATED_SECTIONS = {
    "threads", "resources", "priority", "message", "benchmark", "version",
    "shadow", "group", "cache", "wildcard_constraints", "container",
    "singularity", "envmodules", "retries", "default_target", "localrule",
    "run", "notebook", "wrapper", "template_engine", "handover",
}

_HEADER_NO_COLON = re.compile(r"^rule\s+[A-Za-z_]\w*\s*$", re.MULTILINE)
_HEADER_ANY = re.compile(r"^rule\s+([^\s:]+)\s*:", re.MULTILINE)
_SECTION_WORD = re.compile(r"^\s+([a-z_]+)\s*:", re.MULTILINE)
_IDENT = re.compile(r"^[A-Za-z_]\w*$")
_RULE_REF = re.compile(r"rules\.(\w+)")
_PLAIN_WILDCARD = re.compile(r"(?<!\{)\{([A-Za-z_]\w*)\}")
_NAMESPACED_REF = re.compile(r"(?<!\{)\{(input|output|params|wildcards|log|config)(?:\.(\w+))?[^{}]*\}")


@dataclass
class Finding:
    severity: str
    message: str
    line: int | None = None
    source: str = "internal"

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "message": self.message,
            "line": self.line,
            "source": self.source,
        }


@dataclass
class ValidationReport:
    ok: bool
    findings: list[Finding] = field(default_factory=list)
    mode: str = "internal"

    @property
    def errors(self) -> list[Finding]:
        return [f for f in self.findings if f.severity == "error"]

    def to_dict(self) -> dict:
        return {
            "ok": self.ok,
            "mode": self.mode,
            "findings": [f.to_dict() for f in self.findings],
        }


def snakemake_available(exe: str = "snakemake") -> bool:
    return shutil.which(exe) is not None


def validate(
    text: str,
    mode: str = "auto",
    config: ConfigTable | None = None,
    exe: str = "snakemake",
) -> ValidationReport:
    if mode == "auto":
        mode = "binary" if snakemake_available(exe) else "internal"
    if mode == "binary":
        return _validate_binary(text, config, exe)
    if mode == "internal":
        findings = internal_checks(text, config)
        return ValidationReport(
            ok=not any(f.severity == "error" for f in findings),
            findings=findings,
            mode="internal",
        )
    raise ValueError(f"unknown validation mode {mode!r}")


# ---------------------------------------------------------------------------
# internal structural checks


def internal_checks(text: str, config: ConfigTable | None = None) -> list[Finding]:
    findings: list[Finding] = []
    line_of = _line_index(text)

    for m in _HEADER_NO_COLON.finditer(text):
        findings.append(Finding("error", "rule header is missing ':'", line_of(m.start())))
    seen_names: dict[str, int] = {}
    for m in _HEADER_ANY.finditer(text):
        name = m.group(1)
        if not _IDENT.match(name):
            findings.append(Finding(
                "error", f"rule name {name!r} is not a valid identifier", line_of(m.start())
            ))
        seen_names[name] = seen_names.get(name, 0) + 1
    for name, count in seen_names.items():
        if count > 1:
            findings.append(Finding("error", f"duplicate rule name: {name}"))

    for m in _SECTION_WORD.finditer(text):
        word = m.group(1)
        if word in _RECOGNIZED_SECTIONS:
            continue
        if word in _TOLERATED_SECTIONS:
            findings.append(Finding(
                "warning", f"section '{word}' is kept as raw text", line_of(m.start())
            ))
            continue
        close = difflib.get_close_matches(word, _RECOGNIZED_SECTIONS, n=1, cutoff=0.7)
        hint = f" (did you mean '{close[0]}'?)" if close else ""
        findings.append(Finding(
            "error", f"unknown section '{word}'{hint}", line_of(m.start())
        ))

    for m in re.finditer(r"^\s*shell\s*:\s*([^\s\"'].*)$", text, re.MULTILINE):
        findings.append(Finding(
            "error", "shell command is not a quoted string", line_of(m.start())
        ))

    try:
        workflow = parse_workflow(text)
    except SmkParseError:
        return findings
    known = workflow.all_names()

    for m in _RULE_REF.finditer(text):
        if m.group(1) not in known:
            findings.append(Finding(
                "error",
                f"reference to undefined rule '{m.group(1)}'",
                line_of(m.start()),
            ))

    for rule in workflow.rules:
        loc = None
        header = re.search(rf"^rule\s+{re.escape(rule.name)}\s*:", text, re.MULTILINE)
        if header:
            loc = line_of(header.start())
        if rule.outputs and rule.action is None:
            findings.append(Finding(
                "error", f"rule {rule.name} has outputs but no action", loc
            ))
        if not rule.outputs and rule.action is not None and not rule.inputs:
            findings.append(Finding(
                "warning", f"rule {rule.name} declares no inputs or outputs", loc
            ))
        findings.extend(_check_references(rule, loc))

    if config is not None:
        for m in re.finditer(r"config\[[\"']([^\"']+)[\"']\]", text):
            if m.group(1) not in config:
                findings.append(Finding(
                    "warning",
                    f"config key '{m.group(1)}' is not defined",
                    line_of(m.start()),
                ))
    return findings


def _check_references(rule, loc) -> list[Finding]:
    findings: list[Finding] = []

    def keys(entries) -> set[str]:
        return {e.key for e in entries if e.key}

    def wildcards(entries) -> set[str]:
        names: set[str] = set()
        for e in entries:
            if not e.is_expr:
                names.update(_PLAIN_WILDCARD.findall(e.value))
        return names

    out_wc = wildcards(rule.outputs)
    for wc in wildcards(rule.inputs) - out_wc:
        findings.append(Finding(
            "error",
            f"rule {rule.name}: input wildcard '{{{wc}}}' is not bound by any output",
            loc,
        ))

    if not isinstance(rule.action, ShellAction) or rule.action.is_expr:
        return findings
    body = rule.action.body
    stripped = body.replace("{{", "").replace("}}", "")
    if stripped.count("{") != stripped.count("}"):
        findings.append(Finding(
            "error", f"rule {rule.name}: unbalanced braces in shell command", loc
        ))
        return findings
    for m in _NAMESPACED_REF.finditer(body):
        space, attr = m.group(1), m.group(2)
        if space == "input":
            if not rule.inputs:
                findings.append(Finding(
                    "error", f"rule {rule.name}: shell references {{input}} but none declared", loc
                ))
            elif attr and attr not in keys(rule.inputs):
                findings.append(Finding(
                    "error", f"rule {rule.name}: no input named '{attr}'", loc
                ))
        elif space == "output":
            if attr and attr not in keys(rule.outputs):
                findings.append(Finding(
                    "error", f"rule {rule.name}: no output named '{attr}'", loc
                ))
        elif space == "params":
            if attr and attr not in keys(rule.params):
                findings.append(Finding(
                    "error", f"rule {rule.name}: no param named '{attr}'", loc
                ))
        elif space == "log":
            if rule.log_path is None:
                findings.append(Finding(
                    "error", f"rule {rule.name}: shell references {{log}} but no log declared", loc
                ))
        elif space == "wildcards":
            if attr and attr not in out_wc:
                findings.append(Finding(
                    "error",
                    f"rule {rule.name}: wildcard '{attr}' does not appear in outputs",
                    loc,
                ))
    return findings


def _line_index(text: str):
    starts = [0]
    for i, ch in enumerate(text):
        if ch == "\n":
            starts.append(i + 1)

    def line_of(offset: int) -> int:
        lo, hi = 0, len(starts) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if starts[mid] <= offset:
                lo = mid
            else:
                hi = mid - 1
        return lo + 1

    return line_of


# ---------------------------------------------------------------------------
# snakemake binary mode


def _validate_binary(text: str, config: ConfigTable | None, exe: str) -> ValidationReport:
    findings: list[Finding] = []
    with tempfile.TemporaryDirectory() as tmp:
        snakefile = Path(tmp) / "Snakefile"
        snakefile.write_text(text)
        if config is not None:
            (Path(tmp) / "config.yaml").write_text(config.to_yaml())
        for args, source in ((["--lint"], "lint"), (["-n"], "dryrun")):
            proc = subprocess.run(
                [exe, "-s", str(snakefile), "-d", tmp, *args],
                capture_output=True,
                text=True,
                timeout=120,
            )
            if proc.returncode != 0 or source == "lint":
                parsed = parse_snakemake_stderr(proc.stderr + "\n" + proc.stdout)
                for f in parsed:
                    f.source = source
                findings.extend(parsed)
    ok = not any(f.severity == "error" for f in findings)
    return ValidationReport(ok=ok, findings=findings, mode="binary")


_EXC_LINE = re.compile(
    r"^(\w+(?:Exception|Error))( in rule (\w+))?( in line (\d+))?.*:\s*$"
)
_LINT_HEADER = re.compile(r"^Lints for rule (\w+) \(line (\d+)")
_SYNTAX_IN_LINE = re.compile(r"^(\w*(?:SyntaxError|Error)) in line (\d+)")

# Exceptions that reflect missing data files rather than broken structure;
# reported but not treated as fatal.
_SOFT_EXCEPTIONS = {"MissingInputException", "IncompleteFilesException"}


def parse_snakemake_stderr(output: str) -> list[Finding]:
    findings: list[Finding] = []
    lines = output.splitlines()
    i = 0
    while i < len(lines):
        line = lines[i]
        m = _EXC_LINE.match(line.strip()) or _SYNTAX_IN_LINE.match(line.strip())
        if m:
            kind = m.group(1)
            line_no = None
            nums = re.search(r"line (\d+)", line)
            if nums:
                line_no = int(nums.group(1))
            detail: list[str] = []
            j = i + 1
            while j < len(lines) and lines[j].strip() and not _EXC_LINE.match(lines[j].strip()):
                detail.append(lines[j].strip())
                j += 1
            severity = "warning" if kind in _SOFT_EXCEPTIONS else "error"
            message = kind + (": " + " ".join(detail[:3]) if detail else "")
            findings.append(Finding(severity, message, line_no, source="dryrun"))
            i = j
            continue
        m = _LINT_HEADER.match(line.strip())
        if m:
            rule_name, line_no = m.group(1), int(m.group(2))
            j = i + 1
            while j < len(lines) and not _LINT_HEADER.match(lines[j].strip()):
                bullet = re.match(r"^\s*\*\s*(.+)$", lines[j])
                if bullet:
                    findings.append(Finding(
                        "warning",
                        f"lint ({rule_name}): {bullet.group(1)}",
                        int(line_no),
                        source="lint",
                    ))
                j += 1
            i = j
            continue
        i += 1
    return findings


# ---------------------------------------------------------------------------
# python script checks


def validate_scripts(sources: dict[str, str]) -> list[Finding]:
    findings: list[Finding] = []
    for name, source in sources.items():
        try:
            compile(source, name, "exec")
        except SyntaxError as err:
            findings.append(Finding(
                "error", f"{name}: {err.msg}", err.lineno, source="script"
            ))
    return findings


# ---------------------------------------------------------------------------
# iterative correction


@dataclass
class FixOutcome:
    text: str
    report: ValidationReport
    rounds: int
    step_back_used: bool
    reports: list[ValidationReport] = field(default_factory=list)


def fix_direct(text: str, findings: list[Finding], gateway: Gateway, profile: ModelProfile) -> str:
    from .llm.prompts import build_exchange

    exchange = build_exchange(
        "fix_direct",
        workflow=text,
        findings=json.dumps([f.to_dict() for f in findings]),
    )
    return gateway.complete(profile, exchange)


def fix_stepback(text: str, findings: list[Finding], gateway: Gateway, profile: ModelProfile) -> str:
    from .llm.prompts import build_exchange

    payload = json.dumps([f.to_dict() for f in findings])
    analysis = gateway.complete_structured(
        profile,
        build_exchange("fix_analyze", workflow=text, findings=payload),
        {"analysis": str, "plan": [str]},
    )
    exchange = build_exchange(
        "fix_apply",
        workflow=text,
        findings=payload,
        analysis=analysis["analysis"],
        plan="\n".join(f"- {step}" for step in analysis["plan"]),
    )
    return gateway.complete(profile, exchange)


def validate_and_correct(
    text: str,
    gateway: Gateway,
    profile: ModelProfile,
    max_rounds: int = 4,
    stepback_after: int = 3,
    mode: str = "auto",
    config: ConfigTable | None = None,
) -> FixOutcome:
    """Validate and repair until clean or the round budget runs out.

    Rounds 1..stepback_after-1 use the direct fix; later rounds step back
    to an analyze/plan/apply sequence.  The returned outcome always ends
    with a fresh validation of the final text.
    """
    reports: list[ValidationReport] = []
    step_back_used = False
    if not profile.enabled(FEATURE_ITERATIVE_VALIDATION):
        report = validate(text, mode=mode, config=config)
        return FixOutcome(text, report, rounds=0, step_back_used=False, reports=[report])
    for round_no in range(1, max_rounds + 1):
        report = validate(text, mode=mode, config=config)
        reports.append(report)
        if report.ok:
            return FixOutcome(text, report, round_no - 1, step_back_used, reports)
        if round_no < stepback_after:
            fixed = fix_direct(text, report.errors, gateway, profile)
        else:
            step_back_used = True
            fixed = fix_stepback(text, report.errors, gateway, profile)
        text = fix_common_errors(fixed)
    final = validate(text, mode=mode, config=config)
    reports.append(final)
    return FixOutcome(text, final, max_rounds, step_back_used, reports)
