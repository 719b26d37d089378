"""Structured model of a Snakemake workflow.

The parser is deliberately tolerant: rule blocks that use only the
recognized sections (input, output, params, log, conda, shell, script,
plus an optional docstring) become structured ``Rule`` objects, and
everything else is kept verbatim as ``RawSegment`` text.  Rendering a
parsed file therefore never loses text it did not understand.
"""

from __future__ import annotations

import ast
import copy
import re
from dataclasses import dataclass, field, replace

import yaml


class SmkParseError(ValueError):
    """Raised when a workflow file cannot be modeled safely."""


class _FallbackRaw(Exception):
    """Internal signal: keep the current rule block as raw text."""


_RULE_HEADER = re.compile(r"^rule\s+([A-Za-z_]\w*)\s*:\s*$")
_RAW_RULE_NAME = re.compile(r"^\s*(?:rule|checkpoint)\s+([A-Za-z_]\w*)\s*:", re.MULTILINE)
_SECTION_LINE = re.compile(r"^(\s+)([a-z_]+)\s*:(.*)$")
_IDENT = re.compile(r"^[A-Za-z_]\w*$")

_SECTIONS = ("input", "output", "params", "log", "conda", "shell", "script")


@dataclass
class IOEntry:
    """One item of an input/output/params section.

    ``value`` holds the bare string for plain string literals and the
    verbatim expression text otherwise (``is_expr`` distinguishes them).
    """

    value: str
    key: str | None = None
    is_expr: bool = False


@dataclass
class ShellAction:
    body: str
    is_expr: bool = False

    @property
    def kind(self) -> str:
        return "shell"


@dataclass
class ScriptAction:
    path: str
    is_expr: bool = False

    @property
    def kind(self) -> str:
        return "script"


Action = ShellAction | ScriptAction


@dataclass
class Rule:
    name: str
    inputs: list[IOEntry] = field(default_factory=list)
    outputs: list[IOEntry] = field(default_factory=list)
    params: list[IOEntry] = field(default_factory=list)
    log_path: str | None = None
    conda_env: str | None = None
    action: Action | None = None
    docstring: str | None = None

    def validate_generated(self) -> None:
        """Check the invariants expected of newly generated rules.

        Target rules (inputs only, no action) are exempt from the
        non-empty output requirement.
        """
        if not _IDENT.match(self.name):
            raise SmkParseError(f"rule name {self.name!r} is not an identifier")
        is_target = self.action is None and not self.outputs
        if is_target:
            if not self.inputs:
                raise SmkParseError(f"rule {self.name}: target rule has no inputs")
            return
        if self.action is None:
            raise SmkParseError(f"rule {self.name}: missing shell or script action")
        body = self.action.body if isinstance(self.action, ShellAction) else self.action.path
        if not body.strip():
            raise SmkParseError(f"rule {self.name}: empty action")
        if not self.outputs:
            raise SmkParseError(f"rule {self.name}: no outputs")

    def action_key(self) -> tuple[str, str] | None:
        """Kind plus whitespace-normalized action text, used for dedup."""
        if self.action is None:
            return None
        text = self.action.body if isinstance(self.action, ShellAction) else self.action.path
        return (self.action.kind, " ".join(text.split()))


@dataclass
class RawSegment:
    text: str


@dataclass
class Workflow:
    items: list[Rule | RawSegment] = field(default_factory=list)

    @property
    def rules(self) -> list[Rule]:
        return [it for it in self.items if isinstance(it, Rule)]

    @property
    def raw_segments(self) -> list[RawSegment]:
        return [it for it in self.items if isinstance(it, RawSegment)]

    def rule_names(self) -> list[str]:
        return [r.name for r in self.rules]

    def find_rule(self, name: str) -> Rule | None:
        for r in self.rules:
            if r.name == name:
                return r
        return None

    def all_names(self) -> set[str]:
        """Names of structured rules plus rule names spotted in raw text."""
        names = set(self.rule_names())
        for seg in self.raw_segments:
            names.update(_RAW_RULE_NAME.findall(seg.text))
        return names


# ---------------------------------------------------------------------------
# parsing


def parse_workflow(text: str) -> Workflow:
    lines = text.splitlines()
    items: list[Rule | RawSegment] = []
    raw_buf: list[str] = []

    def flush_raw() -> None:
        if not raw_buf:
            return
        # Trim blank edges: pure blank runs act as separators.
        start, end = 0, len(raw_buf)
        while start < end and not raw_buf[start].strip():
            start += 1
        while end > start and not raw_buf[end - 1].strip():
            end -= 1
        if start < end:
            items.append(RawSegment("\n".join(raw_buf[start:end])))
        raw_buf.clear()

    i = 0
    n = len(lines)
    while i < n:
        line = lines[i]
        m = _RULE_HEADER.match(line)
        if not m:
            raw_buf.append(line)
            i += 1
            continue
        # Collect the indented block belonging to this rule.
        j = i + 1
        while j < n and (not lines[j].strip() or lines[j][0] in " \t"):
            j += 1
        # Trailing blank lines are separators, not part of the block.
        end = j
        while end > i + 1 and not lines[end - 1].strip():
            end -= 1
        block = lines[i:end]
        try:
            rule = _parse_rule_block(m.group(1), block[1:])
        except _FallbackRaw:
            flush_raw()
            items.append(RawSegment("\n".join(block)))
        else:
            flush_raw()
            items.append(rule)
        i = end
    flush_raw()

    seen: set[str] = set()
    for r in (it for it in items if isinstance(it, Rule)):
        if r.name in seen:
            raise SmkParseError(f"duplicate rule name: {r.name}")
        seen.add(r.name)
    return Workflow(items=items)


def _parse_rule_block(name: str, body: list[str]) -> Rule:
    rule = Rule(name=name)
    idx = 0
    n = len(body)

    # Skip leading blanks, then pick up an optional docstring.
    while idx < n and not body[idx].strip():
        idx += 1
    if idx < n and body[idx].lstrip()[:3] in ('"""', "'''"):
        doc_text, idx = _consume_string_block(body, idx)
        try:
            value = ast.literal_eval(doc_text)
        except (ValueError, SyntaxError):
            raise _FallbackRaw
        if not isinstance(value, str):
            raise _FallbackRaw
        rule.docstring = value

    seen_sections: set[str] = set()
    while idx < n:
        if not body[idx].strip():
            idx += 1
            continue
        m = _SECTION_LINE.match(body[idx])
        if not m:
            raise _FallbackRaw
        indent, section, inline = m.group(1), m.group(2), m.group(3)
        if section not in _SECTIONS or section in seen_sections:
            raise _FallbackRaw
        seen_sections.add(section)
        chunks = [inline] if inline.strip() else []
        idx += 1
        while idx < n:
            cur = body[idx]
            if not cur.strip():
                idx += 1
                continue
            cur_indent = cur[: len(cur) - len(cur.lstrip())]
            if len(cur_indent) <= len(indent):
                break
            chunks.append(cur)
            idx += 1
        value_text = "\n".join(chunks).strip()
        if not value_text:
            raise _FallbackRaw
        _check_no_comment(value_text)
        _apply_section(rule, section, value_text)
    return rule


def _consume_string_block(body: list[str], idx: int) -> tuple[str, int]:
    """Collect the source text of a triple-quoted string starting at idx."""
    first = body[idx].lstrip()
    quote = first[:3]
    collected = [first]
    if first.count(quote) >= 2 and len(first) > 3:
        return first, idx + 1
    idx += 1
    while idx < len(body):
        collected.append(body[idx])
        if quote in body[idx]:
            return "\n".join(collected), idx + 1
        idx += 1
    raise _FallbackRaw


def _check_no_comment(text: str) -> None:
    """Reject section values with # comments so no text is dropped silently."""
    in_str: str | None = None
    i = 0
    while i < len(text):
        ch = text[i]
        if in_str:
            if ch == "\\":
                i += 2
                continue
            if text.startswith(in_str, i):
                i += len(in_str)
                in_str = None
                continue
        elif ch in "\"'":
            if text.startswith(ch * 3, i):
                in_str = ch * 3
                i += 3
                continue
            in_str = ch
        elif ch == "#":
            raise _FallbackRaw
        i += 1


def _apply_section(rule: Rule, section: str, value_text: str) -> None:
    if section in ("input", "output", "params"):
        entries = [_parse_entry(part) for part in _split_top_level(value_text)]
        setattr(rule, {"input": "inputs", "output": "outputs", "params": "params"}[section], entries)
        return
    if section == "log":
        rule.log_path = _require_str_literal(value_text)
        return
    if section == "conda":
        rule.conda_env = _require_str_literal(value_text)
        return
    if section == "shell":
        rule.action = ShellAction(body=_require_str_literal(value_text))
        return
    if section == "script":
        rule.action = ScriptAction(path=_require_str_literal(value_text))
        return
    raise _FallbackRaw


def _require_str_literal(text: str) -> str:
    try:
        value = ast.literal_eval(text)
    except (ValueError, SyntaxError):
        raise _FallbackRaw
    if not isinstance(value, str):
        raise _FallbackRaw
    return value


def _split_top_level(text: str) -> list[str]:
    """Split on commas that sit outside brackets and string literals."""
    parts: list[str] = []
    buf: list[str] = []
    depth = 0
    in_str: str | None = None
    i = 0
    while i < len(text):
        ch = text[i]
        if in_str:
            buf.append(ch)
            if ch == "\\":
                if i + 1 < len(text):
                    buf.append(text[i + 1])
                i += 2
                continue
            if text.startswith(in_str, i):
                buf.append(in_str[1:] if len(in_str) > 1 else "")
                i += len(in_str)
                in_str = None
                continue
            i += 1
            continue
        if ch in "\"'":
            if text.startswith(ch * 3, i):
                in_str = ch * 3
                buf.append(ch * 3)
                i += 3
                continue
            in_str = ch
            buf.append(ch)
            i += 1
            continue
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(buf))
            buf = []
            i += 1
            continue
        buf.append(ch)
        i += 1
    parts.append("".join(buf))
    out = [p.strip() for p in parts]
    if out and not out[-1]:
        out.pop()
    if any(not p for p in out):
        raise _FallbackRaw
    return out


def _parse_entry(text: str) -> IOEntry:
    key = None
    m = re.match(r"^([A-Za-z_]\w*)\s*=\s*(?![=])", text)
    if m:
        key = m.group(1)
        text = text[m.end():].strip()
    value_text = _normalize_expr(text)
    try:
        value = ast.literal_eval(value_text)
    except (ValueError, SyntaxError):
        return IOEntry(value=value_text, key=key, is_expr=True)
    if isinstance(value, str):
        return IOEntry(value=value, key=key, is_expr=False)
    return IOEntry(value=value_text, key=key, is_expr=True)


def _normalize_expr(text: str) -> str:
    return " ".join(line.strip() for line in text.splitlines()).strip()


# ---------------------------------------------------------------------------
# rendering


def render(workflow: Workflow) -> str:
    parts = []
    for item in workflow.items:
        if isinstance(item, RawSegment):
            parts.append(item.text)
        else:
            parts.append(render_rule(item))
    out = "\n\n".join(parts)
    return out + "\n" if out else ""


def render_rule(rule: Rule) -> str:
    lines = [f"rule {rule.name}:"]
    if rule.docstring is not None:
        lines.append("    " + _quote_docstring(rule.docstring))
    for label, entries in (("input", rule.inputs), ("output", rule.outputs), ("params", rule.params)):
        if not entries:
            continue
        lines.append(f"    {label}:")
        for pos, entry in enumerate(entries):
            prefix = f"{entry.key}=" if entry.key else ""
            value = entry.value if entry.is_expr else _quote_string(entry.value)
            comma = "," if pos < len(entries) - 1 else ""
            lines.append(f"        {prefix}{value}{comma}")
    if rule.log_path is not None:
        lines.append("    log:")
        lines.append(f"        {_quote_string(rule.log_path)}")
    if rule.conda_env is not None:
        lines.append("    conda:")
        lines.append(f"        {_quote_string(rule.conda_env)}")
    if rule.action is not None:
        lines.append(f"    {rule.action.kind}:")
        text = rule.action.body if isinstance(rule.action, ShellAction) else rule.action.path
        if rule.action.is_expr:
            lines.append(f"        {text}")
        else:
            lines.append(f"        {_quote_string(text)}")
    return "\n".join(lines)


def _quote_string(value: str) -> str:
    if "\n" in value and '"""' not in value and not value.endswith('"') and "\\" not in value:
        return f'"""{value}"""'
    if '"' not in value and "\n" not in value and "\\" not in value:
        return f'"{value}"'
    return repr(value)


def _quote_docstring(value: str) -> str:
    if '"""' not in value and not value.endswith('"') and "\\" not in value:
        return f'"""{value}"""'
    return repr(value)


# ---------------------------------------------------------------------------
# merging


def merge(existing: Workflow, new_rules: list[Rule]) -> Workflow:
    """Append new rules, dropping duplicates and renaming collisions.

    A new rule is dropped when a rule with the same name and the same
    whitespace-normalized action already exists.  A name collision with a
    different action gets a numeric suffix (name_2, name_3, ...).
    Existing items are never modified.
    """
    def dedup_key(rule: Rule):
        # Action-less target rules are identified by what they ask for.
        action = rule.action_key()
        if action is None:
            action = ("target", "|".join(e.value for e in rule.inputs))
        return (rule.name, action)

    out = Workflow(items=list(existing.items))
    taken = existing.all_names()
    seen_keys = {dedup_key(r) for r in existing.rules}
    for rule in new_rules:
        key = dedup_key(rule)
        if key in seen_keys:
            continue
        name = rule.name
        if name in taken:
            counter = 2
            while f"{name}_{counter}" in taken:
                counter += 1
            rule = replace(copy.deepcopy(rule), name=f"{name}_{counter}")
        else:
            rule = copy.deepcopy(rule)
        taken.add(rule.name)
        seen_keys.add((rule.name, rule.action_key()))
        out.items.append(rule)
    return out


# ---------------------------------------------------------------------------
# config table


_KEY_RE = re.compile(r"^[a-z_][a-z0-9_]*$")


@dataclass
class ConfigTable:
    """Ordered key/value table backing a workflow config file."""

    entries: dict[str, object] = field(default_factory=dict)

    def set(self, key: str, value: object) -> None:
        if not _KEY_RE.match(key):
            raise ValueError(f"config key {key!r} is not identifier-like")
        self.entries[key] = value

    def get(self, key: str, default: object = None) -> object:
        return self.entries.get(key, default)

    def __contains__(self, key: str) -> bool:
        return key in self.entries

    def copy(self) -> "ConfigTable":
        return ConfigTable(entries=dict(self.entries))

    def to_yaml(self) -> str:
        if not self.entries:
            return ""
        return yaml.safe_dump(self.entries, sort_keys=False, default_flow_style=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ConfigTable":
        data = yaml.safe_load(text) if text.strip() else {}
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise SmkParseError("config file must hold a mapping")
        table = cls()
        for key, value in data.items():
            table.entries[str(key)] = value
        return table


def ensure_configfile_header(workflow: Workflow, config_path: str = "config.yaml") -> Workflow:
    """Prepend a configfile directive unless one is already present."""
    for seg in workflow.raw_segments:
        if re.search(r"^\s*configfile\s*:", seg.text, re.MULTILINE):
            return workflow
    header = RawSegment(f'configfile: "{config_path}"')
    return Workflow(items=[header, *workflow.items])
