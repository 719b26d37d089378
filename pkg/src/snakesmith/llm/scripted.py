"""Deterministic offline model backend.

Dispatches on the ``TASK:`` marker that every prompt template embeds and
answers from simple heuristics over the prompt's context sections.  The
same code doubles as the recording source for replay fixtures and as a
no-network fallback backend, so every handler must be a pure function of
the exchange text.
"""

from __future__ import annotations

import difflib
import json
import re
import shlex
from urllib.parse import urlencode

from ..smk.fixers import fix_common_errors

_TASK = re.compile(r"TASK: (\w+)")
_RETRY_MARKER = "Reply again with only the corrected JSON"

_STRUCTURED_TASKS = {
    "classify_relevance",
    "draft_rules",
    "extract_config",
    "fix_analyze",
    "refine_rwsets",
    "generate_blocks",
}

_IRRELEVANT_LEADERS = {
    "ls", "cd", "pwd", "cat", "less", "more", "man", "clear", "history",
    "which", "whoami", "top", "htop", "exit", "git", "vim", "vi", "nano",
    "emacs", "code", "du", "df", "ps", "kill", "open", "tree", "file",
    "stat", "env", "printenv", "export", "alias", "unalias", "touch",
    "echo", "date", "uname", "hostname", "type", "help",
}

_INTERPRETERS = {"python", "python3", "python2", "Rscript", "bash", "sh", "zsh", "perl", "node", "julia"}

_SUBCOMMAND_TOOLS = {
    "samtools", "bcftools", "bedtools", "bwa", "seqkit", "gatk",
    "picard", "salmon", "kallisto", "fastp", "datamash",
}

_OUTPUT_FLAGS = {"-o", "-O", "--output", "--out", "--outfile", "--output-file"}

_SHORT_FLAG_KEYS = {"-t": "threads", "-p": "threads", "-j": "jobs", "-n": "count", "-q": "quality"}


class ScriptedBackend:
    """Heuristic stand-in for a hosted model.

    ``mangle`` optionally corrupts the first structured reply of an
    exchange ("repairable" stays fixable by JSON repair, "retry" forces a
    structure retry); retried exchanges always get the clean answer.
    """

    def __init__(self, mangle: str | None = None):
        if mangle not in (None, "repairable", "retry"):
            raise ValueError(f"unknown mangle mode {mangle!r}")
        self.mangle = mangle

    def complete(self, profile, exchange) -> str:
        prompt = ""
        for role, content in reversed(exchange.messages):
            if role == "user":
                prompt = content
                break
        task_match = _TASK.search(prompt) or _TASK.search(exchange.content_key())
        task = task_match.group(1) if task_match else ""
        sections = _parse_sections(_first_user_message(exchange))
        handler = _HANDLERS.get(task, _answer_generic)
        clean = handler(sections, exchange)
        if (
            self.mangle
            and task in _STRUCTURED_TASKS
            and not any(_RETRY_MARKER in content for _, content in exchange.messages)
        ):
            if self.mangle == "retry":
                return '{"pardon": "let me restate that"}'
            return _make_repairable_mess(clean)
        return clean


def _first_user_message(exchange) -> str:
    for role, content in exchange.messages:
        if role == "user":
            return content
    return ""


def _parse_sections(prompt: str) -> dict[str, str]:
    sections: dict[str, str] = {}
    current: str | None = None
    buf: list[str] = []

    def flush() -> None:
        if current is not None:
            text = "\n".join(buf)
            cut = text.find("\n\nTASK:")
            if cut != -1:
                text = text[:cut]
            sections[current] = text.strip()

    for line in prompt.splitlines():
        if line.startswith("## "):
            flush()
            current = line[3:].strip()
            buf = []
        elif current is not None:
            buf.append(line)
    flush()
    return sections


def _make_repairable_mess(clean_json: str) -> str:
    body = clean_json
    idx = body.rfind("}")
    if idx != -1:
        body = body[:idx] + ",}" + body[idx + 1:]
    return f"```json\n{body}\n```"


# ---------------------------------------------------------------------------
# task handlers


def _classify_relevance(sections, exchange) -> str:
    entries = json.loads(sections.get("Shell history", "[]"))
    relevant = []
    for entry in entries:
        command = entry.get("command", "")
        tokens = command.split()
        if not tokens:
            continue
        leader = tokens[0].rsplit("/", 1)[-1]
        if leader not in _IRRELEVANT_LEADERS:
            relevant.append(entry["index"])
        elif leader == "echo" and ">" in command:
            relevant.append(entry["index"])
    return json.dumps({"relevant": relevant})


def _path_like(token: str) -> bool:
    if token.startswith("-") or re.fullmatch(r"\d+(?:\.\d+)?", token):
        return False
    return "/" in token or re.search(r"\.\w+$", token) is not None


def _sanitize_name(raw: str) -> str:
    stem = raw.rsplit("/", 1)[-1]
    stem = stem.rsplit(".", 1)[0] if "." in stem else stem
    name = re.sub(r"\W+", "_", stem).strip("_").lower() or "step"
    if name[0].isdigit():
        name = "r_" + name
    return name


def _draft_one(command: str) -> dict | None:
    try:
        tokens = shlex.split(command)
    except ValueError:
        tokens = command.split()
    if not tokens:
        return None

    leader = tokens[0].rsplit("/", 1)[-1]
    skip = {0}
    if leader in _INTERPRETERS and len(tokens) > 1:
        name = _sanitize_name(tokens[1])
        skip.add(1)
    elif leader in _SUBCOMMAND_TOOLS and len(tokens) > 1 and tokens[1].isalpha():
        name = _sanitize_name(f"{leader}_{tokens[1]}")
        skip.add(1)
    else:
        name = _sanitize_name(leader)

    inputs: list[str] = []
    outputs: list[str] = []
    log_path: str | None = None
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        nxt = tokens[i + 1] if i + 1 < len(tokens) else None
        if i in skip or tok == "|":
            if tok == "|" and nxt is not None:
                skip.add(i + 1)
        elif tok in (">", ">>") and nxt:
            outputs.append(nxt)
            i += 1
        elif tok == "2>" and nxt:
            log_path = nxt
            i += 1
        elif tok == "tee" and nxt:
            outputs.append(nxt)
            i += 1
        elif "=" in tok and tok.startswith("--"):
            flag, value = tok.split("=", 1)
            if flag in _OUTPUT_FLAGS and _path_like(value):
                outputs.append(value)
        elif tok in _OUTPUT_FLAGS and nxt:
            outputs.append(nxt)
            i += 1
        elif tok.startswith("-"):
            if nxt and _path_like(nxt):
                inputs.append(nxt)
                i += 1
        elif _path_like(tok):
            inputs.append(tok)
        i += 1

    if not outputs and len(inputs) >= 2:
        outputs.append(inputs.pop())

    body = command
    if not outputs:
        outputs = [f"{name}.done"]
        body = body + " && touch {output}"
    else:
        body = _swap_token(body, outputs[0], "{output}")
    if len(inputs) == 1:
        body = _swap_token(body, inputs[0], "{input}")
    if log_path:
        body = _swap_token(body, log_path, "{log}")

    rule = {
        "name": name,
        "input": inputs,
        "output": outputs,
        "params": {},
        "shell": body,
    }
    if log_path:
        rule["log"] = log_path
    return rule


def _swap_token(text: str, token: str, replacement: str) -> str:
    pattern = re.compile(rf"(?<!\S){re.escape(token)}(?!\S)")
    return pattern.sub(replacement.replace("\\", "\\\\"), text, count=1)


def _draft_rules(sections, exchange) -> str:
    entries = json.loads(sections.get("Relevant commands", "[]"))
    rules = []
    used: dict[str, int] = {}
    for entry in entries:
        rule = _draft_one(entry.get("command", ""))
        if rule is None:
            continue
        if entry.get("env"):
            rule["conda"] = entry["env"]
        base = rule["name"]
        if base in used:
            used[base] += 1
            rule["name"] = f"{base}_{used[base]}"
        else:
            used[base] = 1
        rules.append(rule)
    return json.dumps({"rules": rules})


def _extract_config(sections, exchange) -> str:
    text = sections.get("Rules", "")
    proposals: list[dict] = []
    seen: set[str] = set()

    def propose(key: str, value, occurrence: str) -> None:
        if key in seen or "config[" in occurrence:
            return
        start = text.find(occurrence)
        if start != -1 and "config[" in text[max(0, start - 10):start]:
            return
        seen.add(key)
        proposals.append({"key": key, "value": value, "occurrence": occurrence})

    for m in re.finditer(r"(--[a-z][a-z0-9-]+)[= ](\d+(?:\.\d+)?)(?!\S)", text):
        key = m.group(1).lstrip("-").replace("-", "_")
        propose(key, _as_number(m.group(2)), m.group(2))
    for m in re.finditer(r"(?<!\S)(-[a-z]) (\d+)(?!\S)", text):
        key = _SHORT_FLAG_KEYS.get(m.group(1))
        if key:
            propose(key, _as_number(m.group(2)), m.group(2))
    for m in re.finditer(r"(?<![\w{])([\w./-]+\.(?:fa|fasta|fna|gtf|gff3?|vcf|dict))(?!\S)", text):
        token = m.group(1)
        key = re.sub(r"\W+", "_", token.rsplit("/", 1)[-1]).strip("_").lower()
        propose(key, token, token)
    return json.dumps({"parameters": proposals})


def _as_number(text: str):
    return float(text) if "." in text else int(text)


def _repair_workflow(text: str, aggressive: bool) -> str:
    text = re.sub(r"(?m)^(rule\s+\w+)\s*$", r"\1:", text)
    text = re.sub(r"(?m)^(\s+)inputs\s*:", r"\1input:", text)
    text = re.sub(r"(?m)^(\s+)outputs\s*:", r"\1output:", text)
    text = re.sub(r"(?m)^(\s+)parameters\s*:", r"\1params:", text)
    text = _quote_bare_shell(text)
    text = _rename_duplicate_rules(text)
    text = _fix_rule_refs(text)
    if aggressive:
        text = re.sub(
            r"(?m)^rule\s+([^\s:]+)\s*:",
            lambda m: f"rule {_sanitize_name(m.group(1))}:",
            text,
        )
    text = _add_missing_actions(text)
    return fix_common_errors(text)


def _quote_bare_shell(text: str) -> str:
    def fix(m: re.Match) -> str:
        body = m.group(2).strip()
        if body[0] in "\"'" or '"' in body:
            return m.group(0)
        return f'{m.group(1)}"{body}"'

    return re.sub(r"(?m)^(\s*shell:\s*)(\S.*)$", fix, text)


def _rename_duplicate_rules(text: str) -> str:
    counts: dict[str, int] = {}

    def fix(m: re.Match) -> str:
        name = m.group(1)
        counts[name] = counts.get(name, 0) + 1
        if counts[name] == 1:
            return m.group(0)
        return f"rule {name}_{counts[name]}:"

    return re.sub(r"(?m)^rule\s+(\w+)\s*:", fix, text)


def _fix_rule_refs(text: str) -> str:
    names = re.findall(r"(?m)^rule\s+(\w+)\s*:", text)

    def fix(m: re.Match) -> str:
        ref = m.group(1)
        if ref in names:
            return m.group(0)
        close = difflib.get_close_matches(ref, names, n=1, cutoff=0.5)
        return f"rules.{close[0]}" if close else m.group(0)

    return re.sub(r"rules\.(\w+)", fix, text)


def _add_missing_actions(text: str) -> str:
    from ..smk.model import ShellAction, parse_workflow, render

    try:
        workflow = parse_workflow(text)
    except ValueError:
        return text
    changed = False
    for rule in workflow.rules:
        if rule.outputs and rule.action is None:
            rule.action = ShellAction("touch {output}")
            changed = True
    return render(workflow) if changed else text


def _fix_direct(sections, exchange) -> str:
    return _repair_workflow(sections.get("Workflow", ""), aggressive=False)


def _fix_analyze(sections, exchange) -> str:
    findings = sections.get("Validator findings", "[]")
    try:
        messages = [f.get("message", "") for f in json.loads(findings)]
    except (ValueError, AttributeError):
        messages = [findings]
    return json.dumps({
        "analysis": "The validator reported: " + "; ".join(messages),
        "plan": [
            "normalize section names and header punctuation",
            "rename invalid or duplicate rule identifiers",
            "make sure every rule has a quoted action",
            "re-check cross-rule references",
        ],
    })


def _fix_apply(sections, exchange) -> str:
    return _repair_workflow(sections.get("Workflow", ""), aggressive=True)


def _generate_docs(sections, exchange) -> str:
    from ..smk.model import parse_workflow

    text = sections.get("Workflow", "")
    lines = ["# Workflow documentation", ""]
    try:
        workflow = parse_workflow(text)
        rules = workflow.rules
    except ValueError:
        workflow = None
        rules = []
    if workflow is None or not rules:
        names = re.findall(r"(?m)^rule\s+(\w+)\s*:", text)
        lines.append(f"This workflow defines {len(names)} rule(s): " + ", ".join(names) + ".")
        return "\n".join(lines) + "\n"
    lines.append(f"This workflow runs {len(rules)} step(s) in dependency order.")
    lines.append("")
    for rule in rules:
        lines.append(f"## {rule.name}")
        if rule.docstring:
            lines.append(rule.docstring)
        ins = ", ".join(e.value for e in rule.inputs) or "none"
        outs = ", ".join(e.value for e in rule.outputs) or "none"
        lines.append(f"- inputs: {ins}")
        lines.append(f"- outputs: {outs}")
        if rule.action is not None and rule.action.kind == "shell":
            lines.append(f"- command: `{rule.action.body}`")
        elif rule.action is not None:
            lines.append(f"- script: `{rule.action.path}`")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


def _refine_rwsets(sections, exchange) -> str:
    source = sections.get("Cell source", "")
    undefined = [n.strip() for n in sections.get("Undefined names", "").split(",")
                 if n.strip() and n.strip() != "(none)"]
    # Names flagged as undefined that the detector missed become reads
    # when they actually appear in the cell; the rest must come from
    # somewhere else entirely, so the spurious read is dropped.
    add_reads, drop_reads = [], []
    for name in undefined:
        if re.search(rf"\b{re.escape(name)}\b", source):
            add_reads.append(name)
        else:
            drop_reads.append(name)
    return json.dumps({
        "add_reads": add_reads,
        "drop_reads": drop_reads,
        "add_writes": [],
        "drop_writes": [],
    })


def _generate_blocks(sections, exchange) -> str:
    # Local import: the notebook package is not needed for shell-only use.
    from ..nb.serializers import prefix_block, suffix_block

    inputs = json.loads(sections.get("Inputs", "[]"))
    outputs = json.loads(sections.get("Outputs", "[]"))
    return json.dumps({
        "prefix": prefix_block(inputs, bool(inputs or outputs)),
        "suffix": suffix_block(outputs),
    })


def _assistant_chat(sections, exchange) -> str:
    conversation = sections.get("Conversation", "")
    last_user = ""
    for line in conversation.splitlines():
        if line.startswith("user: "):
            last_user = line[len("user: "):]
    text = last_user.lower()

    def uri(action: str, **params) -> str:
        query = urlencode(params)
        return f"snakemaker://{action}?{query}" if query else f"snakemaker://{action}"

    m = re.search(r"mark (?:all )?(\w+) commands? (?:as )?(incidental|irrelevant|relevant)", text)
    if m:
        op = "mark_relevant" if m.group(2) == "relevant" else "mark_irrelevant"
        return "Marking those commands. " + uri("edit_history", op=op, filter=m.group(1))
    m = re.search(r"(?:use|set|switch to) model ([\w./:-]+)", text)
    if m:
        return "Switching the model now. " + uri("set_setting", key="model_name", value=m.group(1))
    m = re.search(r"temperature (?:to )?([\d.]+)", text)
    if m:
        return "Adjusting temperature. " + uri("set_setting", key="temperature", value=m.group(1))
    m = re.search(r"(?:remove|delete|drop) command (\d+)", text)
    if m:
        return "Removing that command. " + uri("edit_history", op="remove", index=m.group(1))
    m = re.search(r"group commands (\d+)\s*(?:-|to|through)\s*(\d+)(?: as (\w+))?", text)
    if m:
        name = m.group(3) or f"group_{m.group(1)}_{m.group(2)}"
        return "Grouping those commands. " + uri(
            "edit_history", op="group", start=m.group(1), end=m.group(2), name=name
        )
    if re.search(r"(?:show|print|list).*(?:rule|workflow)", text):
        return "Here is the current workflow. " + uri("print_rules")
    m = re.search(r"(?:relabel|mark|make) cell (\d+) (?:as )?(?:a )?(rule|script|undecided)", text)
    if m:
        return "Relabeling the cell. " + uri("edit_dag", cell=m.group(1), label=m.group(2))
    m = re.search(r"rename (\w+) to (\w+) in cell (\d+)", text)
    if m:
        return "Renaming it everywhere in that cell. " + uri(
            "edit_code", cell=m.group(3), find=m.group(1), replace=m.group(2)
        )
    return (
        "I can tune settings, edit the recorded history, relabel notebook "
        "cells, rewrite cell code, or print the generated rules. Tell me "
        "what to change."
    )


def _answer_generic(sections, exchange) -> str:
    return "Understood."


_HANDLERS = {
    "classify_relevance": _classify_relevance,
    "draft_rules": _draft_rules,
    "extract_config": _extract_config,
    "fix_direct": _fix_direct,
    "fix_analyze": _fix_analyze,
    "fix_apply": _fix_apply,
    "generate_docs": _generate_docs,
    "refine_rwsets": _refine_rwsets,
    "generate_blocks": _generate_blocks,
    "assistant_chat": _assistant_chat,
}
