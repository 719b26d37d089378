"""Move tunable literals out of rules into a config table.

The model proposes (key, value, occurrence) triples; everything else is
deterministic.  A proposal is applied only when its occurrence text is
actually present in a rule, existing keys are reused when their value
already matches, and proposals that collide with a different existing
value are discarded.
"""

from __future__ import annotations

import copy
import re

from ..llm.gateway import FEATURE_CONFIG_GENERATION, Gateway, ModelProfile
from .model import ConfigTable, Rule, ShellAction, _quote_string, render_rule

_KEY_CLEAN = re.compile(r"[^a-z0-9]+")


def sanitize_key(raw: str) -> str:
    key = _KEY_CLEAN.sub("_", raw.strip().lower()).strip("_")
    key = re.sub(r"__+", "_", key)
    if not key:
        key = "param"
    if key[0].isdigit():
        key = "p_" + key
    return key


def extract_config(
    rules: list[Rule],
    table: ConfigTable,
    gateway: Gateway,
    profile: ModelProfile,
) -> tuple[list[Rule], ConfigTable]:
    rules = copy.deepcopy(rules)
    table = table.copy()
    if not profile.enabled(FEATURE_CONFIG_GENERATION) or not rules:
        return rules, table

    # Local import: smk must stay importable while the llm package loads.
    from ..llm.prompts import build_exchange

    rendered = "\n\n".join(render_rule(rule) for rule in rules)
    exchange = build_exchange(
        "extract_config",
        rules=rendered,
        config=table.to_yaml() or "(empty)",
    )
    shape = {"parameters": [{"key": str, "value": "any", "occurrence": str}]}
    data = gateway.complete_structured(profile, exchange, shape)

    for proposal in data["parameters"]:
        key = sanitize_key(str(proposal.get("key", "")))
        value = proposal.get("value")
        occurrence = str(proposal.get("occurrence") or "")
        if not occurrence or value is None:
            continue
        if not any(_occurs_in_rule(rule, occurrence) for rule in rules):
            continue
        existing = next(
            (k for k, v in table.entries.items() if _values_equal(v, value)), None
        )
        if existing is not None:
            key = existing
        elif key in table:
            continue
        else:
            table.set(key, value)
        for rule in rules:
            _substitute(rule, key, occurrence)
    return rules, table


def _values_equal(a: object, b: object) -> bool:
    return a == b or str(a) == str(b)


def _token_pattern(occurrence: str) -> re.Pattern:
    return re.compile(rf"(?<![\w./-]){re.escape(occurrence)}(?![\w./-])")


def _occurs_in_rule(rule: Rule, occurrence: str) -> bool:
    if isinstance(rule.action, ShellAction) and _token_pattern(occurrence).search(rule.action.body):
        return True
    for entry in (*rule.inputs, *rule.outputs, *rule.params):
        if entry.value == occurrence:
            return True
    return False


def _substitute(rule: Rule, key: str, occurrence: str) -> None:
    if isinstance(rule.action, ShellAction):
        rule.action.body = _token_pattern(occurrence).sub(
            '{config["%s"]}' % key, rule.action.body
        )
    for entry in (*rule.inputs, *rule.outputs, *rule.params):
        if entry.value == occurrence:
            entry.value = 'config["%s"]' % key
            entry.is_expr = True


def substitute_config_back(text: str, table: ConfigTable) -> str:
    """Inverse of extraction over rendered text, used to audit fidelity."""
    for key, value in table.entries.items():
        text = text.replace('{config["%s"]}' % key, str(value))
        literal = _quote_string(value) if isinstance(value, str) else repr(value)
        text = text.replace('config["%s"]' % key, literal)
    return text
