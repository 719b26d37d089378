"""Structured Snakemake workflow model: parse, render, merge, fix, configure."""

from .model import (
    Action,
    ConfigTable,
    IOEntry,
    RawSegment,
    Rule,
    ScriptAction,
    ShellAction,
    SmkParseError,
    Workflow,
    merge,
    parse_workflow,
    render,
)
from .fixers import fix_common_errors
from .configextract import extract_config, sanitize_key

__all__ = [
    "Action",
    "ConfigTable",
    "IOEntry",
    "RawSegment",
    "Rule",
    "ScriptAction",
    "ShellAction",
    "SmkParseError",
    "Workflow",
    "merge",
    "parse_workflow",
    "render",
    "fix_common_errors",
    "extract_config",
    "sanitize_key",
]
