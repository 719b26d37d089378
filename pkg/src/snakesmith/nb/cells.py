"""Notebook cell loading and source normalization."""

from __future__ import annotations

import ast
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from ..llm.jsonrepair import repair_json

_MAGIC = re.compile(r"^\s*(%{1,2}|!|\?)")


class NotebookError(ValueError):
    pass


@dataclass
class Cell:
    index: int
    source: str
    kind: str = "code"

    @property
    def is_code(self) -> bool:
        return self.kind == "code"

    @property
    def id(self) -> str:
        digest = hashlib.sha1(self.source.encode("utf-8")).hexdigest()[:8]
        return f"c{self.index}-{digest}"


def parse_notebook(text: str | Path) -> list[Cell]:
    """Load cells from notebook JSON (cell format 4)."""
    if isinstance(text, Path):
        text = text.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        # One repair attempt covers truncated or sloppily edited files.
        try:
            data = json.loads(repair_json(text))
        except (json.JSONDecodeError, ValueError):
            raise NotebookError(f"notebook is not valid JSON: {err}") from None
    if not isinstance(data, dict) or "cells" not in data:
        raise NotebookError("notebook has no 'cells' list")
    if data.get("nbformat", 4) < 4:
        raise NotebookError("only notebook format 4 is supported")
    cells = []
    for i, raw in enumerate(data["cells"]):
        source = raw.get("source", "")
        if isinstance(source, list):
            source = "".join(source)
        cells.append(Cell(index=i, source=source, kind=raw.get("cell_type", "code")))
    return cells


def sanitize_source(source: str) -> tuple[str, list[str]]:
    """Blank out notebook magics and shell escapes so the cell parses.

    Lines are replaced with ``pass`` statements rather than removed to
    keep line numbers stable for later textual edits.
    """
    dropped: list[str] = []
    out: list[str] = []
    for line in source.splitlines():
        if _MAGIC.match(line):
            dropped.append(line.strip())
            indent = line[: len(line) - len(line.lstrip())]
            out.append(indent + "pass")
        else:
            out.append(line)
    return "\n".join(out), dropped


@dataclass
class StrippedImports:
    source: str
    statements: list[str] = field(default_factory=list)
    names: set[str] = field(default_factory=set)
    star_modules: list[str] = field(default_factory=list)


def strip_imports(source: str) -> StrippedImports:
    """Remove module-level import statements, keeping them for reinsertion.

    Imports nested inside functions or conditionals stay in place.  The
    removed lines are blanked, not deleted, so other AST node positions
    remain valid against the returned source.
    """
    try:
        tree = ast.parse(source)
    except SyntaxError:
        return StrippedImports(source=source)
    lines = source.splitlines()
    statements: list[str] = []
    names: set[str] = set()
    star_modules: list[str] = []
    for node in tree.body:
        if not isinstance(node, (ast.Import, ast.ImportFrom)):
            continue
        statements.append("\n".join(lines[node.lineno - 1:node.end_lineno]))
        for alias in node.names:
            if alias.name == "*":
                # Star imports bind an unknowable set of names; the
                # analysis treats later unknown names as external reads.
                star_modules.append(getattr(node, "module", None) or "?")
                continue
            bound = alias.asname or alias.name.split(".")[0]
            names.add(bound)
        for i in range(node.lineno - 1, node.end_lineno):
            lines[i] = ""
    return StrippedImports(source="\n".join(lines), statements=statements,
                           names=names, star_modules=star_modules)
