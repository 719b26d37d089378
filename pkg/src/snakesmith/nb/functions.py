"""Hoist cell-level function definitions into standalone cells.

Each top-level ``def`` moves to its own cell placed right before its
origin, renamed ``<name>__c<origin-index>`` so repeated definitions stay
distinct.  Free variables of the function become keyword-only parameters
and every call site is rewritten to pass them through, which makes the
function importable anywhere without carrying notebook state.

All rewriting is textual, anchored on AST positions, so comments and
formatting inside untouched regions survive.
"""

from __future__ import annotations

import ast
import re
from dataclasses import dataclass, field

from .rwsets import _param_names, _scan_scope, _target_names


@dataclass
class FunctionInfo:
    original_name: str
    new_name: str
    origin: int
    free_vars: list[str] = field(default_factory=list)


@dataclass
class IsolationResult:
    cells: list[str]
    origins: list[int]
    functions: dict[int, FunctionInfo] = field(default_factory=dict)
    findings: list[str] = field(default_factory=list)


@dataclass
class _DefEntry:
    cell: int
    node: ast.FunctionDef
    original_name: str
    new_name: str
    start: int  # 0-based first line (including decorators)
    end: int    # 0-based line after the last
    locals_: set[str] = field(default_factory=set)
    direct_frees: set[str] = field(default_factory=set)
    frees: set[str] = field(default_factory=set)
    calls_registered: list[str] = field(default_factory=list)
    skip: bool = False


def isolate_functions(
    sources: list[str], known_modules: set[str] = frozenset()
) -> IsolationResult:
    findings: list[str] = []
    trees: list[ast.Module | None] = []
    for source in sources:
        try:
            trees.append(ast.parse(source))
        except SyntaxError:
            trees.append(None)

    # Phase 1: register every top-level def.
    defs: list[_DefEntry] = []
    defs_by_cell: dict[int, list[_DefEntry]] = {}
    name_counts: dict[tuple[int, str], int] = {}
    for i, tree in enumerate(trees):
        if tree is None:
            continue
        for node in tree.body:
            if not isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                continue
            occurrence = name_counts.get((i, node.name), 0) + 1
            name_counts[(i, node.name)] = occurrence
            new_name = f"{node.name}__c{i}"
            if occurrence > 1:
                new_name += f"_{occurrence}"
            start = node.lineno - 1
            if node.decorator_list:
                start = min(start, node.decorator_list[0].lineno - 1)
            entry = _DefEntry(
                cell=i,
                node=node,
                original_name=node.name,
                new_name=new_name,
                start=start,
                end=node.end_lineno,
            )
            scope = _scan_scope(node)
            if scope.global_writes:
                entry.skip = True
                findings.append(
                    f"cell {i}: function {node.name} assigns globals and stays in place"
                )
            entry.locals_ = _param_names(node.args) | _collect_local_stores(node)
            entry.direct_frees = set(scope.free_loads | scope.free_mutations)
            defs.append(entry)
            defs_by_cell.setdefault(i, []).append(entry)

    registered_names = {e.original_name for e in defs if not e.skip}

    # Phase 2: settle free variables. Calls to other registered functions
    # pass those functions' parameters through, so frees propagate along
    # the call graph until stable.
    entry_env: dict[tuple[int, str], _DefEntry] = {}
    by_position: dict[str, list[_DefEntry]] = {}
    for entry in defs:
        if not entry.skip:
            by_position.setdefault(entry.original_name, []).append(entry)

    def resolve(name: str, at_cell: int) -> _DefEntry | None:
        best = None
        for entry in by_position.get(name, []):
            if entry.cell <= at_cell:
                best = entry
        return best

    for entry in defs:
        entry.frees = {
            n for n in entry.direct_frees
            if n not in known_modules and n not in registered_names
        }
        entry.calls_registered = [
            n for n in entry.direct_frees if n in registered_names and n != entry.original_name
        ]

    changed = True
    while changed:
        changed = False
        for entry in defs:
            if entry.skip:
                continue
            for callee_name in entry.calls_registered:
                callee = resolve(callee_name, entry.cell)
                if callee is None:
                    continue
                extra = callee.frees - entry.locals_ - {entry.original_name}
                if not extra <= entry.frees:
                    entry.frees |= extra
                    changed = True

    # Phase 3: rewrite cells in order, tracking which binding each name
    # refers to (closest preceding definition or assignment wins).
    out_cells: list[str] = []
    origins: list[int] = []
    functions: dict[int, FunctionInfo] = {}
    env: dict[str, _DefEntry | None] = {}

    for i, source in enumerate(sources):
        tree = trees[i]
        if tree is None:
            out_cells.append(source)
            origins.append(i)
            continue
        lines = source.splitlines()
        cell_defs = [e for e in defs_by_cell.get(i, []) if not e.skip]
        extracted_spans = [(e.start, e.end) for e in cell_defs]

        # Top-level binding timeline for this cell: (line, name, entry|None).
        timeline: list[tuple[int, str, _DefEntry | None]] = []
        for node in tree.body:
            if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
                entry = next((e for e in cell_defs if e.node is node), None)
                timeline.append((node.lineno, node.name, entry))
            else:
                for name in _stmt_binds(node):
                    if name in registered_names:
                        timeline.append((node.lineno, name, None))

        def binding_at(name: str, line: int) -> _DefEntry | None | str:
            """Entry, None (shadowed by a variable), or "unbound"."""
            found: _DefEntry | None | str = "unbound"
            if name in env:
                found = env[name]
            for at, bound, entry in timeline:
                if bound == name and at <= line:
                    found = entry
            return found

        # Rewrite references in the remainder of the cell.
        cell_edits: list[tuple[int, int, int, int, str]] = []
        for ref in _collect_references(tree, registered_names, extracted_spans):
            target = binding_at(ref.name, ref.line)
            if target is None:
                continue
            if target == "unbound":
                findings.append(
                    f"cell {i}: {ref.name} is referenced before any definition"
                )
                continue
            cell_edits.extend(_reference_edits(ref, target, findings, f"cell {i}"))

        for start, end in extracted_spans:
            cell_edits.append((start, 0, end - 1, len(lines[end - 1]), ""))

        remainder = _apply_edits(source, cell_edits)

        # Emit function cells (in definition order) before the remainder.
        for entry in cell_defs:
            func_source = _rewrite_function(
                entry, lines, binding_at, findings, registered_names, extracted_spans
            )
            functions[len(out_cells)] = FunctionInfo(
                original_name=entry.original_name,
                new_name=entry.new_name,
                origin=i,
                free_vars=sorted(entry.frees),
            )
            out_cells.append(func_source)
            origins.append(i)
            env[entry.original_name] = entry

        for _, name, entry in timeline:
            env[name] = entry

        if not _is_blank(remainder):
            out_cells.append(remainder)
            origins.append(i)

    return IsolationResult(
        cells=out_cells, origins=origins, functions=functions, findings=findings
    )


# ---------------------------------------------------------------------------
# reference collection and rewriting


@dataclass
class _Reference:
    name: str
    line: int       # 1-based
    col: int
    end_col: int
    call: ast.Call | None


def _collect_references(
    tree: ast.Module, registered: set[str], skip_spans: list[tuple[int, int]]
) -> list[_Reference]:
    refs: list[_Reference] = []

    def in_skipped(node) -> bool:
        return any(start < node.lineno <= end for start, end in skip_spans)

    def visit(node, call_parent: ast.Call | None) -> None:
        for child in ast.iter_child_nodes(node):
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef)) and in_skipped(child):
                continue
            if isinstance(child, ast.Name) and isinstance(child.ctx, ast.Load):
                if child.id in registered and not in_skipped(child):
                    refs.append(_Reference(
                        name=child.id,
                        line=child.lineno,
                        col=child.col_offset,
                        end_col=child.end_col_offset,
                        call=call_parent if call_parent and call_parent.func is child else None,
                    ))
                continue
            next_call = child if isinstance(child, ast.Call) else None
            visit(child, next_call)

    visit(tree, None)
    return refs


def _reference_edits(
    ref: _Reference, target: _DefEntry, findings: list[str], where: str
) -> list[tuple[int, int, int, int, str]]:
    edits = [(ref.line - 1, ref.col, ref.line - 1, ref.end_col, target.new_name)]
    frees = sorted(target.frees)
    if not frees:
        return edits
    if ref.call is None:
        findings.append(
            f"{where}: {ref.name} is used without a call and cannot receive "
            f"its dependencies ({', '.join(frees)})"
        )
        return edits
    kwargs = ", ".join(f"{n}={n}" for n in frees)
    has_args = bool(ref.call.args or ref.call.keywords)
    insert = (", " if has_args else "") + kwargs
    end_line, end_col = ref.call.end_lineno - 1, ref.call.end_col_offset - 1
    edits.append((end_line, end_col, end_line, end_col, insert))
    return edits


def _rewrite_function(
    entry: _DefEntry,
    cell_lines: list[str],
    binding_at,
    findings: list[str],
    registered: set[str],
    extracted_spans: list[tuple[int, int]],
) -> str:
    node = entry.node
    edits: list[tuple[int, int, int, int, str]] = []

    # Rename the definition itself.
    header = cell_lines[node.lineno - 1]
    m = re.compile(rf"\bdef\s+({re.escape(entry.original_name)})\b").search(header)
    if m:
        edits.append((node.lineno - 1, m.start(1), node.lineno - 1, m.end(1), entry.new_name))

    # Append free variables as keyword-only parameters.
    frees = sorted(entry.frees)
    if frees:
        edits.append(_signature_insert(node, frees))

    # Rewrite references to registered functions inside the body,
    # including recursion.  Locally shadowed names stay as they are.
    body_refs = _collect_function_body_references(node, registered)
    for ref in body_refs:
        shadowed = ref.name in entry.locals_
        if shadowed:
            continue
        if ref.name == entry.original_name:
            target = entry
        else:
            resolved = binding_at(ref.name, node.lineno)
            if resolved in (None, "unbound"):
                continue
            target = resolved
        edits.extend(_reference_edits(
            ref, target, findings, f"function {entry.original_name}"
        ))

    source = "\n".join(cell_lines)
    rewritten = _apply_edits(source, edits)
    lines = rewritten.splitlines()[entry.start:]
    lines = lines[: entry.end - entry.start + _line_delta(edits, entry)]
    return "\n".join(lines).strip("\n") + "\n"


def _line_delta(edits, entry: _DefEntry) -> int:
    delta = 0
    for sl, _, el, _, repl in edits:
        if entry.start <= sl < entry.end:
            delta += repl.count("\n") - (el - sl)
    return delta


def _collect_function_body_references(node, registered: set[str]) -> list[_Reference]:
    refs: list[_Reference] = []

    def visit(parent, call_parent) -> None:
        for child in ast.iter_child_nodes(parent):
            if isinstance(child, ast.Name) and isinstance(child.ctx, ast.Load):
                if child.id in registered:
                    refs.append(_Reference(
                        name=child.id,
                        line=child.lineno,
                        col=child.col_offset,
                        end_col=child.end_col_offset,
                        call=call_parent if call_parent and call_parent.func is child else None,
                    ))
                continue
            visit(child, child if isinstance(child, ast.Call) else None)

    for stmt in node.body:
        visit(stmt, None)
    # Decorators run in the enclosing scope but travel with the def.
    for dec in node.decorator_list:
        if isinstance(dec, ast.Name) and isinstance(dec.ctx, ast.Load):
            if dec.id in registered:
                refs.append(_Reference(
                    name=dec.id,
                    line=dec.lineno,
                    col=dec.col_offset,
                    end_col=dec.end_col_offset,
                    call=None,
                ))
        else:
            visit(dec, dec if isinstance(dec, ast.Call) else None)
    return refs


def _signature_insert(node, frees: list[str]) -> tuple[int, int, int, int, str]:
    args = node.args
    names = ", ".join(frees)
    if args.kwarg is not None:
        line, col = args.kwarg.lineno - 1, args.kwarg.col_offset - 2
        return (line, col, line, col, f"{names}, ")
    anchors = list(args.kwonlyargs) + [d for d in args.kw_defaults if d is not None]
    if anchors:
        line, col = _last_position(anchors)
        return (line, col, line, col, f", {names}")
    if args.vararg is not None:
        line, col = _last_position([args.vararg])
        return (line, col, line, col, f", {names}")
    positional = list(args.posonlyargs) + list(args.args) + list(args.defaults)
    if positional:
        line, col = _last_position(positional)
        return (line, col, line, col, f", *, {names}")
    # Empty signature: insert right after the opening parenthesis.
    line = node.lineno - 1
    return (line, -1, line, -1, f"*, {names}")


def _last_position(nodes) -> tuple[int, int]:
    best = max(nodes, key=lambda n: (n.end_lineno, n.end_col_offset))
    return best.end_lineno - 1, best.end_col_offset


# ---------------------------------------------------------------------------
# text utilities


def _apply_edits(text: str, edits: list[tuple[int, int, int, int, str]]) -> str:
    lines = text.splitlines()
    for sl, sc, el, ec, repl in sorted(edits, key=lambda e: (e[0], e[1]), reverse=True):
        if sc == -1:  # special case: after the def's opening parenthesis
            paren = lines[sl].index("(", 0)
            sc = ec = paren + 1
        if sl == el:
            lines[sl] = lines[sl][:sc] + repl + lines[sl][ec:]
        else:
            lines[sl] = lines[sl][:sc] + repl + lines[el][ec:]
            del lines[sl + 1:el + 1]
    return "\n".join(lines)


def _collect_local_stores(node) -> set[str]:
    stores: set[str] = set()
    for child in ast.walk(node):
        if isinstance(child, ast.Assign):
            for target in child.targets:
                stores.update(_target_names(target))
        elif isinstance(child, (ast.AugAssign, ast.AnnAssign)):
            stores.update(_target_names(child.target))
        elif isinstance(child, (ast.For, ast.AsyncFor)):
            stores.update(_target_names(child.target))
        elif isinstance(child, (ast.With, ast.AsyncWith)):
            for item in child.items:
                if item.optional_vars is not None:
                    stores.update(_target_names(item.optional_vars))
        elif isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef, ast.ClassDef)):
            if child is not node:
                stores.add(child.name)
        elif isinstance(child, (ast.Import, ast.ImportFrom)):
            for alias in child.names:
                if alias.name != "*":
                    stores.add(alias.asname or alias.name.split(".")[0])
        elif isinstance(child, ast.NamedExpr) and isinstance(child.target, ast.Name):
            stores.add(child.target.id)
    return stores


def _stmt_binds(node) -> set[str]:
    names: set[str] = set()
    if isinstance(node, ast.Assign):
        for target in node.targets:
            names.update(_target_names(target))
    elif isinstance(node, (ast.AugAssign, ast.AnnAssign)):
        names.update(_target_names(node.target))
    elif isinstance(node, ast.ClassDef):
        names.add(node.name)
    elif isinstance(node, (ast.Import, ast.ImportFrom)):
        for alias in node.names:
            if alias.name != "*":
                names.add(alias.asname or alias.name.split(".")[0])
    return names


def _is_blank(source: str) -> bool:
    return all(
        not line.strip() or line.strip().startswith("#")
        for line in source.splitlines()
    )
