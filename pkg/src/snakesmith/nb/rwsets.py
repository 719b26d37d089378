"""Per-cell read and write set analysis.

The analysis is pessimistic: it over-approximates both the names a cell
may read from earlier cells and the names it may provide to later ones.

Rules, in order of appearance below:
  - a load counts as a read unless the name was already bound by this
    cell on every path reaching the load,
  - a store counts as a write; a store on a conditional path also counts
    as a read, because the pre-existing value may survive,
  - attribute access, subscripting, and method calls may mutate the base
    object, so the base name counts as read and write,
  - loop targets count as writes without the conditional-read penalty,
  - names local to function bodies are invisible at cell level, but a
    function's free variables count as cell reads, and assignments the
    function makes through ``global`` count as cell writes,
  - ``del`` of a cell-level binding retracts the write.
"""

from __future__ import annotations

import ast
import builtins
from dataclasses import dataclass, field

_BUILTINS = frozenset(dir(builtins)) | {"display", "get_ipython", "__name__", "__file__"}


@dataclass
class RWSets:
    reads: set[str] = field(default_factory=set)
    writes: set[str] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)
    parse_ok: bool = True


def compute_rw_sets(source: str) -> RWSets:
    try:
        tree = ast.parse(source)
    except SyntaxError as err:
        return RWSets(parse_ok=False, warnings=[f"cell does not parse: {err.msg}"])
    analyzer = _Analyzer()
    for stmt in tree.body:
        analyzer.stmt(stmt)
    return RWSets(
        reads=analyzer.reads,
        writes=analyzer.writes,
        warnings=analyzer.warnings,
    )


class _Analyzer:
    def __init__(self):
        self.reads: set[str] = set()
        self.writes: set[str] = set()
        self.warnings: list[str] = []
        # Stack of "definitely bound here" name sets; frames beyond the
        # first belong to conditional blocks.
        self.frames: list[set[str]] = [set()]
        self.cond = 0

    # -- name events --------------------------------------------------------

    def visible(self, name: str) -> bool:
        return any(name in frame for frame in self.frames)

    def read(self, name: str) -> None:
        if not self.visible(name) and name not in _BUILTINS:
            self.reads.add(name)

    def store(self, name: str) -> None:
        self.writes.add(name)
        if self.cond == 0:
            self.frames[0].add(name)
        else:
            self.read(name)
            self.frames[-1].add(name)

    def loop_store(self, name: str) -> None:
        self.writes.add(name)
        self.frames[-1].add(name)

    def mutate(self, name: str) -> None:
        self.read(name)
        self.writes.add(name)

    def delete(self, name: str) -> None:
        # del retracts the write and pessimistically counts as a read:
        # the name may refer to an earlier cell's binding.
        if self.cond == 0:
            for frame in self.frames:
                frame.discard(name)
            self.writes.discard(name)
        if name not in _BUILTINS:
            self.reads.add(name)

    # -- statements ----------------------------------------------------------

    def stmt(self, node: ast.stmt) -> None:
        if isinstance(node, (ast.Assign,)):
            self.expr(node.value)
            for target in node.targets:
                self.target(target)
        elif isinstance(node, ast.AnnAssign):
            if node.value is not None:
                self.expr(node.value)
                self.target(node.target)
            elif not isinstance(node.target, ast.Name):
                self.target(node.target)
            if node.annotation is not None:
                self.expr(node.annotation)
        elif isinstance(node, ast.AugAssign):
            self.expr(node.value)
            if isinstance(node.target, ast.Name):
                self.read(node.target.id)
                self.store(node.target.id)
            else:
                self.target(node.target)
        elif isinstance(node, ast.Expr):
            self.expr(node.value)
        elif isinstance(node, ast.If):
            self.expr(node.test)
            then_frame = self.block(node.body)
            else_frame = self.block(node.orelse) if node.orelse else None
            if else_frame is not None:
                self.frames[-1].update(then_frame & else_frame)
        elif isinstance(node, (ast.For, ast.AsyncFor)):
            self.expr(node.iter)
            self.frames.append(set())
            for name in _target_names(node.target):
                self.loop_store(name)
            self.target_subscripts(node.target)
            self.cond += 1
            for child in node.body:
                self.stmt(child)
            self.cond -= 1
            self.frames.pop()
            if node.orelse:
                self.block(node.orelse)
        elif isinstance(node, ast.While):
            self.expr(node.test)
            self.block(node.body)
            if node.orelse:
                self.block(node.orelse)
        elif isinstance(node, (ast.With, ast.AsyncWith)):
            for item in node.items:
                self.expr(item.context_expr)
                if item.optional_vars is not None:
                    self.target(item.optional_vars)
            for child in node.body:
                self.stmt(child)
        elif isinstance(node, ast.Try):
            self.block(node.body)
            for handler in node.handlers:
                if handler.type is not None:
                    self.expr(handler.type)
                self.frames.append(set())
                self.cond += 1
                if handler.name:
                    # Bound only inside the handler, unbound on exit.
                    self.frames[-1].add(handler.name)
                for child in handler.body:
                    self.stmt(child)
                self.cond -= 1
                self.frames.pop()
            if node.orelse:
                self.block(node.orelse)
            for child in node.finalbody:
                self.stmt(child)
        elif isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
            self.function_def(node)
        elif isinstance(node, ast.ClassDef):
            self.class_def(node)
        elif isinstance(node, (ast.Import, ast.ImportFrom)):
            for alias in node.names:
                if alias.name == "*":
                    self.warnings.append(
                        f"star import from {getattr(node, 'module', None)} hides its bindings"
                    )
                    continue
                self.store(alias.asname or alias.name.split(".")[0])
        elif isinstance(node, ast.Delete):
            for target in node.targets:
                if isinstance(target, ast.Name):
                    self.delete(target.id)
                else:
                    self.target(target)
        elif isinstance(node, ast.Return):
            if node.value is not None:
                self.expr(node.value)
        elif isinstance(node, ast.Raise):
            for part in (node.exc, node.cause):
                if part is not None:
                    self.expr(part)
        elif isinstance(node, ast.Assert):
            self.expr(node.test)
            if node.msg is not None:
                self.expr(node.msg)
        elif isinstance(node, ast.Match):
            self.expr(node.subject)
            for case in node.cases:
                self.frames.append(set())
                self.cond += 1
                for name in _pattern_names(case.pattern):
                    self.frames[-1].add(name)
                    self.writes.add(name)
                if case.guard is not None:
                    self.expr(case.guard)
                for child in case.body:
                    self.stmt(child)
                self.cond -= 1
                self.frames.pop()
        elif isinstance(node, (ast.Global, ast.Nonlocal, ast.Pass, ast.Break, ast.Continue)):
            pass
        else:
            for child in ast.iter_child_nodes(node):
                if isinstance(child, ast.expr):
                    self.expr(child)
                elif isinstance(child, ast.stmt):
                    self.stmt(child)

    def block(self, body: list[ast.stmt]) -> set[str]:
        """Analyze a conditional block in its own frame; returns its bindings."""
        self.frames.append(set())
        self.cond += 1
        for child in body:
            self.stmt(child)
        self.cond -= 1
        return self.frames.pop()

    # -- assignment targets --------------------------------------------------

    def target(self, node: ast.expr) -> None:
        if isinstance(node, ast.Name):
            self.store(node.id)
        elif isinstance(node, (ast.Tuple, ast.List)):
            for element in node.elts:
                self.target(element)
        elif isinstance(node, ast.Starred):
            self.target(node.value)
        elif isinstance(node, ast.Attribute):
            base = _base_name(node)
            if base is not None:
                self.mutate(base)
            else:
                self.expr(node.value)
        elif isinstance(node, ast.Subscript):
            base = _base_name(node)
            if base is not None:
                self.mutate(base)
            else:
                self.expr(node.value)
            self.expr(node.slice)
        else:
            self.expr(node)

    def target_subscripts(self, node: ast.expr) -> None:
        """Visit index expressions of subscript targets (their loads count)."""
        for child in ast.walk(node):
            if isinstance(child, ast.Subscript):
                self.expr(child.slice)

    # -- expressions ---------------------------------------------------------

    def expr(self, node: ast.expr) -> None:
        if isinstance(node, ast.Name):
            if isinstance(node.ctx, ast.Load):
                self.read(node.id)
            else:
                self.target(node)
        elif isinstance(node, ast.Attribute):
            base = _base_name(node)
            if base is not None:
                self.mutate(base)
            else:
                self.expr(node.value)
        elif isinstance(node, ast.Subscript):
            base = _base_name(node)
            if base is not None:
                self.mutate(base)
            else:
                self.expr(node.value)
            self.expr(node.slice)
        elif isinstance(node, ast.Call):
            self.expr(node.func)
            for arg in node.args:
                self.expr(arg)
            for keyword in node.keywords:
                self.expr(keyword.value)
        elif isinstance(node, ast.Lambda):
            self.scan_closure(node)
            for default in (*node.args.defaults, *node.args.kw_defaults):
                if default is not None:
                    self.expr(default)
        elif isinstance(node, (ast.ListComp, ast.SetComp, ast.DictComp, ast.GeneratorExp)):
            self.comprehension(node)
        elif isinstance(node, ast.NamedExpr):
            self.expr(node.value)
            self.store(node.target.id)
        else:
            for child in ast.iter_child_nodes(node):
                if isinstance(child, ast.expr):
                    self.expr(child)

    def comprehension(self, node) -> None:
        # The first iterable is evaluated before the targets shadow
        # anything; later clauses run inside the comprehension scope.
        self.expr(node.generators[0].iter)
        local = set()
        for gen in node.generators:
            local.update(_target_names(gen.target))
        self.frames.append(local)
        for pos, gen in enumerate(node.generators):
            if pos > 0:
                self.expr(gen.iter)
            for cond in gen.ifs:
                self.expr(cond)
        if isinstance(node, ast.DictComp):
            self.expr(node.key)
            self.expr(node.value)
        else:
            self.expr(node.elt)
        self.frames.pop()

    # -- nested scopes ---------------------------------------------------------

    def function_def(self, node) -> None:
        for decorator in node.decorator_list:
            self.expr(decorator)
        args = node.args
        for default in (*args.defaults, *args.kw_defaults):
            if default is not None:
                self.expr(default)
        self.scan_closure(node)
        self.store(node.name)

    def scan_closure(self, node) -> None:
        """Record a nested scope's effects on the cell namespace.

        Free variable loads become cell reads (the function can run in any
        later cell), free variable mutations and ``global`` assignments
        become cell writes.
        """
        scope = _scan_scope(node)
        own_name = getattr(node, "name", None)
        for name in sorted(scope.free_loads):
            if name != own_name:
                self.read(name)
        for name in sorted(scope.free_mutations):
            if name != own_name:
                self.mutate(name)
        for name in sorted(scope.global_writes):
            self.writes.add(name)
            self.read(name)

    def class_def(self, node: ast.ClassDef) -> None:
        for decorator in node.decorator_list:
            self.expr(decorator)
        for base in node.bases:
            self.expr(base)
        for keyword in node.keywords:
            self.expr(keyword.value)
        # Class-level names are attributes, not cell names, and they are
        # not visible from method bodies either.
        class_frame: set[str] = set()
        self.frames.append(class_frame)
        for child in node.body:
            if isinstance(child, (ast.FunctionDef, ast.AsyncFunctionDef, ast.Lambda)):
                self.frames.pop()
                self.scan_closure(child)
                self.frames.append(class_frame)
                if hasattr(child, "name"):
                    class_frame.add(child.name)
            elif isinstance(child, ast.Assign):
                self.expr(child.value)
                for target in child.targets:
                    for name in _target_names(target):
                        class_frame.add(name)
            else:
                saved_cond = self.cond
                self.cond += 1
                self.stmt(child)
                self.cond = saved_cond
        self.frames.pop()
        self.store(node.name)


# ---------------------------------------------------------------------------
# function scope scanning


@dataclass
class _ScopeReport:
    free_loads: set[str] = field(default_factory=set)
    free_mutations: set[str] = field(default_factory=set)
    global_writes: set[str] = field(default_factory=set)


def _scan_scope(node) -> _ScopeReport:
    """Free variables of a function or lambda, including nested scopes."""
    report = _ScopeReport()
    params = _param_names(node.args)
    body = node.body if isinstance(node.body, list) else [ast.Expr(node.body)]

    globals_declared: set[str] = set()
    nonlocals_declared: set[str] = set()
    stores: set[str] = set()
    loads: set[str] = set()
    mutations: set[str] = set()
    nested: list = []

    def collect(stmts: list) -> None:
        for child in stmts:
            _walk_scope_stmt(child, stores, loads, mutations, globals_declared,
                             nonlocals_declared, nested)

    collect(body)
    local = (params | stores) - globals_declared - nonlocals_declared
    report.free_loads = {n for n in loads - local if n not in _BUILTINS}
    report.free_mutations = {n for n in mutations - local if n not in _BUILTINS}
    report.global_writes = stores & globals_declared
    for child in nested:
        sub = _scan_scope(child)
        report.free_loads |= {n for n in sub.free_loads if n not in local}
        report.free_mutations |= {n for n in sub.free_mutations if n not in local}
        report.global_writes |= sub.global_writes
    # Nonlocal names resolved here stay internal; unresolved ones bubble up.
    report.free_loads |= nonlocals_declared - params - stores
    return report


def _walk_scope_stmt(node, stores, loads, mutations, globals_declared, nonlocals_declared, nested):
    if isinstance(node, (ast.FunctionDef, ast.AsyncFunctionDef)):
        stores.add(node.name)
        nested.append(node)
        for decorator in node.decorator_list:
            _walk_scope_expr(decorator, loads, mutations, nested)
        for default in (*node.args.defaults, *node.args.kw_defaults):
            if default is not None:
                _walk_scope_expr(default, loads, mutations, nested)
        return
    if isinstance(node, ast.ClassDef):
        stores.add(node.name)
        for child in node.body:
            _walk_scope_stmt(child, set(), loads, mutations, set(), set(), nested)
        return
    if isinstance(node, ast.Global):
        globals_declared.update(node.names)
        return
    if isinstance(node, ast.Nonlocal):
        nonlocals_declared.update(node.names)
        return
    if isinstance(node, (ast.Import, ast.ImportFrom)):
        for alias in node.names:
            if alias.name != "*":
                stores.add(alias.asname or alias.name.split(".")[0])
        return
    for name in _stmt_store_names(node):
        stores.add(name)
    for child in ast.iter_child_nodes(node):
        if isinstance(child, ast.stmt):
            _walk_scope_stmt(child, stores, loads, mutations, globals_declared,
                             nonlocals_declared, nested)
        elif isinstance(child, ast.expr):
            _walk_scope_expr(child, loads, mutations, nested)
        elif isinstance(child, ast.ExceptHandler):
            if child.name:
                stores.add(child.name)
            if child.type is not None:
                _walk_scope_expr(child.type, loads, mutations, nested)
            for sub in child.body:
                _walk_scope_stmt(sub, stores, loads, mutations, globals_declared,
                                 nonlocals_declared, nested)


def _walk_scope_expr(node, loads, mutations, nested):
    if isinstance(node, ast.Lambda):
        nested.append(node)
        for default in (*node.args.defaults, *node.args.kw_defaults):
            if default is not None:
                _walk_scope_expr(default, loads, mutations, nested)
        return
    if isinstance(node, (ast.ListComp, ast.SetComp, ast.GeneratorExp, ast.DictComp)):
        # Comprehensions are their own scope; targets never escape, but
        # the first iterable is evaluated in the enclosing scope.
        comp_locals: set[str] = set()
        inner_loads: set[str] = set()
        inner_mutations: set[str] = set()
        for pos, gen in enumerate(node.generators):
            if pos == 0:
                _walk_scope_expr(gen.iter, loads, mutations, nested)
            else:
                _walk_scope_expr(gen.iter, inner_loads, inner_mutations, nested)
            comp_locals |= _target_names(gen.target)
            for cond in gen.ifs:
                _walk_scope_expr(cond, inner_loads, inner_mutations, nested)
        elements = ([node.key, node.value] if isinstance(node, ast.DictComp)
                    else [node.elt])
        for element in elements:
            _walk_scope_expr(element, inner_loads, inner_mutations, nested)
        loads.update(inner_loads - comp_locals)
        mutations.update(inner_mutations - comp_locals)
        return
    if isinstance(node, ast.Name):
        if isinstance(node.ctx, ast.Load):
            loads.add(node.id)
        return
    if isinstance(node, (ast.Attribute, ast.Subscript)):
        base = _base_name(node)
        if base is not None:
            loads.add(base)
            if not isinstance(node.ctx, ast.Load) or isinstance(node, ast.Attribute):
                mutations.add(base)
            elif isinstance(node, ast.Subscript):
                mutations.add(base)
        else:
            _walk_scope_expr(node.value, loads, mutations, nested)
        if isinstance(node, ast.Subscript):
            _walk_scope_expr(node.slice, loads, mutations, nested)
        return
    if isinstance(node, ast.NamedExpr):
        _walk_scope_expr(node.value, loads, mutations, nested)
        return
    for child in ast.iter_child_nodes(node):
        if isinstance(child, ast.expr):
            _walk_scope_expr(child, loads, mutations, nested)


def _stmt_store_names(node) -> set[str]:
    names: set[str] = set()
    if isinstance(node, ast.Assign):
        for target in node.targets:
            names.update(_target_names(target))
    elif isinstance(node, ast.AnnAssign) and node.value is not None:
        names.update(_target_names(node.target))
    elif isinstance(node, ast.AugAssign):
        names.update(_target_names(node.target))
    elif isinstance(node, (ast.For, ast.AsyncFor)):
        names.update(_target_names(node.target))
    elif isinstance(node, (ast.With, ast.AsyncWith)):
        for item in node.items:
            if item.optional_vars is not None:
                names.update(_target_names(item.optional_vars))
    elif isinstance(node, ast.Match):
        for case in node.cases:
            names.update(_pattern_names(case.pattern))
    for child in ast.walk(node):
        if isinstance(child, ast.NamedExpr) and isinstance(child.target, ast.Name):
            names.add(child.target.id)
    return names


# ---------------------------------------------------------------------------
# small helpers


def _param_names(args: ast.arguments) -> set[str]:
    names = {a.arg for a in (*args.posonlyargs, *args.args, *args.kwonlyargs)}
    if args.vararg:
        names.add(args.vararg.arg)
    if args.kwarg:
        names.add(args.kwarg.arg)
    return names


def _base_name(node) -> str | None:
    while isinstance(node, (ast.Attribute, ast.Subscript)):
        node = node.value
    if isinstance(node, ast.Name):
        return node.id
    return None


def _target_names(node) -> set[str]:
    names: set[str] = set()
    if isinstance(node, ast.Name):
        names.add(node.id)
    elif isinstance(node, (ast.Tuple, ast.List)):
        for element in node.elts:
            names.update(_target_names(element))
    elif isinstance(node, ast.Starred):
        names.update(_target_names(node.value))
    return names


def _pattern_names(pattern) -> set[str]:
    names: set[str] = set()
    for node in ast.walk(pattern):
        if isinstance(node, ast.MatchAs) and node.name:
            names.add(node.name)
        elif isinstance(node, ast.MatchStar) and node.name:
            names.add(node.name)
        elif isinstance(node, ast.MatchMapping) and node.rest:
            names.add(node.rest)
    return names
