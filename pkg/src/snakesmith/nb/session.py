"""Review session for one notebook: analysis state plus user edits.

The session owns every mutation (edits, pins, labels) and recomputes
read/write sets and the dependency graph after each change.  User pins
survive recomputation; machine-derived state never overrides them.
Cells are assumed to run in document order.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .cells import Cell, NotebookError, parse_notebook, sanitize_source, strip_imports
from .dag import Dag, CellNode, DagError, build_dag, LABELS
from .functions import FunctionInfo, isolate_functions
from .rwsets import compute_rw_sets
from .serializers import FORMATS

_NAME = re.compile(r"^[A-Za-z_]\w*$")


class SessionError(ValueError):
    pass


@dataclass
class SessionCell:
    source: str
    origin: int
    name: str
    is_function: bool = False
    function: FunctionInfo | None = None
    magics: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    # Import statements this cell's names require, refreshed on recompute.
    imports: list[str] = field(default_factory=list)


@dataclass
class RefineCorrection:
    cell: int
    add_reads: list[str] = field(default_factory=list)
    drop_reads: list[str] = field(default_factory=list)
    add_writes: list[str] = field(default_factory=list)
    drop_writes: list[str] = field(default_factory=list)

    def empty(self) -> bool:
        return not (self.add_reads or self.drop_reads
                    or self.add_writes or self.drop_writes)


class NotebookSession:
    def __init__(self) -> None:
        self.cells: list[SessionCell] = []
        self.labels: list[str] = []
        self.import_statements: list[str] = []
        self.star_modules: list[str] = []
        self.rw_pins: dict[int, tuple[set[str], set[str]]] = {}
        self.rw_refined: dict[int, tuple[set[str], set[str]]] = {}
        self.writer_pins: dict[tuple[int, str], int] = {}
        self.resolution_pins: dict[tuple[int, str], tuple[str, str | None]] = {}
        self.format_pins: dict[tuple[int, str], str] = {}
        self.terminal_marks: list[tuple[int, str, str | None]] = []
        self.findings: list[str] = []
        self.dag: Dag = Dag()

    # -- construction ------------------------------------------------------

    @classmethod
    def from_notebook(cls, text: str | Path) -> "NotebookSession":
        cells = parse_notebook(text)
        sources = [c.source for c in cells if c.is_code]
        if not sources:
            raise NotebookError("notebook has no code cells")
        return cls.from_sources(sources)

    @classmethod
    def from_sources(cls, sources: list[str]) -> "NotebookSession":
        session = cls()
        clean_sources: list[str] = []
        magics: list[list[str]] = []
        stripped_stmts: list[list[str]] = []
        import_names: set[str] = set()
        seen_stmts: set[str] = set()
        for source in sources:
            clean, dropped = sanitize_source(source)
            stripped = strip_imports(clean)
            clean_sources.append(stripped.source)
            magics.append(dropped)
            cell_stmts = []
            for stmt in stripped.statements:
                cell_stmts.append(stmt)
                if stmt not in seen_stmts:
                    seen_stmts.add(stmt)
                    session.import_statements.append(stmt)
            stripped_stmts.append(cell_stmts)
            import_names |= stripped.names
            for module in stripped.star_modules:
                session.star_modules.append(module)
                session.findings.append(
                    f"star import from {module}: unknown names are treated "
                    "as externally provided reads")

        isolation = isolate_functions(clean_sources, known_modules=import_names)
        session.findings.extend(isolation.findings)
        taken: set[str] = set()
        for out_index, source in enumerate(isolation.cells):
            origin = isolation.origins[out_index]
            info = isolation.functions.get(out_index)
            if info is not None:
                name = info.new_name
            else:
                name = _unique(f"cell{origin}", taken)
            taken.add(name)
            session.cells.append(SessionCell(
                source=source,
                origin=origin,
                name=name,
                is_function=info is not None,
                function=info,
                magics=[] if info is not None else magics[origin],
            ))
            session.labels.append("script" if info is not None else "rule")
        session.recompute()
        return session

    # -- analysis ------------------------------------------------------------

    def import_bound_names(self) -> set[str]:
        names: set[str] = set()
        for stmt in self.import_statements:
            names |= strip_imports(stmt).names
        return names

    def recompute(self) -> Dag:
        bound = self.import_bound_names()
        stmt_names = [(stmt, strip_imports(stmt).names)
                      for stmt in self.import_statements]
        nodes: list[CellNode] = []
        for i, cell in enumerate(self.cells):
            rw = compute_rw_sets(cell.source)
            warnings = list(cell.warnings) + list(rw.warnings)
            if not rw.parse_ok:
                if self.labels[i] != "undecided":
                    self.labels[i] = "undecided"
                warnings.append("cell does not parse; resolve before export")
            raw_names = rw.reads | rw.writes
            cell.imports = [stmt for stmt, names in stmt_names
                            if names & raw_names]
            reads, writes = rw.reads - bound, rw.writes - bound
            if i in self.rw_refined:
                reads, writes = (set(s) for s in self.rw_refined[i])
            if i in self.rw_pins:
                reads, writes = (set(s) for s in self.rw_pins[i])
            nodes.append(CellNode(
                source=cell.source,
                reads=reads,
                writes=writes,
                label=self.labels[i],
                name=cell.name,
                origin=cell.origin,
                is_function=cell.is_function,
                warnings=warnings,
            ))
        self._drop_stale_pins(nodes)
        self.dag = build_dag(nodes, self.writer_pins, self.resolution_pins)
        return self.dag

    def _drop_stale_pins(self, nodes: list[CellNode]) -> None:
        for (dst, name), src in list(self.writer_pins.items()):
            ok = (0 <= src < len(nodes) and 0 <= dst < len(nodes)
                  and src < dst
                  and name in nodes[src].writes
                  and name in nodes[dst].reads)
            if not ok:
                del self.writer_pins[(dst, name)]
                self.findings.append(
                    f"dropped writer pin {name!r}: cell {src} -> {dst} no longer applies")

    # -- edits ---------------------------------------------------------------

    def edit_cell(self, index: int, source: str) -> None:
        self._cell(index)
        self.cells[index].source = source
        # Machine refinements are stale once the source changes; user pins stay.
        self.rw_refined.pop(index, None)
        self.recompute()

    def set_label(self, index: int, label: str) -> None:
        cell = self._cell(index)
        if label not in LABELS:
            raise SessionError(f"unknown label {label!r}")
        if cell.is_function and label != "script":
            raise SessionError("extracted function cells must stay scripts")
        self.labels[index] = label
        self.recompute()

    def set_rw(self, index: int, reads: set[str], writes: set[str]) -> None:
        self._cell(index)
        self.rw_pins[index] = (set(reads), set(writes))
        self.recompute()

    def clear_rw(self, index: int) -> None:
        self.rw_pins.pop(index, None)
        self.recompute()

    def pin_writer(self, dst: int, name: str, src: int) -> None:
        # Validates against the current graph before persisting the pin.
        self.dag.pin_writer(dst, name, src)
        self.writer_pins[(dst, name)] = src
        self.recompute()

    def unpin_writer(self, dst: int, name: str) -> None:
        self.writer_pins.pop((dst, name), None)
        self.recompute()

    def set_resolution(self, dst: int, name: str, resolution: str,
                       wildcard: str | None = None) -> None:
        self.dag.set_resolution(dst, name, resolution, wildcard)
        self.resolution_pins[(dst, name)] = (
            resolution, wildcard or (name if resolution == "wildcard" else None))

    def set_format(self, cell: int, variable: str, fmt: str) -> None:
        self._cell(cell)
        if fmt not in FORMATS:
            raise SessionError(f"unknown format {fmt!r}")
        self.format_pins[(cell, variable)] = fmt

    def mark_terminal(self, cell: int, variable: str, fmt: str | None = None) -> None:
        self._cell(cell)
        if fmt is not None and fmt not in FORMATS:
            raise SessionError(f"unknown format {fmt!r}")
        if variable not in self.dag.nodes[cell].writes:
            raise SessionError(f"cell {cell} does not write {variable!r}")
        mark = (cell, variable, fmt)
        if mark not in self.terminal_marks:
            self.terminal_marks = [m for m in self.terminal_marks
                                   if (m[0], m[1]) != (cell, variable)]
            self.terminal_marks.append(mark)

    def rename_cell(self, index: int, name: str) -> None:
        self._cell(index)
        if not _NAME.match(name):
            raise SessionError(f"{name!r} is not a valid cell name")
        others = {c.name for j, c in enumerate(self.cells) if j != index}
        if name in others:
            raise SessionError(f"cell name {name!r} already in use")
        self.cells[index].name = name
        self.recompute()

    def merge_cells(self, indices: list[int]) -> None:
        ids = sorted(set(indices))
        if len(ids) < 2:
            raise SessionError("merge needs at least two cells")
        for i in ids:
            self._cell(i)
        first = ids[0]
        # A cell between the merge targets that feeds a later target would
        # end up writing after its reader runs.
        for edge in self.dag.edges:
            if edge.dst in ids and edge.src not in ids and edge.src > first:
                raise SessionError(
                    f"merge would order cell {edge.dst}'s read of "
                    f"{edge.name!r} before its writer (cell {edge.src})")
        merged = SessionCell(
            source="\n\n".join(self.cells[i].source for i in ids),
            origin=self.cells[first].origin,
            name=self.cells[first].name,
            is_function=any(self.cells[i].is_function for i in ids),
            function=self.cells[first].function,
            magics=[m for i in ids for m in self.cells[i].magics],
            warnings=[w for i in ids for w in self.cells[i].warnings],
        )
        label = "script" if merged.is_function else self.labels[first]
        keep = [i for i in range(len(self.cells)) if i not in ids[1:]]
        self._reindex(keep, touched=set(ids))
        self.cells[self._new_index(keep, first)] = merged
        self.labels[self._new_index(keep, first)] = label
        self.recompute()

    def split_cell(self, index: int, line: int) -> None:
        cell = self._cell(index)
        lines = cell.source.splitlines()
        if not 1 <= line < len(lines):
            raise SessionError(f"split line {line} out of bounds")
        head, tail = "\n".join(lines[:line]), "\n".join(lines[line:])
        if not head.strip() or not tail.strip():
            raise SessionError("both halves of a split must contain code")
        taken = {c.name for c in self.cells}
        second = SessionCell(
            source=tail, origin=cell.origin,
            name=_unique(cell.name, taken),
            is_function=False, function=None,
        )
        keep = list(range(len(self.cells)))
        self._reindex(keep, touched={index}, insert_after=index)
        cell.source = head
        self.cells.insert(index + 1, second)
        self.labels.insert(index + 1, self.labels[index])
        self.recompute()

    def delete_cell(self, index: int) -> None:
        self._cell(index)
        keep = [i for i in range(len(self.cells)) if i != index]
        self._reindex(keep, touched={index})
        self.recompute()

    def _reindex(self, keep: list[int], touched: set[int],
                 insert_after: int | None = None) -> None:
        """Rebuild cell list and remap or drop index-keyed state.

        keep lists surviving old indices in order; pins touching any
        `touched` cell are dropped (their meaning changed).
        """
        remap = {old: new for new, old in enumerate(keep)}
        if insert_after is not None:
            # A split shifts everything after the split point down by one.
            remap = {old: (new if old <= insert_after else new + 1)
                     for old, new in remap.items()}
        self.cells = [self.cells[i] for i in keep]
        self.labels = [self.labels[i] for i in keep]

        def live(*indices: int) -> bool:
            return all(i in remap and i not in touched for i in indices)

        self.rw_pins = {remap[i]: v for i, v in self.rw_pins.items() if live(i)}
        self.rw_refined = {remap[i]: v for i, v in self.rw_refined.items() if live(i)}
        dropped = [k for k in self.writer_pins
                   if not live(k[0], self.writer_pins[k])]
        for key in dropped:
            self.findings.append(f"dropped writer pin for {key[1]!r} after cell edit")
        self.writer_pins = {
            (remap[dst], name): remap[src]
            for (dst, name), src in self.writer_pins.items()
            if live(dst, src)
        }
        self.resolution_pins = {
            (remap[dst], name): v
            for (dst, name), v in self.resolution_pins.items() if live(dst)
        }
        self.format_pins = {
            (remap[c], var): fmt
            for (c, var), fmt in self.format_pins.items() if live(c)
        }
        self.terminal_marks = [
            (remap[c], var, fmt)
            for c, var, fmt in self.terminal_marks if live(c)
        ]

    @staticmethod
    def _new_index(keep: list[int], old: int) -> int:
        return keep.index(old)

    def _cell(self, index: int) -> SessionCell:
        if not 0 <= index < len(self.cells):
            raise SessionError(f"cell index {index} out of range")
        return self.cells[index]

    # -- model-assisted refinement ------------------------------------------

    def refine_rw_sets(self, evidence: dict[int, list[str]], gateway,
                       profile=None) -> list[RefineCorrection]:
        """Ask the model to correct sets for cells with undefined names.

        Additions are applied only when the name occurs in the cell
        source; unknown cells and absent names are ignored.
        """
        if not evidence or gateway is None:
            return []
        # Local import: the llm package pulls in prompt assets lazily.
        from ..llm.gateway import ModelProfile
        from ..llm.prompts import build_exchange

        profile = profile or ModelProfile()
        applied: list[RefineCorrection] = []
        for index in sorted(evidence):
            if not 0 <= index < len(self.cells) or not evidence[index]:
                continue
            if index in self.rw_pins:
                continue
            node = self.dag.nodes[index]
            exchange = build_exchange(
                "refine_rwsets",
                source=self.cells[index].source,
                reads=", ".join(sorted(node.reads)) or "(none)",
                writes=", ".join(sorted(node.writes)) or "(none)",
                undefined=", ".join(sorted(evidence[index])),
            )
            shape = {"add_reads": list, "drop_reads": list,
                     "add_writes": list, "drop_writes": list}
            try:
                reply = gateway.complete_structured(profile, exchange, shape)
            except Exception as err:
                self.findings.append(f"rw refinement failed for cell {index}: {err}")
                continue
            correction = self._apply_refinement(index, node, reply)
            if not correction.empty():
                applied.append(correction)
        if applied:
            self.recompute()
        return applied

    def _apply_refinement(self, index: int, node: CellNode, reply: dict) -> RefineCorrection:
        source = self.cells[index].source
        occurs = lambda n: isinstance(n, str) and re.search(rf"\b{re.escape(n)}\b", source)
        reads, writes = set(node.reads), set(node.writes)
        corr = RefineCorrection(cell=index)
        for name in reply.get("add_reads", []):
            if occurs(name) and name not in reads:
                reads.add(name)
                corr.add_reads.append(name)
        for name in reply.get("drop_reads", []):
            if name in reads:
                reads.discard(name)
                corr.drop_reads.append(name)
        for name in reply.get("add_writes", []):
            if occurs(name) and name not in writes:
                writes.add(name)
                corr.add_writes.append(name)
        for name in reply.get("drop_writes", []):
            if name in writes:
                writes.discard(name)
                corr.drop_writes.append(name)
        if not corr.empty():
            self.rw_refined[index] = (reads, writes)
        return corr

    # -- persistence ---------------------------------------------------------

    def to_dict(self) -> dict:
        data = self.dag.to_dict()
        for i, cell in enumerate(self.cells):
            data["cells"][i].update({
                "origin": cell.origin,
                "magics": list(cell.magics),
                "imports": list(cell.imports),
                "function": {
                    "original_name": cell.function.original_name,
                    "new_name": cell.function.new_name,
                    "free_vars": sorted(cell.function.free_vars),
                } if cell.function else None,
            })
        data["pins"] = {
            "rw": [{"cell": i, "reads": sorted(r), "writes": sorted(w)}
                   for i, (r, w) in sorted(self.rw_pins.items())],
            "refined": [{"cell": i, "reads": sorted(r), "writes": sorted(w)}
                        for i, (r, w) in sorted(self.rw_refined.items())],
            "writers": [{"dst": dst, "name": name, "src": src}
                        for (dst, name), src in sorted(self.writer_pins.items())],
            "resolutions": [
                {"dst": dst, "name": name, "resolution": res, "wildcard": wc}
                for (dst, name), (res, wc) in sorted(self.resolution_pins.items())],
            "formats": [{"cell": c, "variable": v, "format": fmt}
                        for (c, v), fmt in sorted(self.format_pins.items())],
            "terminal": [{"cell": c, "variable": v, "format": fmt}
                         for c, v, fmt in self.terminal_marks],
        }
        data["version"] = 1
        data["imports"] = list(self.import_statements)
        data["findings"] = list(self.findings)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "NotebookSession":
        if data.get("version") != 1:
            raise SessionError("unsupported session version")
        session = cls()
        labels = data.get("labels", [])
        for i, cell in enumerate(data.get("cells", [])):
            fn = cell.get("function")
            session.cells.append(SessionCell(
                source=cell["source"],
                origin=cell.get("origin", i),
                name=cell.get("name", f"cell{i}"),
                is_function=cell.get("is_function", False),
                function=FunctionInfo(
                    original_name=fn["original_name"],
                    new_name=fn["new_name"],
                    origin=cell.get("origin", i),
                    free_vars=set(fn.get("free_vars", [])),
                ) if fn else None,
                magics=list(cell.get("magics", [])),
            ))
            session.labels.append(labels[i] if i < len(labels) else "undecided")
        session.import_statements = list(data.get("imports", []))
        pins = data.get("pins", {})
        for p in pins.get("rw", []):
            session.rw_pins[p["cell"]] = (set(p["reads"]), set(p["writes"]))
        for p in pins.get("refined", []):
            session.rw_refined[p["cell"]] = (set(p["reads"]), set(p["writes"]))
        for p in pins.get("writers", []):
            session.writer_pins[(p["dst"], p["name"])] = p["src"]
        for p in pins.get("resolutions", []):
            session.resolution_pins[(p["dst"], p["name"])] = (
                p["resolution"], p.get("wildcard"))
        for p in pins.get("formats", []):
            session.format_pins[(p["cell"], p["variable"])] = p["format"]
        for p in pins.get("terminal", []):
            session.terminal_marks.append((p["cell"], p["variable"], p.get("format")))
        session.findings = list(data.get("findings", []))
        session.recompute()
        return session

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "NotebookSession":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _unique(base: str, taken: set[str]) -> str:
    if base not in taken:
        return base
    n = 2
    while f"{base}_{n}" in taken:
        n += 1
    return f"{base}_{n}"
