"""Cell dependency graph built from read/write sets.

Each name a cell reads is connected to its closest preceding writer,
one edge per (reader, name) pair.  Users can re-route an edge by
pinning (reader, name) to a different writer, mark how an edge is
materialized (a concrete data file or a wildcard template), and label
cells as pipeline rules or importable scripts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

LABELS = ("rule", "script", "undecided")
RESOLUTIONS = ("data_file", "wildcard")


class DagError(ValueError):
    pass


@dataclass
class CellNode:
    source: str
    reads: set[str] = field(default_factory=set)
    writes: set[str] = field(default_factory=set)
    label: str = "rule"
    name: str = ""
    origin: int | None = None
    is_function: bool = False
    warnings: list[str] = field(default_factory=list)

    def content_id(self, index: int) -> str:
        digest = hashlib.sha1(self.source.encode("utf-8")).hexdigest()[:8]
        return f"c{index}-{digest}"


@dataclass
class DagEdge:
    src: int
    dst: int
    name: str
    resolution: str = "data_file"
    wildcard: str | None = None


@dataclass
class Dag:
    nodes: list[CellNode] = field(default_factory=list)
    edges: list[DagEdge] = field(default_factory=list)
    pins: dict[tuple[int, str], int] = field(default_factory=dict)
    external: dict[int, set[str]] = field(default_factory=dict)

    # -- queries ---------------------------------------------------------

    def edge(self, dst: int, name: str) -> DagEdge | None:
        # At most one writer per (reader, name).
        for e in self.edges:
            if e.dst == dst and e.name == name:
                return e
        return None

    def in_edges(self, index: int) -> list[DagEdge]:
        return [e for e in self.edges if e.dst == index]

    def out_edges(self, index: int) -> list[DagEdge]:
        return [e for e in self.edges if e.src == index]

    def predecessors(self, index: int) -> list[int]:
        return sorted({e.src for e in self.edges if e.dst == index})

    def successors(self, index: int) -> list[int]:
        return sorted({e.dst for e in self.edges if e.src == index})

    def topo_order(self) -> list[int]:
        # Edges always point forward, so list order is topological.
        return list(range(len(self.nodes)))

    def assert_acyclic(self) -> None:
        for e in self.edges:
            if e.src >= e.dst:
                raise DagError(f"backward edge {e.src} -> {e.dst} ({e.name})")

    # -- edits -----------------------------------------------------------

    def set_label(self, index: int, label: str) -> None:
        if label not in LABELS:
            raise DagError(f"unknown label {label!r}")
        node = self._node(index)
        if node.is_function and label != "script":
            raise DagError("extracted function cells must stay scripts")
        node.label = label

    def set_resolution(self, dst: int, name: str, resolution: str,
                       wildcard: str | None = None) -> None:
        if resolution not in RESOLUTIONS:
            raise DagError(f"unknown resolution {resolution!r}")
        edge = self.edge(dst, name)
        if edge is None:
            raise DagError(f"no edge for {name!r} into cell {dst}")
        edge.resolution = resolution
        edge.wildcard = (wildcard or name) if resolution == "wildcard" else None

    def pin_writer(self, dst: int, name: str, src: int) -> None:
        self._node(dst)
        if name not in self._node(src).writes:
            raise DagError(f"cell {src} does not write {name!r}")
        if src >= dst:
            raise DagError("a dependency must come from an earlier cell")
        if name not in self.nodes[dst].reads:
            raise DagError(f"cell {dst} does not read {name!r}")
        self.pins[(dst, name)] = src

    def unpin(self, dst: int, name: str) -> None:
        self.pins.pop((dst, name), None)

    def _node(self, index: int) -> CellNode:
        if not 0 <= index < len(self.nodes):
            raise DagError(f"cell index {index} out of range")
        return self.nodes[index]

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "cells": [
                {
                    "id": n.content_id(i),
                    "source": n.source,
                    "reads": sorted(n.reads),
                    "writes": sorted(n.writes),
                    "name": n.name,
                    "origin": n.origin,
                    "is_function": n.is_function,
                    "warnings": list(n.warnings),
                }
                for i, n in enumerate(self.nodes)
            ],
            "edges": [
                {
                    "src": e.src,
                    "dst": e.dst,
                    "name": e.name,
                    "resolution": e.resolution,
                    "wildcard": e.wildcard,
                }
                for e in self.edges
            ],
            "pins": [
                {"dst": dst, "name": name, "src": src}
                for (dst, name), src in sorted(self.pins.items())
            ],
            "labels": [n.label for n in self.nodes],
        }


def build_dag(nodes: list[CellNode],
              pins: dict[tuple[int, str], int] | None = None,
              resolutions: dict[tuple[int, str], tuple[str, str | None]] | None = None,
              ) -> Dag:
    """Connect every read to its closest preceding writer, honoring pins."""
    pins = dict(pins or {})
    for (dst, name), src in pins.items():
        if not 0 <= src < len(nodes) or not 0 <= dst < len(nodes):
            raise DagError(f"pin ({dst}, {name!r}) -> {src} is out of range")
        if src >= dst:
            raise DagError("a dependency must come from an earlier cell")
        if name not in nodes[src].writes:
            raise DagError(f"cell {src} does not write {name!r}")

    edges: list[DagEdge] = []
    external: dict[int, set[str]] = {}
    for i, node in enumerate(nodes):
        for name in sorted(node.reads):
            src = pins.get((i, name))
            if src is None:
                src = _closest_writer(nodes, i, name)
            if src is None:
                external.setdefault(i, set()).add(name)
            else:
                edges.append(DagEdge(src=src, dst=i, name=name))
    if resolutions:
        by_key = {(e.dst, e.name): e for e in edges}
        for (dst, name), (resolution, wildcard) in resolutions.items():
            edge = by_key.get((dst, name))
            if edge is not None and resolution in RESOLUTIONS:
                edge.resolution = resolution
                edge.wildcard = (wildcard or name) if resolution == "wildcard" else None
    dag = Dag(nodes=nodes, edges=edges, pins=pins, external=external)
    dag.assert_acyclic()
    return dag


def _closest_writer(nodes: list[CellNode], reader: int, name: str) -> int | None:
    for j in range(reader - 1, -1, -1):
        if name in nodes[j].writes:
            return j
    return None


@dataclass
class LabelViolation:
    kind: str
    cells: list[int]
    names: list[str]
    message: str


def check_label_constraints(dag: Dag) -> list[LabelViolation]:
    """A rule's outputs are files; only other rules can consume them.

    Undecided cells block export outright.
    """
    violations: list[LabelViolation] = []
    for edge in dag.edges:
        if dag.nodes[edge.src].label == "rule" and dag.nodes[edge.dst].label == "script":
            violations.append(LabelViolation(
                "rule_to_script", [edge.src, edge.dst], [edge.name],
                f"script cell {edge.dst} reads {edge.name!r} from rule cell "
                f"{edge.src}; scripts cannot consume rule outputs",
            ))
    for i, node in enumerate(dag.nodes):
        if node.label == "undecided":
            violations.append(LabelViolation(
                "undecided_cell", [i], [],
                f"cell {i} is still undecided; label it rule or script before export",
            ))
    return violations
