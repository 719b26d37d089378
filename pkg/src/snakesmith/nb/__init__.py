"""Notebook decomposition: cells, dataflow, dependency graph, export."""

from .cells import Cell, NotebookError, parse_notebook, sanitize_source, strip_imports
from .rwsets import RWSets, compute_rw_sets
from .functions import isolate_functions
from .dag import (
    CellNode,
    Dag,
    DagEdge,
    DagError,
    LabelViolation,
    build_dag,
    check_label_constraints,
)
from .session import NotebookSession, SessionError
from .export import (
    ArtifactSpec,
    CodegenPlan,
    ExportError,
    ExportResult,
    assign_artifacts,
    export,
    generate_blocks,
    propagate_change,
)

__all__ = [
    "Cell",
    "NotebookError",
    "parse_notebook",
    "sanitize_source",
    "strip_imports",
    "RWSets",
    "compute_rw_sets",
    "isolate_functions",
    "CellNode",
    "Dag",
    "DagEdge",
    "DagError",
    "LabelViolation",
    "build_dag",
    "check_label_constraints",
    "NotebookSession",
    "SessionError",
    "ArtifactSpec",
    "CodegenPlan",
    "ExportError",
    "ExportResult",
    "assign_artifacts",
    "export",
    "generate_blocks",
    "propagate_change",
]
