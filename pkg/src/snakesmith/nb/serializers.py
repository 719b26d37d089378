"""Canonical code snippets for moving variables through artifact files.

Three formats cover the data passed between generated scripts: tab
separated tables for dataframes, JSON for plain mappings and lists,
and pickle for everything else.
"""

from __future__ import annotations

FORMATS = ("tabular_text", "json_text", "generic_binary")

EXTENSIONS = {
    "tabular_text": ".tsv",
    "json_text": ".json",
    "generic_binary": ".bin",
}

IMPORTS = {
    "tabular_text": "import pandas as pd",
    "json_text": "import json",
    "generic_binary": "import pickle",
}


def extension_for(fmt: str) -> str:
    return EXTENSIONS.get(fmt, ".bin")


def import_lines(formats: set[str]) -> list[str]:
    return sorted({IMPORTS[f] for f in formats if f in IMPORTS})


def read_lines(variable: str, path_expr: str, fmt: str) -> list[str]:
    """Statements assigning `variable` from the file at `path_expr`."""
    if fmt == "tabular_text":
        return [f'{variable} = pd.read_csv({path_expr}, sep="\\t")']
    if fmt == "json_text":
        return [
            f"with open({path_expr}) as _fh:",
            f"    {variable} = json.load(_fh)",
        ]
    return [
        f'with open({path_expr}, "rb") as _fh:',
        f"    {variable} = pickle.load(_fh)",
    ]


def write_lines(variable: str, path_expr: str, fmt: str) -> list[str]:
    """Statements writing `variable` to the file at `path_expr`."""
    if fmt == "tabular_text":
        return [f'{variable}.to_csv({path_expr}, sep="\\t", index=False)']
    if fmt == "json_text":
        return [
            f'with open({path_expr}, "w") as _fh:',
            f"    json.dump({variable}, _fh)",
        ]
    return [
        f'with open({path_expr}, "wb") as _fh:',
        f"    pickle.dump({variable}, _fh)",
    ]


def prefix_block(inputs: list[dict], any_artifacts: bool) -> str:
    """Argument parsing plus one read per incoming artifact.

    Each input dict carries variable, format, and arg (its position in
    the script's command line: inputs first, then outputs).
    """
    if not any_artifacts:
        return ""
    lines = ["_args = sys.argv[1:]"]
    for item in sorted(inputs, key=lambda d: d["arg"]):
        lines += read_lines(item["variable"], f"_args[{item['arg']}]", item["format"])
    return "\n".join(lines)


def suffix_block(outputs: list[dict]) -> str:
    """One write per outgoing artifact, creating parent directories."""
    lines: list[str] = []
    for item in sorted(outputs, key=lambda d: d["arg"]):
        path = f"_args[{item['arg']}]"
        lines.append(f'os.makedirs(os.path.dirname({path}) or ".", exist_ok=True)')
        lines += write_lines(item["variable"], path, item["format"])
    return "\n".join(lines)
