"""Deterministic cleanup passes for model-generated workflow text.

Four passes run in a fixed order:

1. rewrite ``config.key`` attribute chains to ``config["key"]`` indexing,
   both in code and inside ``{...}`` format fields of string literals,
2. strip surrounding markdown code fences,
3. replace leading tab indentation with four-space units,
4. drop prose lines that precede the first workflow keyword.

Every pass is idempotent, so the composite is too.
"""

from __future__ import annotations

import re

_ATTR = re.compile(r"\.([A-Za-z_]\w*)")
_CONFIG = re.compile(r"(?<![\w.])config\b")
_FENCE = re.compile(r"^```")

_STRUCTURAL = re.compile(
    r"""^(?:
        (?:rule|checkpoint)\s+\w+\s*:
      | (?:configfile|include|workdir|container|report)\s*:
      | (?:import|from)\s+\w
      | (?:def|class|if|for|while|try|with)\b
      | (?:wildcard_constraints|localrules|ruleorder|envvars
         |onstart|onsuccess|onerror|scattergather|module)\b
    )""",
    re.VERBOSE,
)

_CODE_LIKE = re.compile(
    r"""^(?:
        [#"'@\s]
      | (?:rule|checkpoint)\b         # even without the colon: fixable later
      | [a-z_]+:
      | [A-Za-z_][\w.]*\s*=(?!=)
      | [A-Za-z_][\w.]*\s*\(
    )""",
    re.VERBOSE,
)


def fix_common_errors(text: str) -> str:
    text = _rewrite_config_refs(text)
    text = _strip_fences(text)
    text = _expand_leading_tabs(text)
    text = _strip_preamble_prose(text)
    return text


# ---------------------------------------------------------------------------
# segmentation

# A segment is (kind, start, end, quote) with kind one of:
#   code     outside strings and comments
#   comment  from # to end of line
#   str      string literal text, including its quotes
#   fmt      the inside of a {...} format field within a string
# Segments are contiguous and cover the whole text.


def _segments(text: str) -> list[tuple[str, int, int, str | None]]:
    segs: list[tuple[str, int, int, str | None]] = []
    n = len(text)

    def emit(kind: str, start: int, end: int, quote: str | None = None) -> None:
        if end > start:
            segs.append((kind, start, end, quote))

    i = 0
    code_start = 0
    while i < n:
        ch = text[i]
        if ch == "#":
            emit("code", code_start, i)
            j = text.find("\n", i)
            j = n if j == -1 else j
            emit("comment", i, j)
            code_start = j
            i = j
            continue
        if ch in "\"'":
            emit("code", code_start, i)
            quote = ch * 3 if text.startswith(ch * 3, i) else ch
            j = i + len(quote)
            depth = 0
            part_start = i
            while j < n:
                c = text[j]
                if c == "\\":
                    j += 2
                    continue
                if c == "\n" and len(quote) == 1:
                    break
                if depth == 0 and text.startswith(quote, j):
                    j += len(quote)
                    break
                if c == "{":
                    if text.startswith("{{", j):
                        j += 2
                        continue
                    depth += 1
                    if depth == 1:
                        emit("str", part_start, j + 1, quote)
                        part_start = j + 1
                    j += 1
                    continue
                if c == "}":
                    if depth == 0 and text.startswith("}}", j):
                        j += 2
                        continue
                    if depth > 0:
                        depth -= 1
                        if depth == 0:
                            emit("fmt", part_start, j, quote)
                            part_start = j
                    j += 1
                    continue
                j += 1
            j = min(j, n)
            kind = "fmt" if depth > 0 else "str"
            emit(kind, part_start, j, quote)
            code_start = j
            i = j
            continue
        i += 1
    emit("code", code_start, n)
    return segs


# ---------------------------------------------------------------------------
# pass 1: config attribute chains


def _rewrite_config_refs(text: str) -> str:
    out: list[str] = []
    for kind, start, end, quote in _segments(text):
        seg = text[start:end]
        if kind == "code":
            out.append(_rewrite_chunk(seg, escape=False))
        elif kind == "fmt":
            out.append(_rewrite_chunk(seg, escape=quote == '"'))
        else:
            out.append(seg)
    return "".join(out)


def _rewrite_chunk(text: str, escape: bool) -> str:
    out: list[str] = []
    pos = 0
    for m in _CONFIG.finditer(text):
        if m.start() < pos:
            continue
        attrs: list[tuple[str, int]] = []
        j = m.end()
        while True:
            m2 = _ATTR.match(text, j)
            if not m2:
                break
            attrs.append((m2.group(1), m2.end()))
            j = m2.end()
        if not attrs:
            continue
        # A trailing call keeps its last attribute: config.samples.get(...)
        # becomes config["samples"].get(...).
        if j < len(text) and text[j] == "(":
            attrs = attrs[:-1]
        if not attrs:
            continue
        q = '\\"' if escape else '"'
        repl = "config" + "".join(f"[{q}{name}{q}]" for name, _ in attrs)
        out.append(text[pos:m.start()])
        out.append(repl)
        pos = attrs[-1][1]
    out.append(text[pos:])
    return "".join(out)


# ---------------------------------------------------------------------------
# pass 2: markdown fences


def _strip_fences(text: str) -> str:
    ends_nl = text.endswith("\n")
    lines = text.splitlines()

    def first_content(idx_range):
        for idx in idx_range:
            if lines[idx].strip():
                return idx
        return None

    changed = True
    while changed and lines:
        changed = False
        top = first_content(range(len(lines)))
        if top is not None and _FENCE.match(lines[top].strip()):
            del lines[top]
            changed = True
            continue
        bottom = first_content(range(len(lines) - 1, -1, -1))
        if bottom is not None and _FENCE.match(lines[bottom].strip()):
            del lines[bottom]
            changed = True
    out = "\n".join(lines)
    if ends_nl and out:
        out += "\n"
    return out


# ---------------------------------------------------------------------------
# pass 3: leading tabs


def _expand_leading_tabs(text: str) -> str:
    segs = _segments(text)

    def inside_string(offset: int) -> bool:
        for kind, start, end, _ in segs:
            if start <= offset < end:
                return kind in ("str", "fmt")
        return False

    out: list[str] = []
    pos = 0
    for line in text.splitlines(keepends=True):
        original_len = len(line)
        if not inside_string(pos):
            lead = re.match(r"[ \t]*", line).group(0)
            if "\t" in lead:
                line = lead.replace("\t", "    ") + line[len(lead):]
        out.append(line)
        pos += original_len
    return "".join(out)


# ---------------------------------------------------------------------------
# pass 4: prose preamble


def _strip_preamble_prose(text: str) -> str:
    ends_nl = text.endswith("\n")
    lines = text.splitlines()
    cut = None
    for idx, line in enumerate(lines):
        if _STRUCTURAL.match(line.strip()):
            cut = idx
            break
    if cut is None:
        return text
    kept = [ln for ln in lines[:cut] if not ln.strip() or _CODE_LIKE.match(ln)]
    while kept and not kept[0].strip():
        kept.pop(0)
    out = "\n".join(kept + lines[cut:])
    if ends_nl and out:
        out += "\n"
    return out
