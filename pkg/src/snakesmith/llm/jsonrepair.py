"""Best-effort repair of malformed JSON, tuned for LLM output.

Model responses frequently wrap JSON in markdown fences, add prose around it,
use single quotes or Python literals, leave trailing commas, or get truncated
mid-document. ``repair_json`` normalizes all of that into parseable JSON.

Repair order is fixed so identical inputs always yield identical outputs:
fence/prose stripping, then a single token-level rewrite pass (quote style,
bare keys, trailing/missing commas, Python literals), then bracket closing.
Valid JSON is returned byte-identical; if the rewrite still does not parse,
the original input is returned unchanged.
"""

from __future__ import annotations

import json
import re

_FENCE_LINE = re.compile(r"^\s*```[\w-]*\s*$")
_BAREWORD = re.compile(r"[A-Za-z_][A-Za-z0-9_$-]*")
_NUMBER = re.compile(r"-?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")

_WORD_VALUES = {
    "true": "true",
    "True": "true",
    "TRUE": "true",
    "false": "false",
    "False": "false",
    "FALSE": "false",
    "null": "null",
    "None": "null",
    "NULL": "null",
    "nil": "null",
    "NaN": "NaN",
    "Infinity": "Infinity",
}

_STRING_ESCAPES = {
    "\\": "\\\\",
    '"': '\\"',
    "\n": "\\n",
    "\r": "\\r",
    "\t": "\\t",
    "\b": "\\b",
    "\f": "\\f",
}


def _parses(text: str) -> bool:
    try:
        json.loads(text)
        return True
    except Exception:
        return False


def repair_json(text: str) -> str:
    """Return ``text`` transformed into parseable JSON where possible.

    Valid input is a fixed point (returned byte-identical). When no repair
    yields something parseable, the input is returned unchanged.
    """
    if _parses(text):
        return text
    candidate = _strip_noise(text)
    if not candidate:
        return text
    repaired = _Rewriter(candidate).run()
    if _parses(repaired):
        return repaired
    return text


def parse_or_repair(text: str):
    """Parse ``text`` as JSON, repairing first when needed.

    Raises ``json.JSONDecodeError`` if even the repaired text will not parse.
    """
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return json.loads(repair_json(text))


def _strip_noise(text: str) -> str:
    """Drop markdown fences and prose outside the outermost JSON value."""
    lines = [ln for ln in text.splitlines() if not _FENCE_LINE.match(ln)]
    stripped = "\n".join(lines)
    start = _first_opener(stripped)
    if start is None:
        return ""
    end = _scan_balanced(stripped, start)
    return stripped[start : end if end is not None else len(stripped)]


def _first_opener(text: str) -> int | None:
    for i, ch in enumerate(text):
        if ch in "{[":
            return i
    return None


def _scan_balanced(text: str, start: int) -> int | None:
    """Index one past the point where the bracket at ``start`` closes, if it does."""
    depth = 0
    in_string: str | None = None
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == in_string:
                in_string = None
            continue
        if ch in "\"'":
            in_string = ch
        elif ch in "{[":
            depth += 1
        elif ch in "}]":
            depth -= 1
            if depth <= 0:
                return i + 1
    return None


class _Frame:
    __slots__ = ("kind", "expect")

    def __init__(self, kind: str, expect: str):
        self.kind = kind  # "obj" | "arr"
        self.expect = expect  # "key" | "colon" | "value" | "comma"


class _Rewriter:
    """Single-pass token rewriter emitting normalized JSON."""

    def __init__(self, text: str):
        self.text = text
        self.i = 0
        self.out: list[str] = []
        self.stack: list[_Frame] = []
        self.done = False  # top-level value completed

    def run(self) -> str:
        n = len(self.text)
        while self.i < n and not self.done:
            ch = self.text[self.i]
            if ch in " \t\r\n":
                self.i += 1
            elif ch == "/" and self.text[self.i : self.i + 2] in ("//", "/*"):
                self._skip_comment()
            elif ch == "#":
                self._skip_line()
            elif ch in "{[":
                self._open(ch)
            elif ch in "}]":
                self._close()
            elif ch == ",":
                self._comma()
            elif ch == ":":
                self._colon()
            elif ch in "\"'":
                self._string(ch)
            elif _NUMBER.match(self.text, self.i):
                self._number()
            elif _BAREWORD.match(self.text, self.i):
                self._bareword()
            else:
                self.i += 1  # stray character outside any string
        self._finish()
        return "".join(self.out)

    # -- token handlers -----------------------------------------------------

    def _open(self, ch: str):
        self._pre_value()
        self.out.append(ch)
        if ch == "{":
            self.stack.append(_Frame("obj", "key"))
        else:
            self.stack.append(_Frame("arr", "value"))
        self.i += 1

    def _close(self):
        self.i += 1
        if not self.stack:
            return
        frame = self.stack[-1]
        if frame.expect == "value" and frame.kind == "obj":
            self.out.append("null")
        self._trim_trailing_comma()
        self.out.append("}" if frame.kind == "obj" else "]")
        self.stack.pop()
        self._value_done()

    def _comma(self):
        self.i += 1
        if not self.stack:
            return
        frame = self.stack[-1]
        if frame.expect == "comma":
            self.out.append(",")
            frame.expect = "key" if frame.kind == "obj" else "value"
        # otherwise: duplicate or misplaced comma, dropped

    def _colon(self):
        self.i += 1
        if self.stack and self.stack[-1].expect == "colon":
            self.out.append(":")
            self.stack[-1].expect = "value"

    def _string(self, quote: str):
        raw, closed = self._scan_string(quote)
        frame = self.stack[-1] if self.stack else None
        if frame and frame.kind == "obj" and frame.expect in ("key", "comma"):
            if frame.expect == "comma":
                self.out.append(",")
            self.out.append(self._encode(raw))
            frame.expect = "colon"
        else:
            self._pre_value()
            self.out.append(self._encode(raw))
            self._value_done()
        del closed

    def _scan_string(self, quote: str) -> tuple[str, bool]:
        self.i += 1
        chars: list[str] = []
        n = len(self.text)
        while self.i < n:
            ch = self.text[self.i]
            if ch == "\\" and self.i + 1 < n:
                nxt = self.text[self.i + 1]
                if nxt == quote:
                    chars.append(quote)
                elif nxt == "n":
                    chars.append("\n")
                elif nxt == "t":
                    chars.append("\t")
                elif nxt == "r":
                    chars.append("\r")
                elif nxt in "\\/\"'bfu":
                    if nxt == "u" and self.i + 6 <= n:
                        try:
                            chars.append(chr(int(self.text[self.i + 2 : self.i + 6], 16)))
                            self.i += 6
                            continue
                        except ValueError:
                            pass
                    chars.append({"b": "\b", "f": "\f"}.get(nxt, nxt))
                else:
                    chars.append("\\")
                    chars.append(nxt)
                self.i += 2
                continue
            if ch == quote:
                self.i += 1
                return "".join(chars), True
            chars.append(ch)
            self.i += 1
        return "".join(chars), False

    @staticmethod
    def _encode(raw: str) -> str:
        parts = ['"']
        for ch in raw:
            if ch in _STRING_ESCAPES:
                parts.append(_STRING_ESCAPES[ch])
            elif ord(ch) < 0x20:
                parts.append(f"\\u{ord(ch):04x}")
            else:
                parts.append(ch)
        parts.append('"')
        return "".join(parts)

    def _number(self):
        m = _NUMBER.match(self.text, self.i)
        token = m.group(0)
        self.i = m.end()
        if token.startswith("."):
            token = "0" + token
        if token.startswith("-."):
            token = "-0" + token[1:]
        if token.endswith("."):
            token += "0"
        self._pre_value()
        self.out.append(token)
        self._value_done()

    def _bareword(self):
        m = _BAREWORD.match(self.text, self.i)
        word = m.group(0)
        end = m.end()
        frame = self.stack[-1] if self.stack else None
        at_key = frame and frame.kind == "obj" and frame.expect in ("key", "comma")
        # A trailing bareword in key position is a truncated key; keep it as
        # a key so the closer pass can supply ":null".
        if at_key and (self._colon_follows(end) or not self.text[end:].strip()):
            if frame.expect == "comma":
                self.out.append(",")
            self.out.append(self._encode(word))
            frame.expect = "colon"
            self.i = end
            return
        if word in _WORD_VALUES:
            self.i = end
            self._pre_value()
            self.out.append(_WORD_VALUES[word])
            self._value_done()
            return
        # unquoted string value: consume the phrase up to a delimiter
        stop = end
        n = len(self.text)
        while stop < n and self.text[stop] not in ",}]\n:":
            stop += 1
        phrase = self.text[self.i : stop].rstrip()
        self.i = stop
        self._pre_value()
        self.out.append(self._encode(phrase))
        self._value_done()

    def _colon_follows(self, pos: int) -> bool:
        n = len(self.text)
        while pos < n and self.text[pos] in " \t\r\n":
            pos += 1
        return pos < n and self.text[pos] == ":"

    # -- grammar bookkeeping ------------------------------------------------

    def _pre_value(self):
        """Ensure the current frame is ready to accept a value."""
        if not self.stack:
            return
        frame = self.stack[-1]
        if frame.expect == "comma":
            self.out.append(",")
            frame.expect = "key" if frame.kind == "obj" else "value"
        if frame.kind == "obj" and frame.expect == "key":
            # value in key position: rare; let it through as a value after
            # synthesizing nothing (the closer logic fills missing pieces)
            frame.expect = "value"
            if self.out and self.out[-1] not in "{,[:":
                pass

    def _value_done(self):
        if not self.stack:
            self.done = True
            return
        frame = self.stack[-1]
        frame.expect = "comma"

    def _trim_trailing_comma(self):
        for idx in range(len(self.out) - 1, -1, -1):
            tok = self.out[idx]
            if tok.strip() == "":
                continue
            if tok == ",":
                del self.out[idx]
            return

    def _skip_comment(self):
        if self.text[self.i : self.i + 2] == "//":
            self._skip_line()
        else:
            end = self.text.find("*/", self.i + 2)
            self.i = len(self.text) if end < 0 else end + 2

    def _skip_line(self):
        end = self.text.find("\n", self.i)
        self.i = len(self.text) if end < 0 else end + 1

    def _finish(self):
        while self.stack:
            frame = self.stack.pop()
            if frame.expect == "value":
                self.out.append("null")
            elif frame.expect == "colon":
                self.out.append(":null")
            self._trim_trailing_comma()
            self.out.append("}" if frame.kind == "obj" else "]")
            # The closed frame satisfies the parent's pending value slot.
            if self.stack:
                self.stack[-1].expect = "comma"
