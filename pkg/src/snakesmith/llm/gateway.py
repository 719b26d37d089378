"""Provider-agnostic chat gateway with structured-output enforcement.

The pipeline talks to models exclusively through :class:`Gateway`, which wraps
a backend (OpenAI-compatible HTTP, deterministic replay, or the scripted
heuristic stand-in). Structured requests parse the response as JSON, repair it
when needed, and re-prompt with the parse error until the expected shape is
met or the iteration budget runs out.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace

from .jsonrepair import parse_or_repair

FEATURE_CONFIG_GENERATION = "config_generation"
FEATURE_ITERATIVE_VALIDATION = "iterative_validation"
FEATURE_WORKFLOW_CONTEXT = "workflow_context"
ALL_FEATURES = frozenset(
    {FEATURE_CONFIG_GENERATION, FEATURE_ITERATIVE_VALIDATION, FEATURE_WORKFLOW_CONTEXT}
)

_ROLES = ("system", "user", "assistant")
_PLACEHOLDER = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


class TransportError(RuntimeError):
    """Network, auth, or protocol failure while talking to a live endpoint."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class UnrecordedPromptError(KeyError):
    """Replay backend has no recorded response for this prompt hash."""

    def __init__(self, prompt_hash: str, preview: str):
        super().__init__(prompt_hash)
        self.prompt_hash = prompt_hash
        self.preview = preview

    def __str__(self):
        return f"unrecorded prompt {self.prompt_hash[:12]}… ({self.preview!r})"


class StructuredOutputError(RuntimeError):
    """The model never produced output matching the expected shape."""

    def __init__(self, message: str, last_raw: str):
        super().__init__(message)
        self.last_raw = last_raw


@dataclass(frozen=True)
class ModelProfile:
    """Connection and behavior settings for one model endpoint."""

    endpoint: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4o"
    api_key_ref: str = "OPENAI_API_KEY"
    max_iterations: int = 3
    feature_toggles: frozenset[str] = ALL_FEATURES

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")

    def enabled(self, feature: str) -> bool:
        return feature in self.feature_toggles

    def without(self, *features: str) -> "ModelProfile":
        return replace(self, feature_toggles=self.feature_toggles - set(features))


@dataclass
class ChatExchange:
    """Ordered conversation messages; roles must alternate sensibly."""

    messages: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        for role, content in self.messages:
            self._check(role, content, previous=None)
        for (a, _), (b, _) in zip(self.messages, self.messages[1:]):
            if a == b == "assistant":
                raise ValueError("two consecutive assistant messages")

    @staticmethod
    def _check(role: str, content: str, previous):
        if role not in _ROLES:
            raise ValueError(f"unknown role {role!r}")
        if not isinstance(content, str):
            raise TypeError("message content must be a string")

    def add(self, role: str, content: str) -> "ChatExchange":
        self._check(role, content, None)
        if role == "assistant" and self.messages and self.messages[-1][0] == "assistant":
            raise ValueError("two consecutive assistant messages")
        self.messages.append((role, content))
        return self

    def system(self, content: str) -> "ChatExchange":
        return self.add("system", content)

    def user(self, content: str) -> "ChatExchange":
        return self.add("user", content)

    def assistant(self, content: str) -> "ChatExchange":
        return self.add("assistant", content)

    def copy(self) -> "ChatExchange":
        return ChatExchange(list(self.messages))

    def content_key(self) -> str:
        """Stable key over message contents, used by the replay backend."""
        return "\x1e".join(content for _, content in self.messages)


@dataclass
class PromptTemplate:
    """Prompt with labeled context paragraphs first and the output format last."""

    id: str
    context_sections: list[tuple[str, str]] = field(default_factory=list)
    instruction: str = ""
    output_format: str = ""

    def section(self, label: str, text: str) -> "PromptTemplate":
        self.context_sections.append((label, text))
        return self

    def render(self, values: dict[str, str] | None = None) -> str:
        values = values or {}

        def fill(text: str) -> str:
            def sub(m: re.Match) -> str:
                name = m.group(1)
                if name not in values:
                    raise KeyError(f"prompt {self.id}: unresolved placeholder ${{{name}}}")
                return str(values[name])

            return _PLACEHOLDER.sub(sub, text)

        parts = []
        for label, text in self.context_sections:
            parts.append(f"## {label}\n{fill(text)}")
        if self.instruction:
            parts.append(fill(self.instruction))
        if self.output_format:
            parts.append(fill(self.output_format))
        return "\n\n".join(parts)


def check_shape(value, shape, path: str = "$") -> list[str]:
    """Validate ``value`` against a lightweight shape description.

    Shapes: a dict of required key -> sub-shape, a single-element list for
    homogeneous lists, a type or tuple of types, or "any".
    """
    problems: list[str] = []
    if shape == "any":
        return problems
    if isinstance(shape, dict):
        if not isinstance(value, dict):
            return [f"{path}: expected object, got {type(value).__name__}"]
        for key, sub in shape.items():
            if key not in value:
                problems.append(f"{path}: missing required key {key!r}")
            else:
                problems.extend(check_shape(value[key], sub, f"{path}.{key}"))
        return problems
    if isinstance(shape, list):
        if not isinstance(value, list):
            return [f"{path}: expected array, got {type(value).__name__}"]
        if shape:
            for i, item in enumerate(value):
                problems.extend(check_shape(item, shape[0], f"{path}[{i}]"))
        return problems
    if isinstance(shape, (type, tuple)):
        if not isinstance(value, shape):
            names = shape.__name__ if isinstance(shape, type) else "/".join(t.__name__ for t in shape)
            return [f"{path}: expected {names}, got {type(value).__name__}"]
        return problems
    raise TypeError(f"unsupported shape description: {shape!r}")


class Gateway:
    """Stateless front door for all model calls."""

    def __init__(self, backend):
        self.backend = backend

    def complete(self, profile: ModelProfile, exchange: ChatExchange) -> str:
        return self.backend.complete(profile, exchange)

    def complete_structured(self, profile: ModelProfile, exchange: ChatExchange, expected_shape):
        work = exchange.copy()
        raw = ""
        for _ in range(profile.max_iterations):
            raw = self.complete(profile, work)
            try:
                value = parse_or_repair(raw)
            except json.JSONDecodeError as err:
                work.assistant(raw)
                work.user(
                    f"The previous reply was not valid JSON ({err}). "
                    "Reply again with only the corrected JSON document."
                )
                continue
            problems = check_shape(value, expected_shape)
            if not problems:
                return value
            work.assistant(raw)
            work.user(
                "The previous JSON did not match the expected structure: "
                + "; ".join(problems)
                + ". Reply again with only the corrected JSON document."
            )
        raise StructuredOutputError(
            f"no structurally valid response after {profile.max_iterations} attempts", last_raw=raw
        )
