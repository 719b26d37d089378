"""Tool configuration loaded from file, environment, and flags.

The config file is plain ``key = value`` text at the project root.
Environment variables use the ``SNAKESMITH_`` prefix.  Precedence is
file < environment < command-line flags; the merged result is validated
before anything runs.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

from .llm.gateway import (
    ALL_FEATURES,
    FEATURE_CONFIG_GENERATION,
    FEATURE_ITERATIVE_VALIDATION,
    FEATURE_WORKFLOW_CONTEXT,
    ModelProfile,
)

ENV_PREFIX = "SNAKESMITH_"
CONFIG_FILENAME = "snakesmith.conf"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


class ConfigError(ValueError):
    pass


@dataclass
class ToolConfig:
    endpoint: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4o"
    api_key_ref: str = "OPENAI_API_KEY"
    max_iterations: int = 3
    config_generation: bool = True
    iterative_validation: bool = True
    workflow_context: bool = True
    workdir: str = "."
    ui_port: int = 8765
    confirm_assistant_actions: bool = False
    backend: str = "scripted"
    replay_path: str = ""
    history_path: str = ".snakesmith/history.json"
    spool_path: str = ".snakesmith/spool.jsonl"

    def validate(self) -> None:
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if not 1 <= self.ui_port <= 65535:
            raise ConfigError(f"ui_port {self.ui_port} out of range")
        if self.backend not in ("scripted", "replay", "http"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        if self.backend == "replay" and not self.replay_path:
            raise ConfigError("replay backend needs replay_path")
        if not Path(self.workdir).is_dir():
            raise ConfigError(f"workdir is not a directory: {self.workdir}")

    def profile(self) -> ModelProfile:
        toggles = set(ALL_FEATURES)
        if not self.config_generation:
            toggles.discard(FEATURE_CONFIG_GENERATION)
        if not self.iterative_validation:
            toggles.discard(FEATURE_ITERATIVE_VALIDATION)
        if not self.workflow_context:
            toggles.discard(FEATURE_WORKFLOW_CONTEXT)
        return ModelProfile(
            endpoint=self.endpoint,
            model_name=self.model_name,
            api_key_ref=self.api_key_ref,
            max_iterations=self.max_iterations,
            feature_toggles=frozenset(toggles),
        )

    def settings_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_settings(cls, settings: dict) -> "ToolConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in settings.items() if k in known})


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; comments and blanks are skipped."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        value = value.strip()
        if len(value) >= 2 and value[0] == value[-1] and value[0] in "\"'":
            value = value[1:-1]
        out[key.strip()] = value
    return out


def _coerce(name: str, kind: type, value: object):
    if isinstance(value, kind):
        return value
    text = str(value).strip()
    if kind is bool:
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"{name}: expected a boolean, got {value!r}")
    if kind is int:
        try:
            return int(text)
        except ValueError:
            raise ConfigError(f"{name}: expected an integer, got {value!r}")
    return text


def load_config(workdir: str | Path = ".",
                env: dict[str, str] | None = None,
                overrides: dict[str, object] | None = None) -> ToolConfig:
    """Layer file, environment, and flag values into a validated config."""
    env = os.environ if env is None else env
    values: dict[str, object] = {"workdir": str(workdir)}
    config_path = Path(workdir) / CONFIG_FILENAME
    if config_path.is_file():
        values.update(parse_config_text(config_path.read_text()))
    field_types = {f.name: f.type for f in fields(ToolConfig)}
    for name in field_types:
        env_key = ENV_PREFIX + name.upper()
        if env_key in env:
            values[name] = env[env_key]
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    unknown = set(values) - set(field_types)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    # Annotations are strings here (future import), so map them by name.
    kinds = {"str": str, "int": int, "bool": bool}
    coerced = {name: _coerce(name, kinds.get(str(field_types[name]), str), value)
               for name, value in values.items()}
    config = ToolConfig(**coerced)
    config.validate()
    return config
