"""LLM access layer: prompt templates, backends, structured output, JSON repair."""

from .jsonrepair import repair_json
from .gateway import (
    ChatExchange,
    Gateway,
    ModelProfile,
    PromptTemplate,
    StructuredOutputError,
    TransportError,
    UnrecordedPromptError,
    FEATURE_CONFIG_GENERATION,
    FEATURE_ITERATIVE_VALIDATION,
    FEATURE_WORKFLOW_CONTEXT,
    ALL_FEATURES,
)
from .backends import HttpBackend, RecordingBackend, ReplayBackend
from .scripted import ScriptedBackend

__all__ = [
    "repair_json",
    "ChatExchange",
    "Gateway",
    "ModelProfile",
    "PromptTemplate",
    "StructuredOutputError",
    "TransportError",
    "UnrecordedPromptError",
    "HttpBackend",
    "ReplayBackend",
    "RecordingBackend",
    "ScriptedBackend",
    "FEATURE_CONFIG_GENERATION",
    "FEATURE_ITERATIVE_VALIDATION",
    "FEATURE_WORKFLOW_CONTEXT",
    "ALL_FEATURES",
]
