"""Gateway backends: OpenAI-compatible HTTP, deterministic replay, recording."""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import requests

from .gateway import ChatExchange, ModelProfile, TransportError, UnrecordedPromptError


def exchange_hash(exchange: ChatExchange) -> str:
    return hashlib.sha256(exchange.content_key().encode("utf-8")).hexdigest()


class HttpBackend:
    """POSTs to ``{endpoint}/chat/completions`` and reads the first choice."""

    def __init__(self, timeout: float = 120.0):
        self.timeout = timeout

    def complete(self, profile: ModelProfile, exchange: ChatExchange) -> str:
        url = profile.endpoint.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(profile.api_key_ref, "") if profile.api_key_ref else ""
        if token:
            headers["Authorization"] = f"Bearer {token}"
        payload = {
            "model": profile.model_name,
            "messages": [{"role": r, "content": c} for r, c in exchange.messages],
        }
        try:
            resp = requests.post(url, json=payload, headers=headers, timeout=self.timeout)
        except requests.RequestException as err:
            raise TransportError(f"request to {url} failed: {err}") from err
        if resp.status_code != 200:
            raise TransportError(
                f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
            )
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as err:
            raise TransportError(f"malformed completion payload: {err}") from err


class ReplayBackend:
    """Deterministic stand-in returning recorded responses by prompt hash."""

    def __init__(self, fixture_paths):
        self.responses: dict[str, str] = {}
        for path in self._expand(fixture_paths):
            with open(path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self.responses[record["hash"]] = record["response"]

    @staticmethod
    def _expand(fixture_paths):
        if isinstance(fixture_paths, (str, Path)):
            fixture_paths = [fixture_paths]
        for p in fixture_paths:
            p = Path(p)
            if p.is_dir():
                yield from sorted(p.glob("*.jsonl"))
            elif p.exists():
                yield p

    def complete(self, profile: ModelProfile, exchange: ChatExchange) -> str:
        key = exchange_hash(exchange)
        if key not in self.responses:
            preview = exchange.messages[-1][1][:80] if exchange.messages else ""
            raise UnrecordedPromptError(key, preview)
        return self.responses[key]


class RecordingBackend:
    """Wraps another backend, persisting every response as a replay fixture.

    Previously recorded hashes are served from the fixture file so that
    re-recording is stable and append-only.
    """

    def __init__(self, inner, fixture_path):
        self.inner = inner
        self.fixture_path = Path(fixture_path)
        self.fixture_path.parent.mkdir(parents=True, exist_ok=True)
        self.known: dict[str, str] = {}
        if self.fixture_path.exists():
            with open(self.fixture_path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = json.loads(line)
                        self.known[record["hash"]] = record["response"]

    def complete(self, profile: ModelProfile, exchange: ChatExchange) -> str:
        key = exchange_hash(exchange)
        if key in self.known:
            return self.known[key]
        response = self.inner.complete(profile, exchange)
        self.known[key] = response
        with open(self.fixture_path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps({"hash": key, "response": response}) + "\n")
        return response
