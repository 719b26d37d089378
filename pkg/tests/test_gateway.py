"""Model gateway: exchanges, shape checks, structured retries, replay."""

import json

import pytest
from hypothesis import given, settings, strategies as st

from snakesmith.llm.backends import RecordingBackend, ReplayBackend, exchange_hash
from snakesmith.llm.gateway import (
    ChatExchange,
    Gateway,
    ModelProfile,
    PromptTemplate,
    StructuredOutputError,
    UnrecordedPromptError,
    check_shape,
)
from snakesmith.llm.prompts import build_exchange
from snakesmith.llm.scripted import ScriptedBackend


class _CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.calls = 0

    def complete(self, profile, exchange):
        self.calls += 1
        return self.inner.complete(profile, exchange)


class _FixedBackend:
    def __init__(self, reply):
        self.reply = reply

    def complete(self, profile, exchange):
        return self.reply


# ---------------------------------------------------------------------------
# exchanges and profiles


def test_exchange_role_rules():
    ex = ChatExchange().system("s").user("u").assistant("a")
    with pytest.raises(ValueError, match="consecutive assistant"):
        ex.assistant("b")
    with pytest.raises(ValueError, match="unknown role"):
        ex.add("narrator", "x")
    with pytest.raises(ValueError):
        ChatExchange([("assistant", "a"), ("assistant", "b")])


def test_exchange_copy_is_independent():
    ex = ChatExchange().user("hello")
    clone = ex.copy()
    clone.assistant("reply")
    assert len(ex.messages) == 1


def test_content_key_covers_contents_only():
    ex = ChatExchange().system("alpha").user("beta")
    assert ex.content_key() == "alpha\x1ebeta"


def test_profile_validation_and_toggles():
    with pytest.raises(ValueError):
        ModelProfile(max_iterations=0)
    profile = ModelProfile()
    assert profile.enabled("iterative_validation")
    trimmed = profile.without("iterative_validation")
    assert not trimmed.enabled("iterative_validation")
    assert profile.enabled("iterative_validation")  # original unchanged


def test_prompt_template_rendering():
    tpl = PromptTemplate(id="demo", instruction="Do ${thing}.", output_format="JSON only.")
    tpl.section("Context", "value is ${thing}")
    text = tpl.render({"thing": "work"})
    assert text == "## Context\nvalue is work\n\nDo work.\n\nJSON only."
    with pytest.raises(KeyError, match="unresolved placeholder"):
        tpl.render({})


def test_build_exchange_rejects_missing_variables():
    with pytest.raises(KeyError):
        build_exchange("classify_relevance")


# ---------------------------------------------------------------------------
# shape checking


def test_check_shape_accepts_matching_document():
    shape = {"rules": [{"name": str, "threads": int}], "note": (str, type(None)), "rest": "any"}
    value = {"rules": [{"name": "a", "threads": 2}], "note": None, "rest": [1, {}]}
    assert check_shape(value, shape) == []


def test_check_shape_reports_paths():
    shape = {"rules": [{"name": str}]}
    problems = check_shape({"rules": [{"name": 3}, {}]}, shape)
    assert any("$.rules[0].name" in p for p in problems)
    assert any("missing required key 'name'" in p for p in problems)
    assert check_shape([1], {"a": int}) == ["$: expected object, got list"]
    assert check_shape({"a": 1}, {"a": [int]}) == ["$.a: expected array, got int"]


def test_check_shape_rejects_unknown_descriptions():
    with pytest.raises(TypeError):
        check_shape({}, 42)


# ---------------------------------------------------------------------------
# structured completion loop


def test_structured_success_without_retry(profile):
    backend = _CountingBackend(ScriptedBackend())
    gateway = Gateway(backend)
    ex = build_exchange("classify_relevance", history=json.dumps([{"index": 0, "command": "ls"}]))
    data = gateway.complete_structured(profile, ex, {"relevant": [int]})
    assert backend.calls == 1
    assert isinstance(data["relevant"], list)


def test_structured_repairable_reply_needs_no_retry(profile):
    backend = _CountingBackend(ScriptedBackend(mangle="repairable"))
    gateway = Gateway(backend)
    ex = build_exchange("classify_relevance", history=json.dumps([{"index": 0, "command": "ls"}]))
    data = gateway.complete_structured(profile, ex, {"relevant": [int]})
    assert backend.calls == 1
    assert isinstance(data["relevant"], list)


def test_structured_shape_mismatch_triggers_retry(profile):
    backend = _CountingBackend(ScriptedBackend(mangle="retry"))
    gateway = Gateway(backend)
    ex = build_exchange("classify_relevance", history=json.dumps([{"index": 0, "command": "ls"}]))
    data = gateway.complete_structured(profile, ex, {"relevant": [int]})
    assert backend.calls == 2
    assert isinstance(data["relevant"], list)


def test_structured_retry_leaves_caller_exchange_alone(profile):
    gateway = Gateway(ScriptedBackend(mangle="retry"))
    ex = build_exchange("classify_relevance", history=json.dumps([{"index": 0, "command": "ls"}]))
    before = list(ex.messages)
    gateway.complete_structured(profile, ex, {"relevant": [int]})
    assert ex.messages == before


def test_structured_gives_up_after_max_iterations():
    profile = ModelProfile(max_iterations=3)
    backend = _CountingBackend(_FixedBackend("still not json"))
    gateway = Gateway(backend)
    with pytest.raises(StructuredOutputError) as err:
        gateway.complete_structured(profile, ChatExchange().user("go"), {"x": int})
    assert backend.calls == 3
    assert err.value.last_raw == "still not json"


# ---------------------------------------------------------------------------
# recording and replay


def test_record_then_replay_roundtrip(tmp_path, profile):
    fixture = tmp_path / "record.jsonl"
    recorder = Gateway(RecordingBackend(ScriptedBackend(), fixture))
    ex = build_exchange("classify_relevance", history=json.dumps([{"index": 0, "command": "ls"}]))
    first = recorder.complete(profile, ex)
    assert recorder.complete(profile, ex.copy()) == first  # served from cache
    assert len(fixture.read_text().splitlines()) == 1

    replay = Gateway(ReplayBackend(fixture))
    assert replay.complete(profile, ex.copy()) == first


def test_replay_reports_unrecorded_prompts(tmp_path):
    replay = Gateway(ReplayBackend(tmp_path))
    ex = ChatExchange().user("never recorded before")
    with pytest.raises(UnrecordedPromptError) as err:
        replay.complete(ModelProfile(), ex)
    assert "never recorded" in str(err.value)
    assert exchange_hash(ex)[:8] in str(err.value) or exchange_hash(ex) in str(err.value)


def test_replay_loads_every_fixture_in_directory(tmp_path):
    for name, reply in (("a.jsonl", "one"), ("b.jsonl", "two")):
        ex = ChatExchange().user(name)
        (tmp_path / name).write_text(
            json.dumps({"hash": exchange_hash(ex), "response": reply}) + "\n"
        )
    replay = ReplayBackend(tmp_path)
    assert replay.complete(ModelProfile(), ChatExchange().user("a.jsonl")) == "one"
    assert replay.complete(ModelProfile(), ChatExchange().user("b.jsonl")) == "two"


@given(st.lists(st.text(max_size=30), min_size=1, max_size=4))
@settings(max_examples=100, deadline=None)
def test_exchange_hash_depends_only_on_contents(contents):
    roles = ["system", "user", "assistant"]
    a = ChatExchange([(roles[min(i, 1)], c) for i, c in enumerate(contents)])
    b = a.copy()
    assert exchange_hash(a) == exchange_hash(b)
    mutated = ChatExchange(list(a.messages))
    mutated.messages[-1] = (mutated.messages[-1][0], contents[-1] + "x")
    assert exchange_hash(mutated) != exchange_hash(a)
