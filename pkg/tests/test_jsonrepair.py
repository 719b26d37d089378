"""JSON repair: identity on valid input, recovery of malformed model output."""

import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from corrupt import corrupt, random_doc
from snakesmith.llm.jsonrepair import parse_or_repair, repair_json

# Hand-labeled (malformed, intended) pairs covering every repair class.
PAIRS = [
    ("{'a': 1}", {"a": 1}),
    ("{a: 1}", {"a": 1}),
    ('{"ok": True}', {"ok": True}),
    ('{"ok": FALSE}', {"ok": False}),
    ('{"x": None}', {"x": None}),
    ('{"x": nil}', {"x": None}),
    ('{"a": 1,}', {"a": 1}),
    ("[1, 2, 3,]", [1, 2, 3]),
    ('```json\n{"a": [1]}\n```', {"a": [1]}),
    ('The rules are:\n{"rules": ["a", "b"]}', {"rules": ["a", "b"]}),
    ('{"a": [1, 2', {"a": [1, 2]}),
    ('{"a": {"b": 1', {"a": {"b": 1}}),
    ('{"q": .5}', {"q": 0.5}),
    ('{"q": -.5}', {"q": -0.5}),
    ('{"q": 2.}', {"q": 2.0}),
    ('{"name": align_reads, "threads": 4}', {"name": "align_reads", "threads": 4}),
    ('{"msg": took 5 min to run, "ok": true}', {"msg": "took 5 min to run", "ok": True}),
    ('{"s": "unterminated', {"s": "unterminated"}),
    ('{"a": 1 // count\n, "b": 2}', {"a": 1, "b": 2}),
    ('{"a": 1} ignore this trailing text', {"a": 1}),
]


@pytest.mark.parametrize("broken,intended", PAIRS, ids=range(len(PAIRS)))
def test_hand_labeled_repairs(broken, intended):
    assert parse_or_repair(broken) == intended


_JSON = st.recursive(
    st.none()
    | st.booleans()
    | st.integers(-10**6, 10**6)
    | st.floats(allow_nan=False, allow_infinity=False)
    | st.text(max_size=20),
    lambda children: st.lists(children, max_size=4)
    | st.dictionaries(st.text(max_size=10), children, max_size=4),
    max_leaves=12,
)


@given(_JSON, st.sampled_from([None, 2]))
@settings(max_examples=200, deadline=None)
def test_valid_json_is_byte_identical(value, indent):
    text = json.dumps(value, indent=indent)
    assert repair_json(text) == text


def test_unrepairable_input_returned_unchanged():
    text = "no structured data anywhere"
    assert repair_json(text) == text
    with pytest.raises(json.JSONDecodeError):
        parse_or_repair(text)


def test_repair_is_deterministic():
    broken = "{'x': [1, 2,], 'y': None"
    assert repair_json(broken) == repair_json(broken)


def test_nested_python_repr_document():
    obj = parse_or_repair("{'done': True, 'steps': [{'cmd': 'sort', 'ok': False}], 'note': None}")
    assert obj == {"done": True, "steps": [{"cmd": "sort", "ok": False}], "note": None}


def test_block_comments_skipped():
    assert parse_or_repair('{"a": /* count */ 2}') == {"a": 2}


def test_corrupted_corpus_mostly_recovers():
    rng = random.Random(11)
    recovered = 0
    for _ in range(100):
        doc = random_doc(rng)
        try:
            parse_or_repair(corrupt(doc, rng))
        except json.JSONDecodeError:
            continue
        recovered += 1
    assert recovered >= 95
