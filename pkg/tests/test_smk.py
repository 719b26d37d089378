"""Snakefile model: parse/render round-trips, merging, and text fixers."""

import copy
import random
import re
from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from snakesmith.smk.fixers import fix_common_errors
from snakesmith.smk.model import (
    ConfigTable,
    IOEntry,
    RawSegment,
    Rule,
    ShellAction,
    ScriptAction,
    SmkParseError,
    Workflow,
    ensure_configfile_header,
    merge,
    parse_workflow,
    render,
)

SNAKEFILES = sorted((Path(__file__).parent / "fixtures" / "snakefiles").glob("*.smk"))
FIXER_CASES = sorted((Path(__file__).parent / "fixtures" / "fixer_cases").glob("*.in.smk"))


# ---------------------------------------------------------------------------
# parse / render round-trip


@pytest.mark.parametrize("path", SNAKEFILES, ids=lambda p: p.stem)
def test_corpus_roundtrip_structural(path):
    text = path.read_text()
    first = parse_workflow(text)
    again = parse_workflow(render(first))
    assert again == first


@pytest.mark.parametrize("path", SNAKEFILES, ids=lambda p: p.stem)
def test_corpus_raw_segments_byte_exact(path):
    rendered = render(parse_workflow(path.read_text()))
    for seg in parse_workflow(path.read_text()).raw_segments:
        assert seg.text in rendered


@pytest.mark.parametrize("path", SNAKEFILES, ids=lambda p: p.stem)
def test_corpus_render_fixpoint(path):
    once = render(parse_workflow(path.read_text()))
    assert render(parse_workflow(once)) == once


def test_duplicate_rule_names_rejected():
    text = 'rule a:\n    shell:\n        "one"\n\nrule a:\n    shell:\n        "two"\n'
    with pytest.raises(SmkParseError, match="duplicate"):
        parse_workflow(text)


def test_unknown_section_falls_back_to_raw():
    text = 'rule slow:\n    threads: 4\n    shell:\n        "sleep 1"\n'
    wf = parse_workflow(text)
    assert wf.rules == []
    assert len(wf.raw_segments) == 1
    assert "threads: 4" in wf.raw_segments[0].text
    assert render(wf) == text


def test_named_entries_and_params_roundtrip():
    rule = Rule(
        name="join",
        inputs=[IOEntry("a.txt", key="left"), IOEntry("b.txt", key="right")],
        outputs=[IOEntry("ab.txt", key="merged")],
        params=[IOEntry("9", key="minlen"), IOEntry("fast", key="mode")],
        action=ShellAction("paste {input.left} {input.right} > {output.merged}"),
    )
    parsed = parse_workflow(render(Workflow(items=[rule])))
    assert parsed.rules == [rule]


def test_expression_entries_stay_verbatim():
    text = (
        "rule all:\n"
        "    input:\n"
        '        expand("out/{s}.txt", s=SAMPLES),\n'
        '        config["extra"]\n'
    )
    wf = parse_workflow(text)
    (rule,) = wf.rules
    assert [e.is_expr for e in rule.inputs] == [True, True]
    assert rule.inputs[0].value == 'expand("out/{s}.txt", s=SAMPLES)'
    assert render(wf) == text


def test_string_with_quotes_roundtrips():
    rule = Rule(
        name="echoes",
        outputs=[IOEntry("o.txt")],
        action=ShellAction('echo "hi there" > o.txt'),
    )
    parsed = parse_workflow(render(Workflow(items=[rule])))
    assert parsed.rules == [rule]


def test_multiline_shell_roundtrips():
    text = (
        "rule steps:\n"
        "    output:\n"
        '        "o.txt"\n'
        "    shell:\n"
        '        """\n'
        "        set -e\n"
        "        sort in.txt > o.txt\n"
        '        """\n'
    )
    wf = parse_workflow(text)
    (rule,) = wf.rules
    assert "set -e" in rule.action.body
    assert parse_workflow(render(wf)) == wf


_NAME = st.from_regex(r"[a-z_][a-z0-9_]{0,8}", fullmatch=True)
_PLAIN = st.text(
    alphabet="abcdefghijklmnopqrstuvwxyz0123456789_./-{} ",
    min_size=1,
    max_size=20,
).map(str.strip).filter(bool)
_EXPR = st.sampled_from(
    ['expand("x_{s}.txt", s=SAMPLES)', 'config["key"]', "[1, 2]", "2", "THREADS"]
)


@st.composite
def _entries(draw, max_size=3):
    out = []
    for _ in range(draw(st.integers(0, max_size))):
        key = draw(st.one_of(st.none(), _NAME))
        if draw(st.booleans()):
            out.append(IOEntry(draw(_EXPR), key=key, is_expr=True))
        else:
            out.append(IOEntry(draw(_PLAIN), key=key))
    return out


@st.composite
def _rules(draw):
    action = draw(
        st.one_of(
            st.builds(ShellAction, body=_PLAIN),
            st.builds(ScriptAction, path=_PLAIN),
            st.none(),
        )
    )
    inputs = draw(_entries())
    if action is None and not inputs:
        inputs = [IOEntry(draw(_PLAIN))]
    return Rule(
        name=draw(_NAME),
        inputs=inputs,
        outputs=draw(_entries()),
        params=draw(_entries()),
        log_path=draw(st.one_of(st.none(), _PLAIN)),
        conda_env=draw(st.one_of(st.none(), _PLAIN)),
        action=action,
        docstring=draw(st.one_of(st.none(), _PLAIN)),
    )


@given(st.lists(_rules(), min_size=1, max_size=4, unique_by=lambda r: r.name))
@settings(max_examples=150, deadline=None)
def test_generated_rules_roundtrip(rules):
    wf = Workflow(items=list(rules))
    text = render(wf)
    parsed = parse_workflow(text)
    assert parsed.rules == rules
    assert parse_workflow(render(parsed)) == parsed


# ---------------------------------------------------------------------------
# merge


def _merge_oracle(existing: Workflow, new_rules: list[Rule]) -> list[str]:
    """Expected rule-name sequence after a merge, simulated independently."""
    raw_names = re.compile(r"^\s*(?:rule|checkpoint)\s+([A-Za-z_]\w*)\s*:", re.MULTILINE)

    def action_key(rule):
        if rule.action is None:
            return None
        body = rule.action.body if isinstance(rule.action, ShellAction) else rule.action.path
        return (rule.action.kind, " ".join(body.split()))

    def dedup_key(rule):
        ak = action_key(rule)
        if ak is None:
            ak = ("target", "|".join(e.value for e in rule.inputs))
        return (rule.name, ak)

    taken = {r.name for r in existing.rules}
    for seg in existing.raw_segments:
        taken.update(raw_names.findall(seg.text))
    seen = {dedup_key(r) for r in existing.rules}
    names = [r.name for r in existing.rules]
    for rule in new_rules:
        if dedup_key(rule) in seen:
            continue
        name = rule.name
        if name in taken:
            n = 2
            while f"{name}_{n}" in taken:
                n += 1
            name = f"{name}_{n}"
        taken.add(name)
        seen.add((name, action_key(rule)))
        names.append(name)
    return names


def _random_rule(rng: random.Random) -> Rule:
    name = rng.choice(["align", "sort", "index", "count", "all"])
    if rng.random() < 0.15:
        return Rule(name=name, inputs=[IOEntry(rng.choice(["a.txt", "b.txt"]))])
    body = rng.choice(
        ["bwa mem r.fa {input} > {output}", "sort {input} > {output}", "wc -l {input} > {output}"]
    )
    if rng.random() < 0.3:
        body = "  ".join(body.split())  # whitespace variant, same dedup key
    return Rule(
        name=name,
        inputs=[IOEntry("in.txt")],
        outputs=[IOEntry(f"{name}.out")],
        action=ShellAction(body),
    )


def test_merge_randomized_against_oracle():
    rng = random.Random(2024)
    for _ in range(100):
        items: list[Rule | RawSegment] = []
        used = set()
        for _ in range(rng.randint(0, 4)):
            rule = _random_rule(rng)
            if rule.name in used:
                continue
            used.add(rule.name)
            items.append(rule)
        if rng.random() < 0.4:
            items.insert(0, RawSegment("rule hidden_raw:\n    threads: 2"))
        existing = Workflow(items=items)
        new_rules = [_random_rule(rng) for _ in range(rng.randint(0, 5))]
        if rng.random() < 0.4 and existing.rules:
            new_rules.append(copy.deepcopy(rng.choice(existing.rules)))

        before = render(existing)
        merged = merge(existing, new_rules)

        assert render(existing) == before
        assert render(merged).startswith(before[:-1] if before else "")
        assert merged.items[: len(existing.items)] == existing.items
        names = merged.rule_names()
        assert len(names) == len(set(names))
        assert "hidden_raw" not in names
        assert names == _merge_oracle(existing, new_rules)


def test_merge_drops_exact_duplicates():
    rule = Rule(name="sort", outputs=[IOEntry("s.txt")], action=ShellAction("sort a > s.txt"))
    same = Rule(name="sort", outputs=[IOEntry("s.txt")], action=ShellAction("sort  a  >  s.txt"))
    merged = merge(Workflow(items=[rule]), [same])
    assert merged.rule_names() == ["sort"]


def test_merge_renames_collisions_sequentially():
    base = Workflow(
        items=[Rule(name="qc", outputs=[IOEntry("1")], action=ShellAction("one"))]
    )
    new = [
        Rule(name="qc", outputs=[IOEntry("2")], action=ShellAction("two")),
        Rule(name="qc", outputs=[IOEntry("3")], action=ShellAction("three")),
    ]
    assert merge(base, new).rule_names() == ["qc", "qc_2", "qc_3"]


def test_merge_respects_raw_segment_names():
    base = Workflow(items=[RawSegment("rule qc:\n    threads: 1")])
    new = [Rule(name="qc", outputs=[IOEntry("x")], action=ShellAction("x"))]
    assert merge(base, new).rule_names() == ["qc_2"]


def test_merge_target_rules_dedup_by_inputs():
    target = Rule(name="all", inputs=[IOEntry("a.txt"), IOEntry("b.txt")])
    merged = merge(Workflow(items=[target]), [copy.deepcopy(target)])
    assert merged.rule_names() == ["all"]
    other = Rule(name="all", inputs=[IOEntry("c.txt")])
    assert merge(Workflow(items=[target]), [other]).rule_names() == ["all", "all_2"]


def test_merge_copies_new_rules():
    incoming = Rule(name="qc", outputs=[IOEntry("x")], action=ShellAction("x"))
    merged = merge(Workflow(), [incoming])
    merged.rules[0].outputs.append(IOEntry("y"))
    assert incoming.outputs == [IOEntry("x")]


# ---------------------------------------------------------------------------
# fixers


@pytest.mark.parametrize("path", FIXER_CASES, ids=lambda p: p.name.removesuffix(".in.smk"))
def test_fixer_fixtures(path):
    expected = path.with_name(path.name.replace(".in.", ".out.")).read_text()
    got = fix_common_errors(path.read_text())
    assert got == expected
    assert fix_common_errors(got) == got


def test_config_ref_key_case_is_verbatim():
    out = fix_common_errors('rule a:\n    params:\n        config.MinQual\n')
    assert 'config["MinQual"]' in out


def test_config_ref_untouched_in_plain_strings():
    text = 'rule a:\n    shell:\n        "echo config.path"\n'
    assert fix_common_errors(text) == text


def test_config_ref_rewritten_in_format_fields():
    text = 'rule a:\n    shell:\n        "trim -q {config.min_qual} x"\n'
    assert '{config[\\"min_qual\\"]}' in fix_common_errors(text)


def test_config_ref_format_field_single_quoted():
    text = "rule a:\n    shell:\n        'trim -q {config.min_qual} x'\n"
    assert '{config["min_qual"]}' in fix_common_errors(text)


def test_config_ref_prefix_not_matched():
    text = "rule a:\n    params:\n        myconfig.depth\n"
    assert fix_common_errors(text) == text


def test_leading_tabs_expand_outside_strings_only():
    text = 'rule a:\n\toutput:\n\t\t"o.txt"\n\tshell:\n\t\t"""\n\tprintf x\n\t"""\n'
    fixed = fix_common_errors(text)
    assert "\tprintf x" in fixed  # inside the triple-quoted body
    assert not re.search(r"^\toutput", fixed, re.MULTILINE)


def test_fence_and_prose_stripping():
    text = (
        "Here is the workflow you asked for:\n"
        "```python\n"
        "rule a:\n"
        "    output:\n"
        '        "o.txt"\n'
        "    shell:\n"
        '        "touch o.txt"\n'
        "```\n"
    )
    fixed = fix_common_errors(text)
    assert "```" not in fixed
    assert "Here is" not in fixed
    assert fixed.startswith("rule a:")


def test_prose_strip_keeps_code_like_preamble():
    text = 'Sure thing!\nSAMPLES = ["a"]\n# keep me\nrule a:\n    shell:\n        "x"\n'
    fixed = fix_common_errors(text)
    assert fixed.splitlines()[0] == 'SAMPLES = ["a"]'
    assert "# keep me" in fixed
    assert "Sure thing!" not in fixed


_DOC_LINES = st.lists(
    st.sampled_from(
        [
            "rule a:",
            "rule b_2:",
            "    input:",
            '        "in.txt"',
            "    params:",
            "        config.min_qual,",
            "        config.samples.tsv",
            "    shell:",
            '        "cut -f1 {config.cols} in.txt > out.txt"',
            "        'awk {config.prog} in.txt'",
            '        """',
            "        echo config.nested",
            '        """',
            "\toutput:",
            '\t\t"o.txt"',
            "```python",
            "```",
            "Here is the workflow you asked for:",
            "# config.comment stays",
            "SAMPLES = ['a', 'b']",
            "",
        ]
    ),
    min_size=1,
    max_size=16,
)


@given(_DOC_LINES)
@settings(max_examples=300, deadline=None)
def test_fixer_idempotent_on_generated_documents(lines):
    text = "\n".join(lines) + "\n"
    once = fix_common_errors(text)
    assert fix_common_errors(once) == once


# ---------------------------------------------------------------------------
# config table


def test_config_table_rejects_bad_keys():
    table = ConfigTable()
    with pytest.raises(ValueError):
        table.set("Min-Qual", 3)
    table.set("min_qual", 3)
    assert table.get("min_qual") == 3
    assert "min_qual" in table


def test_config_table_yaml_roundtrip_keeps_order():
    table = ConfigTable()
    table.set("zeta", "last")
    table.set("alpha", [1, 2])
    table.set("count", 7)
    loaded = ConfigTable.from_yaml(table.to_yaml())
    assert list(loaded.entries) == ["zeta", "alpha", "count"]
    assert loaded.entries == table.entries


def test_config_table_rejects_non_mapping_yaml():
    with pytest.raises(SmkParseError):
        ConfigTable.from_yaml("- 1\n- 2\n")
    assert ConfigTable.from_yaml("").entries == {}


def test_ensure_configfile_header_added_once():
    wf = parse_workflow('rule a:\n    output:\n        "o"\n    shell:\n        "touch o"\n')
    with_header = ensure_configfile_header(wf)
    assert with_header.raw_segments[0].text == 'configfile: "config.yaml"'
    assert ensure_configfile_header(with_header) is with_header
