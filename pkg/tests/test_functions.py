"""Function extraction: free variables become explicit keyword arguments."""

import pytest

from snakesmith.nb.functions import isolate_functions


def run_all(sources: list[str]) -> dict:
    ns: dict = {}
    for source in sources:
        exec(compile(source, "<cell>", "exec"), ns)
    ns.pop("__builtins__", None)
    return ns


def exec_equivalent(sources: list[str], names: list[str]) -> None:
    """The isolated cell list computes the same terminal values."""
    before = run_all(sources)
    result = isolate_functions(sources)
    after = run_all(result.cells)
    for name in names:
        assert after[name] == before[name], name
    return result


def test_free_variables_become_keyword_parameters():
    sources = [
        "factor = 3\noffset = 1\n",
        "def scale(v):\n    return v * factor + offset\n\nscaled = scale(10)\n",
    ]
    result = isolate_functions(sources)
    info = result.functions[1]
    assert info.new_name == "scale__c1"
    assert info.free_vars == ["factor", "offset"]
    assert info.origin == 1
    assert "def scale__c1(v, *, factor, offset):" in result.cells[1]
    assert "scale__c1(10, factor=factor, offset=offset)" in result.cells[2]
    exec_equivalent(sources, ["scaled"])


def test_origins_track_source_cells():
    sources = ["a = 1\n", "def f():\n    return a\nr = f()\n"]
    result = isolate_functions(sources)
    assert result.origins == [0, 1, 1]
    assert result.functions[1].origin == 1


def test_function_without_frees_still_extracted():
    sources = ["def double(v):\n    return v * 2\nout = double(4)\n"]
    result = isolate_functions(sources)
    (info,) = result.functions.values()
    assert info.free_vars == []
    assert "def double__c0(v):" in result.cells[0]
    exec_equivalent(sources, ["out"])


def test_call_graph_propagates_frees():
    sources = [
        "rate = 2\n",
        "def grow(v):\n    return v * rate\n",
        "def grow_twice(v):\n    return grow(grow(v))\n",
        "out = grow_twice(3)\n",
    ]
    result = isolate_functions(sources)
    twice = next(info for info in result.functions.values() if info.original_name == "grow_twice")
    assert twice.free_vars == ["rate"]  # inherited through the call
    exec_equivalent(sources, ["out"])


def test_global_assigning_function_stays_in_place():
    sources = [
        "counter = 0\n",
        "def bump():\n    global counter\n    counter += 1\nbump()\nbump()\n",
    ]
    result = isolate_functions(sources)
    assert result.functions == {}
    assert any("assigns globals" in f for f in result.findings)
    assert [c.rstrip("\n") for c in result.cells] == [s.rstrip("\n") for s in sources]
    exec_equivalent(sources, ["counter"])


def test_same_name_in_different_cells_disambiguated():
    sources = [
        "def helper():\n    return 1\nfirst = helper()\n",
        "def helper():\n    return 2\nsecond = helper()\n",
    ]
    result = isolate_functions(sources)
    names = sorted(info.new_name for info in result.functions.values())
    assert names == ["helper__c0", "helper__c1"]
    exec_equivalent(sources, ["first", "second"])


def test_later_call_uses_latest_definition():
    sources = [
        "def pick():\n    return 'old'\n",
        "def pick():\n    return 'new'\n",
        "choice = pick()\n",
    ]
    result = isolate_functions(sources)
    exec_equivalent(sources, ["choice"])
    call_cell = result.cells[result.origins.index(2)]
    assert "pick__c1()" in call_cell


def test_function_parameters_not_treated_as_frees():
    sources = ["def add(a, b=2, *rest, c=3, **kw):\n    return a + b + c\nr = add(1)\n"]
    result = isolate_functions(sources)
    (info,) = result.functions.values()
    assert info.free_vars == []
    exec_equivalent(sources, ["r"])


def test_local_assignments_not_frees():
    sources = ["def f(v):\n    tmp = v + 1\n    return tmp\nout = f(1)\n"]
    (info,) = isolate_functions(sources).functions.values()
    assert info.free_vars == []
    exec_equivalent(sources, ["out"])


def test_known_modules_excluded_from_frees():
    sources = [
        "import math\n",
        "def area(r):\n    return math.pi * r * r\na = area(2.0)\n",
    ]
    result = isolate_functions(sources, known_modules={"math"})
    (info,) = result.functions.values()
    assert info.free_vars == []


def test_unparseable_cells_left_alone():
    sources = ["def broken(:\n", "x = 1\n"]
    result = isolate_functions(sources)
    assert [c.rstrip("\n") for c in result.cells] == [s.rstrip("\n") for s in sources]
    assert result.origins == [0, 1]


def test_decorated_function_moves_with_decorator():
    sources = [
        "def wrap(f):\n    return f\n",
        "@wrap\ndef tagged(v):\n    return v + 1\nout = tagged(1)\n",
    ]
    result = isolate_functions(sources)
    tagged_cell = next(
        result.cells[i] for i, info in result.functions.items()
        if info.original_name == "tagged"
    )
    assert tagged_cell.lstrip().startswith("@wrap")
    exec_equivalent(sources, ["out"])


def test_mixed_cell_splits_cleanly():
    sources = [
        "base = 10\ndef shift(v):\n    return v + base\nmoved = shift(1)\nfinal = moved * 2\n"
    ]
    result = isolate_functions(sources)
    assert len(result.cells) == 2  # def cell first, remainder keeps the rest
    assert result.cells[0].startswith("def shift__c0")
    exec_equivalent(sources, ["moved", "final"])
