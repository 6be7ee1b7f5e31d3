import random

import pytest

from covweave.core import AttributeSeed, TaskKind, Tier, count_tokens
from covweave.gen_code import (CATEGORIES, CODE_CATEGORY, SUPPORTED_CODES, LedgerEntry,
                               PollutionBudgetError, check_violations, find_interpreter,
                               gen_clean_program, gen_code_artifact, gen_code_fixing,
                               pollute, run_program)
from covweave.gen_code.pollute import camel
from oracles import flake8_available, run_flake8

SNIPPETS = {
    "E501": "x = 1  # " + "a" * 80 + "\n",
    "W291": "x = 1 \n",
    "W293": "def f():\n    x = 1\n    \n    return x\n",
    "E225": "x =1\n",
    "E221": "x  = 1\n",
    "E222": "x =  1\n",
    "E231": "x = (1,2)\n",
    "E203": "x = (1 , 2)\n",
    "E201": "x = ( 1, 2)\n",
    "E202": "x = (1, 2 )\n",
    "E303": "def f():\n    x = 1\n\n\n    return x\n",
    "N802": "def doThing():\n    return 1\n",
    "N803": "def f(myArg):\n    return myArg\n",
    "N806": "def f():\n    myVar = 1\n    return myVar\n",
    "F841": "def f(a):\n    unused = a\n    return a\n",
    "C400": "x = list(i for i in range(3))\n",
    "C411": "x = list([i for i in range(3)])\n",
    "C403": "x = set([i for i in range(3)])\n",
    "C404": "x = dict([(i, i) for i in range(3)])\n",
    "SIM210": "a = 1\nx = True if a > 0 else False\n",
    "SIM211": "a = 1\nx = False if a > 0 else True\n",
    "SIM108": "a = 1\nif a > 0:\n    b = 1\nelse:\n    b = 2\n",
    "B006": "def f(a=[]):\n    return a\n",
    "B008": "def f(a=int(5)):\n    return a\n",
}


def test_snippets_cover_every_supported_code():
    assert set(SNIPPETS) == set(SUPPORTED_CODES)


def test_categories_partition_codes():
    flat = [c for codes in CATEGORIES.values() for c in codes]
    assert sorted(flat) == sorted(SUPPORTED_CODES)
    assert all(CODE_CATEGORY[c] in CATEGORIES for c in flat)


@pytest.mark.parametrize("code", sorted(SNIPPETS))
def test_checker_detects_single_code(code):
    assert [f.code for f in check_violations(SNIPPETS[code])] == [code]


@pytest.mark.skipif(not flake8_available(), reason="external linter not installed")
@pytest.mark.parametrize("code", sorted(SNIPPETS))
def test_checker_positions_match_external_linter(code, tmp_path):
    ours = {(f.line, f.col, f.code) for f in check_violations(SNIPPETS[code])}
    assert ours == run_flake8(SNIPPETS[code], tmp_path)


def test_checker_edge_cases():
    assert check_violations("") == []
    parse = check_violations("def f(:\n")
    assert [f.code for f in parse] == ["PARSE"]
    # B008 leaves immutable calls alone; N806 ignores module level.
    assert check_violations("def f(a=tuple()):\n    return a\n") == []
    assert check_violations("myVar = 1\n") == []


def test_sim108_suppressed_when_message_too_long():
    long_cond = "a_really_long_condition_name > another_really_long_value_name"
    src = (f"a_really_long_condition_name = 1\nanother_really_long_value_name = 2\n"
           f"if {long_cond}:\n    b = 1\nelse:\n    b = 2\n")
    assert "SIM108" not in {f.code for f in check_violations(src)}


def test_camel():
    assert camel("total_count") == "totalCount"
    assert camel("stage_3") == "stage3"


@pytest.fixture(scope="module")
def clean_program():
    return gen_clean_program(AttributeSeed(TaskKind.CF, Tier.T1k, 21))


def test_clean_program_is_clean_and_sized(clean_program):
    assert check_violations(clean_program) == []
    ratio = count_tokens(clean_program) / 1000
    assert 0.9 <= ratio <= 1.05


def test_pollute_ledger_equals_findings(clean_program):
    polluted, ledger = pollute(clean_program, 0.85, 16, random.Random(3))
    assert len(ledger) == 16
    found = {(f.line, f.col, f.code) for f in check_violations(polluted)}
    assert found == {(e.line, e.col, e.code) for e in ledger}
    assert len({e.line for e in ledger}) == len(ledger)


def test_pollute_round_robins_categories(clean_program):
    _, ledger = pollute(clean_program, 1.0, 8, random.Random(0))
    cats = [CODE_CATEGORY[e.code] for e in ledger]
    assert set(cats) == set(CATEGORIES)


def test_pollute_zero_lines(clean_program):
    assert pollute(clean_program, 0.85, 0, random.Random(0)) == (clean_program, [])


def test_pollute_budget_error():
    tiny = "def f(a):\n    return a\n\n\nprint(f(1))\n"
    with pytest.raises(PollutionBudgetError):
        pollute(tiny, 1.0, 50, random.Random(0))


def test_ledger_entry_round_trip():
    e = LedgerEntry("E225", 3, 7, "missing whitespace around operator")
    assert LedgerEntry.from_dict(e.to_dict()) == e


def test_artifact_and_instance():
    seed = AttributeSeed(TaskKind.CF, Tier.T1k, 4)
    art = gen_code_artifact(seed)
    assert len(art.ledger) == seed.knobs["error_lines"]
    inst = gen_code_fixing(seed)
    assert inst.material == art.polluted_source
    assert inst.meta["clean_source"] == art.clean_source
    for c in inst.constraints:
        assert c["text"] in inst.instruction
    assert gen_code_fixing(seed) == inst


@pytest.mark.skipif(find_interpreter() is None, reason="no interpreter")
def test_clean_and_polluted_run_identically():
    art = gen_code_artifact(AttributeSeed(TaskKind.CF, Tier.T1k, 6))
    a, b = run_program(art.clean_source), run_program(art.polluted_source)
    assert a.ok and b.ok
    assert a.stdout == b.stdout and a.stdout


@pytest.mark.skipif(find_interpreter() is None, reason="no interpreter")
def test_run_program_failure_and_timeout():
    assert not run_program("raise SystemExit(3)\n").ok
    out = run_program("while True:\n    pass\n", timeout=0.5)
    assert out.timed_out and not out.ok


def test_find_interpreter_prefers_explicit(monkeypatch):
    monkeypatch.setenv("COVWEAVE_PYTHON", "/env/python")
    assert find_interpreter("/x/python") == "/x/python"
    assert find_interpreter() == "/env/python"
