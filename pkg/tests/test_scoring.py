import json
import random

import pytest

from covweave.core import (SKIPPED, AttributeSeed, GenerationResult, TaskKind, TaskScore,
                           Tier, harmonic_mean)
from covweave.gen_code import gen_code_artifact
from covweave.gen_rule import render_trace, serialize_kv
from covweave.runner import EndpointError, oracle_respond
from covweave.scoring import (CORRECT, CORRECTED, COVERED, INCORRECT,
                              NOT_ADDRESSED, LlmJudge, MockJudge, ReplayClient, Verdict,
                              aggregate, judge_coverage, kendall_tau, normalized_tau,
                              parse_order, parse_steps, parse_verdicts,
                              residual_findings, score_code, score_fsm, score_instance,
                              score_kv, score_news, score_reorder, score_sales,
                              strip_code_fences)
from covweave.scoring.judge import FLAWED
from oracles import pair_enumeration_tau


# -- Kendall tau / reordering -------------------------------------------------

def test_tau_examples():
    assert kendall_tau([1, 3, 2], [1, 2, 3]) == pytest.approx(1 / 3)
    assert kendall_tau([1, 2, 3], [1, 2, 3]) == 1.0
    assert kendall_tau([3, 2, 1], [1, 2, 3]) == -1.0
    assert kendall_tau(["a"], ["a"]) == 1.0
    assert normalized_tau(-1.0) == 0.0 and normalized_tau(1.0) == 1.0


def test_tau_matches_pair_enumeration():
    rng = random.Random(0)
    for _ in range(200):
        n = rng.randint(2, 12)
        gold = list(range(n))
        pred = gold[:]
        rng.shuffle(pred)
        assert kendall_tau(pred, gold) == pytest.approx(pair_enumeration_tau(pred, gold))


@pytest.mark.parametrize("pred,gold", [([1, 2], [1, 2, 3]), ([1, 1, 2], [1, 2, 3]),
                                       ([1, 2, 4], [1, 2, 3])])
def test_tau_rejects_non_permutations(pred, gold):
    with pytest.raises(ValueError, match="invalid permutation"):
        kendall_tau(pred, gold)


def test_parse_order_repairs():
    labels = ["P1", "P2", "P3", "P4"]
    order, diag = parse_order("ORDER: P3, P9, P3, P1", labels)
    assert order == ["P3", "P1", "P2", "P4"]
    assert diag == {"missing": 2, "duplicates": 1, "unknown": 1}
    order, _ = parse_order("ORDER: P1\nmore text\n**Order:** P2 P1", labels)
    assert order[:2] == ["P2", "P1"]
    assert parse_order("no order here", labels) is None
    assert parse_order("ORDER: P7", labels) is None


def test_score_reorder():
    gold = ["P3", "P1", "P2"]
    assert score_reorder("ORDER: P3, P1, P2", gold).final == 1.0
    assert score_reorder("ORDER: P2, P1, P3", gold).final == 0.0
    bad = score_reorder("garbage", gold)
    assert bad.final == 0.0 and "parse_error" in bad.diagnostics


# -- FSM ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def fsm_instance(by_kind):
    return by_kind[TaskKind.SMS][0]


def test_score_fsm_full_and_half(fsm_instance):
    from covweave.gen_rule import trace_from_verifier
    trace = trace_from_verifier(fsm_instance.verifiers[0])
    full = render_trace(trace)
    assert score_fsm(full, trace).final == 1.0
    assert score_fsm(full, trace).diagnostics["all_correct"]
    lines = full.splitlines()
    half = len(trace) // 2
    broken = lines[:half] + [ln.replace("STEP", "STPE") for ln in lines[half:]]
    s = score_fsm("\n".join(broken), trace)
    assert s.final == pytest.approx(half / len(trace))
    assert score_fsm("", trace).final == 0.0


def test_parse_steps_first_wins():
    text = "STEP 1: S0 --a/x--> S1\nSTEP 1: S2 --b/y--> S0"
    assert parse_steps(text) == {1: (0, "a", 1, "x")}


# -- KV -----------------------------------------------------------------------

def _kv_verifier():
    key = "A" * 32
    return {"target_key": key, "target_value": "v" * 32, "target_index": 1,
            "entry_count": 4, "key_length": 32}


def test_score_kv_examples():
    v = _kv_verifier()
    good = [("B" * 32, "x"), (v["target_key"], v["target_value"]), ("C" * 32, "y"),
            ("D" * 32, "z")]
    s = score_kv(serialize_kv(good), v)
    assert s.final == 1.0
    moved = [good[1], good[0]] + good[2:]
    s = score_kv(serialize_kv(moved), v)
    assert s.sub("existence") == 1.0 and s.sub("position") == 0.0 and s.final == 0.0
    badfmt = [("bad key", "x")] + good[1:]
    assert score_kv(serialize_kv(badfmt), v).sub("format") == pytest.approx(0.75)
    assert score_kv("nothing parseable", v).final == 0.0


# -- Code fixing ---------------------------------------------------------------

@pytest.fixture(scope="module")
def artifact():
    return gen_code_artifact(AttributeSeed(TaskKind.CF, Tier.T1k, 2))


def test_strip_code_fences():
    assert strip_code_fences("Here:\n```python\nx = 1\n```\nbye") == "x = 1\n"
    assert strip_code_fences("x = 1\n") == "x = 1\n"


def test_score_code_style(artifact):
    ledger = [e.to_dict() for e in artifact.ledger]
    clean = score_code(artifact.clean_source, ledger, 1000, execute=False)
    assert clean.sub("style") == 1.0 and clean.sub("runnability") == SKIPPED
    polluted = score_code(artifact.polluted_source, ledger, 1000, execute=False)
    assert polluted.sub("style") == 0.0
    assert residual_findings("def f(:\n", ledger) == len(ledger)


def test_score_code_half_fixed(artifact):
    """The output keeps exactly half of the ledger's violations."""
    ledger = [e.to_dict() for e in artifact.ledger]
    fixed = [{"code": "E225", "line": 0, "col": 0} for _ in ledger]
    program = "x=1\n" * len(ledger)
    assert residual_findings(program, fixed) == len(ledger)
    # Ledger entries the program still exhibits, plus as many it no longer does.
    mixed = ledger + [{"code": "B006", "line": 0, "col": 0}] * len(ledger)
    assert "B006" not in {e["code"] for e in ledger}
    s = score_code(artifact.polluted_source, mixed, 1000, execute=False)
    assert s.sub("style") == pytest.approx(0.5)


def test_score_code_runnability(artifact):
    from covweave.gen_code import find_interpreter
    if find_interpreter() is None:
        pytest.skip("no interpreter")
    ok = score_code(artifact.clean_source, [], 1000)
    assert ok.sub("runnability") == 1.0
    assert score_code("raise SystemExit(1)\n", [], 1000).sub("runnability") == 0.0


# -- Judged tasks ------------------------------------------------------------

class StubJudge:
    def __init__(self, outcomes):
        self.outcomes = outcomes
        self.warnings = []

    def _v(self, items):
        return [Verdict(i, o) for i, o in enumerate(self.outcomes[:len(items)])]

    coverage = answers = statements = lambda self, output, items: self._v(items)


def test_judge_coverage_fraction_and_empty():
    judge = StubJudge([COVERED, COVERED, COVERED, "not_covered"])
    assert judge_coverage("x", [{"text": str(i)} for i in range(4)], judge) == 0.75
    warnings = []
    assert judge_coverage("x", [], judge, warnings) == 1.0
    assert warnings


def test_sales_harmonic_mean_example():
    judge = StubJudge([CORRECT, INCORRECT, NOT_ADDRESSED, NOT_ADDRESSED])
    s = score_sales("x", [{}] * 4, judge)
    assert s.sub("coverage") == 0.5 and s.sub("correctness") == 0.5
    judge = StubJudge([CORRECT, CORRECT, NOT_ADDRESSED, NOT_ADDRESSED])
    s = score_sales("x", [{}] * 4, judge)
    assert s.final == pytest.approx(harmonic_mean([0.5, 1.0]))
    assert s.final == pytest.approx(0.6667, abs=1e-4)


def test_news_harmonic_mean_example():
    outcomes = [CORRECTED] * 6 + [FLAWED] * 2 + ["absent"] * 2
    s = score_news("x", [{}] * 10, StubJudge(outcomes))
    assert s.sub("coverage") == pytest.approx(0.8)
    assert s.sub("ap_style") == pytest.approx(0.75)
    assert s.final == pytest.approx(harmonic_mean([0.8, 0.75]))


def test_mock_judge_answers_tolerance():
    items = [{"query": "What was the attainment?", "kind": "percent", "value": "68.62",
              "answer": "68.62%"},
             {"query": "Who sold most?", "kind": "name", "value": "Ana Silva",
              "answer": "Ana Silva"}]
    out = "What was the attainment? It was 68.70%. Who sold most? Marc Reed."
    verdicts = MockJudge().answers(out, items)
    assert [v.outcome for v in verdicts] == [CORRECT, INCORRECT]
    assert MockJudge().answers("", items)[0].outcome == NOT_ADDRESSED


# -- LLM judge -----------------------------------------------------------------

class ScriptedClient:
    def __init__(self, replies):
        self.replies = list(replies)
        self.prompts = []

    def complete(self, prompt):
        self.prompts.append(prompt)
        reply = self.replies.pop(0)
        if isinstance(reply, Exception):
            raise reply
        return reply


def test_parse_verdicts():
    assert parse_verdicts("1: covered\n2. NOT_COVERED\n", 2,
                          (COVERED, "not_covered")) == [COVERED, "not_covered"]
    assert parse_verdicts("1: covered", 2, (COVERED, "not_covered")) is None
    assert parse_verdicts("1: maybe\n2: covered", 2, (COVERED, "not_covered")) is None


def test_llm_judge_batches_and_parses():
    items = [{"text": f"fact {i}"} for i in range(7)]
    client = ScriptedClient(["\n".join(f"{i}: covered" for i in range(1, 6)),
                             "1: covered\n2: not_covered"])
    verdicts = LlmJudge(client).coverage("text", items)
    assert len(client.prompts) == 2
    assert [v.outcome for v in verdicts] == [COVERED] * 6 + ["not_covered"]
    assert "fact 6" in client.prompts[1] and "fact 0" not in client.prompts[1]


def test_llm_judge_retries_then_counts_negative():
    client = ScriptedClient(["junk", "still junk"])
    judge = LlmJudge(client)
    verdicts = judge.answers("out", [{"query": "q", "answer": "a", "kind": "name"}])
    assert [v.outcome for v in verdicts] == [NOT_ADDRESSED]
    assert len(client.prompts) == 2 and judge.warnings


def test_llm_judge_endpoint_failure():
    judge = LlmJudge(ScriptedClient([EndpointError("down")]))
    verdicts = judge.statements("out", [{"corrected": "a", "flawed": "b"}])
    assert verdicts[0].outcome == "absent"
    assert "judge failure" in judge.warnings[0]


def test_llm_judge_prompt_contains_gold():
    client = ScriptedClient(["1: correct"])
    LlmJudge(client).answers("report", [{"query": "How many?", "answer": "12",
                                         "kind": "count"}])
    assert "Gold answer: 12" in client.prompts[0]


def test_replay_client(tmp_path):
    path = tmp_path / "judge.jsonl"
    live = ScriptedClient(["first"])
    rc = ReplayClient(path, live)
    assert rc.complete("p") == "first"
    assert rc.complete("p") == "first" and len(live.prompts) == 1
    offline = ReplayClient(path)
    assert offline.complete("p") == "first"
    with pytest.raises(EndpointError):
        offline.complete("other")
    assert json.loads(path.read_text().splitlines()[0])["response"] == "first"


# -- Aggregation ---------------------------------------------------------------

def _score(kind, tier, value, iid="x"):
    return TaskScore.build(iid, kind, tier, [("m", value)])


def test_aggregate_example():
    scores = [_score(TaskKind.KVG, Tier.T1k, 0.2), _score(TaskKind.KVG, Tier.T1k, 0.4)]
    table = aggregate(scores)
    assert table.cells[(TaskKind.KVG, Tier.T1k)] == 30.00
    assert table.overall == 30.00
    assert table.task_scores[TaskKind.KVG] == 30.00
    assert table.length_scores[Tier.T1k] == 30.00


def test_aggregate_levels():
    scores = [_score(TaskKind.KVG, Tier.T1k, 1.0), _score(TaskKind.KVG, Tier.T2k, 0.0),
              _score(TaskKind.KVG, Tier.T2k, 0.0), _score(TaskKind.PR, Tier.T1k, 0.5)]
    table = aggregate(scores)
    assert table.task_scores[TaskKind.KVG] == pytest.approx(33.33)
    assert table.length_scores[Tier.T1k] == 75.0
    assert table.length_scores[Tier.T2k] == 0.0
    assert table.overall == 50.0


def test_aggregate_order_independent():
    rng = random.Random(1)
    scores = [_score(rng.choice(list(TaskKind)), rng.choice(list(Tier)), rng.random(),
                     str(i)) for i in range(300)]
    base = aggregate(scores).to_dict()
    for _ in range(5):
        rng.shuffle(scores)
        assert aggregate(scores).to_dict() == base


def test_report_rendering_with_missing_warning():
    table = aggregate([_score(TaskKind.KVG, Tier.T1k, 0.5)], missing=3, notes=["hello"])
    md = table.to_markdown()
    assert "| KVG | 50.00 | 50.00 |" in md
    assert "3 instance(s) had no result" in md and "Note: hello" in md
    assert "KVG" in table.to_text()
    assert aggregate([]).overall == 0.0


# -- Dispatch and robustness ----------------------------------------------------

def test_oracle_outputs_score_perfectly(small_dataset):
    for inst in small_dataset:
        res = GenerationResult(inst.id, oracle_respond(inst))
        s = score_instance(inst, res, MockJudge(), execute=False)
        assert s.final == 1.0, (inst.id, s.subscores)


@pytest.mark.parametrize("garbage", ["", "   ", "\x00\x01", "ORDER:", "{{{", "STEP x",
                                     "```\n```", "лорем ипсум " * 50])
def test_robust_to_garbage(small_dataset, garbage):
    for inst in small_dataset:
        s = score_instance(inst, GenerationResult(inst.id, garbage), MockJudge(),
                           execute=False)
        assert 0.0 <= s.final <= 1.0


def test_truncated_oracle_output_scores_in_range(small_dataset):
    for inst in small_dataset:
        text = oracle_respond(inst)
        res = GenerationResult(inst.id, text[: len(text) // 2], truncated=True)
        s = score_instance(inst, res, MockJudge(), execute=False)
        assert 0.0 <= s.final <= 1.0 and s.diagnostics["truncated"]


def test_missing_and_errored_results(small_dataset):
    inst = small_dataset[0]
    assert score_instance(inst, None).diagnostics["missing_result"]
    err = score_instance(inst, GenerationResult(inst.id, "", error="retries exhausted"))
    assert err.diagnostics["generation_error"] == "retries exhausted"
    assert err.final == 0.0


def test_fabrication_probe_is_diagnostic_only(by_kind):
    inst = by_kind[TaskKind.BioG][0]
    gold = oracle_respond(inst)
    invented = gold + " The protagonist later founded a lunar colony on Europa."
    plain = score_instance(inst, GenerationResult(inst.id, invented), MockJudge())
    probed = score_instance(inst, GenerationResult(inst.id, invented), MockJudge(),
                            fabrication_probe=True)
    assert "fabricated_claims" not in plain.diagnostics
    assert probed.diagnostics["fabricated_claims"] == 1
    assert probed.final == plain.final == 1.0
    clean = score_instance(inst, GenerationResult(inst.id, gold), MockJudge(),
                           fabrication_probe=True)
    assert clean.diagnostics["fabricated_claims"] == 0


def test_llm_fabrication_probe_parses_count():
    judge = LlmJudge(ScriptedClient(["FABRICATED: 3", "no idea"]))
    items = [{"text": "A was born in B."}]
    assert judge.fabrications("text", items) == 3
    assert judge.fabrications("text", items) == -1 and judge.warnings


# Independent single-line violations (one finding each).
VIOLATION_LINES = {"E225": "a{i} =1", "W291": "b{i} = 1 ", "E231": "c{i} = (1,2)",
                   "E221": "d{i}  = 1", "C411": "e{i} = list([k for k in range(2)])"}


def test_style_score_monotone_when_violations_removed():
    rng = random.Random(4)
    for _ in range(30):
        codes = [rng.choice(sorted(VIOLATION_LINES)) for _ in range(rng.randint(1, 10))]
        ledger = [{"code": c, "line": n + 1, "col": 1} for n, c in enumerate(codes)]
        remaining = list(range(len(codes)))
        prev = -1.0
        while True:
            program = "".join(VIOLATION_LINES[codes[i]].format(i=i) + "\n"
                              for i in remaining) or "pass\n"
            style = score_code(program, ledger, 1000, execute=False).sub("style")
            assert style >= prev
            prev = style
            if not remaining:
                assert style == 1.0
                break
            remaining.pop(rng.randrange(len(remaining)))
