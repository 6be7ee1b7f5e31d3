import datetime as dt
import random
from decimal import Decimal

import pytest

from covweave.core import AttributeSeed, TaskKind, Tier
from covweave.gen_sales import (GROWTH_BANDS, TARGET_BANDS, BiasProfile, ConclusionQuery,
                                SalesScenario, analyze, derive_cq_pairs, gen_sales,
                                gen_transactions, make_scenario, parse_csv, render_csv,
                                total_band)
from oracles import expected_answer, recompute_sales


def _check_answers(inst):
    scenario = inst.meta["scenario"]
    rec = recompute_sales(inst.meta["csv"], float(scenario["sales_target"]),
                          float(scenario["prior_period_sales"]))
    for v in inst.verifiers:
        want = expected_answer(v["key"], rec, scenario)
        if v["kind"] == "name":
            assert v["value"] == want, v
        elif v["kind"] == "count":
            assert int(v["value"]) == want, v
        else:
            assert float(v["value"]) == pytest.approx(want, abs=0.005 + 1e-9), v
    return rec


@pytest.mark.parametrize("target", sorted(TARGET_BANDS))
@pytest.mark.parametrize("growth", sorted(GROWTH_BANDS))
def test_forced_biases_hold(target, growth):
    for i in range(3):
        seed = AttributeSeed(TaskKind.SR, Tier.T1k, 100 + i,
                             {"target_achievement": target, "growth": growth})
        inst = gen_sales(seed)
        rec = _check_answers(inst)
        a_lo, a_hi = TARGET_BANDS[target]
        g_lo, g_hi = GROWTH_BANDS[growth]
        assert float(a_lo) <= rec["attainment_pct"] / 100 <= float(a_hi)
        assert float(g_lo) <= rec["growth_pct"] / 100 <= float(g_hi)
        assert inst.meta["bias"]["target_achievement"] == target


def test_csv_round_trip():
    inst = gen_sales(AttributeSeed(TaskKind.SR, Tier.T1k, 4))
    txs = parse_csv(inst.meta["csv"])
    assert render_csv(txs) == inst.meta["csv"]
    assert len(txs) == inst.meta["seed"]["knobs"]["record_count"]
    with pytest.raises(ValueError):
        parse_csv("a,b\n1,2\n")


def test_single_record():
    rng = random.Random(0)
    scenario = make_scenario(rng, "meet", "neutral", 2, 2, 2, 1)
    bias = BiasProfile("meet", "neutral")
    txs = gen_transactions(scenario, bias, 1, rng)
    lo, hi = total_band(scenario, bias)
    assert len(txs) == 1 and lo <= txs[0].amount <= hi
    with pytest.raises(ValueError):
        gen_transactions(scenario, bias, 0, rng)


def test_target_count_too_large():
    rng = random.Random(1)
    scenario = make_scenario(rng, "meet", "positive", 2, 2, 2, 10)
    txs = gen_transactions(scenario, BiasProfile("meet", "positive"), 10, rng)
    summary = analyze(txs, scenario)
    with pytest.raises(ValueError, match="target_count too large"):
        derive_cq_pairs(summary, 10_000)
    assert derive_cq_pairs(summary, 0) == []


def test_overall_facet_first():
    inst = gen_sales(AttributeSeed(TaskKind.SR, Tier.T1k, 5))
    assert inst.verifiers[0]["key"] == "attainment_pct"
    assert inst.verifiers[0]["facet"] == "overall"
    facets = {v["facet"] for v in inst.verifiers}
    assert facets == {"overall", "rep", "product", "geo", "segment"}


def test_ties_produce_no_extreme_question():
    scenario = SalesScenario(
        "Midwest", "Q1 2024", dt.date(2024, 1, 1), dt.date(2024, 1, 31),
        "USD", Decimal(1000), Decimal(1000), ("A B", "C D"), ("P",), ("X",))
    rng = random.Random(2)
    txs = gen_transactions(scenario, BiasProfile("meet", "neutral"), 2, rng)
    # Force an exact tie between the two reps.
    txs = [t.__class__(t.id, t.date, rep, t.product, t.city, t.customer_type,
                       Decimal("500.00")) for t, rep in zip(txs, ("A B", "C D"))]
    summary = analyze(txs, scenario)
    keys = [cq.key for cq in derive_cq_pairs(summary, 5)]
    assert "rep_top" not in keys and "rep_bottom" not in keys


def test_deterministic_and_round_trips():
    seed = AttributeSeed(TaskKind.SR, Tier.T2k, 6)
    inst = gen_sales(seed)
    assert gen_sales(seed) == inst
    assert SalesScenario.from_dict(inst.meta["scenario"]).to_dict() == inst.meta["scenario"]
    cq = ConclusionQuery.from_dict(inst.verifiers[0])
    assert cq.to_dict() == inst.verifiers[0]
    for c in inst.constraints:
        assert c["text"] in inst.instruction


def test_bias_profile_validation():
    with pytest.raises(ValueError):
        BiasProfile("crush", "neutral")
    with pytest.raises(ValueError):
        BiasProfile("meet", "neutral", new_customer_rate=2.0)


def test_wrong_kind():
    with pytest.raises(ValueError):
        gen_sales(AttributeSeed(TaskKind.CF, Tier.T1k, 0))


def test_csv_is_locale_independent():
    inst = gen_sales(AttributeSeed(TaskKind.SR, Tier.T1k, 9))
    lines = inst.meta["csv"].splitlines()
    for line in lines[1:]:
        fields = line.split(",")
        dt.date.fromisoformat(fields[1])
        whole, frac = fields[-1].split(".")
        assert whole.isdigit() and len(frac) == 2
