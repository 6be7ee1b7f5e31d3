import random

import pytest

from covweave.core import AttributeSeed, TaskKind, Tier
from covweave.corpus import default_corpus, dump_corpus, parse_corpus, synthetic_corpus
from covweave.gen_rule import (KEY_PATTERN, FsmSpec, gen_fsm, gen_kv, gen_reorder,
                               kv_spec_from_seed, non_identity_shuffle, parse_kv,
                               random_fsm, render_order_line, render_step,
                               reorder_spec_from_instance, serialize_kv, simulate_fsm,
                               trace_from_verifier)
from oracles import brute_force_fsm


# -- KV dictionary ----------------------------------------------------------

def test_kv_keys_follow_format_and_are_unique():
    spec = kv_spec_from_seed(AttributeSeed(TaskKind.KVG, Tier.T1k, 3))
    keys = [k for k, _ in spec.entries]
    assert len(keys) == len(set(keys))
    assert all(KEY_PATTERN.match(k) and len(k) == 32 for k in keys)
    assert all(len(v) == 32 for _, v in spec.entries)


def test_kv_serialize_parse_round_trip():
    entries = [("AB_CD", "x1"), ("EF", "y2")]
    assert parse_kv(serialize_kv(entries)) == entries


def test_kv_parse_is_tolerant():
    text = 'Here you go:\n```\n{\n  "A_B": "v",\n  junk\n  "C":"w"\n}\n```'
    assert parse_kv(text) == [("A_B", "v"), ("C", "w")]


def test_kv_instance_mentions_target_literally():
    inst = gen_kv(AttributeSeed(TaskKind.KVG, Tier.T1k, 11))
    v = inst.verifiers[0]
    assert v["target_key"] in inst.instruction
    assert v["target_value"] in inst.instruction
    assert f"index {v['target_index']}" in inst.instruction
    assert v["entry_count"] == 53


def test_kv_deterministic():
    seed = AttributeSeed(TaskKind.KVG, Tier.T2k, 8)
    assert gen_kv(seed) == gen_kv(seed)


def test_kv_wrong_kind():
    with pytest.raises(ValueError):
        gen_kv(AttributeSeed(TaskKind.PR, Tier.T1k, 0))


# -- FSM ----------------------------------------------------------------------

def test_fsm_matches_brute_force():
    rng = random.Random(5)
    checked = 0
    while checked < 50:
        spec = random_fsm(rng, 3, 3, 3, 40)
        if spec is None:
            continue
        d = spec.to_dict()
        expected = brute_force_fsm(d["transitions"], d["initial_state"], d["input_string"])
        got = [(s.index, s.state_before, s.input_symbol, s.state_after, s.output_symbol)
               for s in simulate_fsm(spec)]
        assert got == expected
        checked += 1


def test_fsm_all_states_reachable():
    inst = gen_fsm(AttributeSeed(TaskKind.SMS, Tier.T1k, 4))
    spec = FsmSpec.from_dict(inst.verifiers[0]["spec"])
    spec.validate()
    assert spec.reachable() == set(range(spec.num_states))


def test_fsm_spec_round_trip():
    inst = gen_fsm(AttributeSeed(TaskKind.SMS, Tier.T1k, 4))
    spec = FsmSpec.from_dict(inst.verifiers[0]["spec"])
    assert FsmSpec.from_dict(spec.to_dict()) == spec
    assert trace_from_verifier(inst.verifiers[0]) == simulate_fsm(spec)


def test_fsm_validate_rejects_incomplete():
    spec = FsmSpec(2, ("a",), ("x",), {(0, "a"): (1, "x")}, 0, ("a",))
    with pytest.raises(ValueError):
        spec.validate()


def test_fsm_step_rendering():
    inst = gen_fsm(AttributeSeed(TaskKind.SMS, Tier.T1k, 2))
    step = trace_from_verifier(inst.verifiers[0])[0]
    assert render_step(step).startswith("STEP 1: S")
    assert len(trace_from_verifier(inst.verifiers[0])) == 165


def test_fsm_empty_input():
    spec = FsmSpec(1, ("a",), ("x",), {(0, "a"): (0, "x")}, 0, ())
    assert simulate_fsm(spec) == []


# -- Paragraph reordering -----------------------------------------------------

def test_non_identity_shuffle():
    rng = random.Random(0)
    for n in range(2, 9):
        order = non_identity_shuffle(rng, n)
        assert sorted(order) == list(range(n)) and order != list(range(n))
    assert non_identity_shuffle(rng, 1) == [0]


def test_reorder_gold_restores_document():
    inst = gen_reorder(AttributeSeed(TaskKind.PR, Tier.T1k, 9))
    blocks, gold = reorder_spec_from_instance(inst)
    restored = [blocks[label] for label in gold]
    docs = default_corpus()
    doc = docs[inst.meta["doc_index"]]
    start = inst.meta["start"]
    assert restored == list(doc[start:start + len(gold)])


def test_reorder_order_line():
    assert render_order_line(["P2", "P1"]) == "ORDER: P2, P1"


def test_reorder_insufficient_corpus():
    with pytest.raises(ValueError):
        gen_reorder(AttributeSeed(TaskKind.PR, Tier.T8k, 1), corpus=[("one", "two")])


def test_corpus_round_trip():
    docs = synthetic_corpus(seed=1, n_docs=2)
    assert parse_corpus(dump_corpus(docs)) == docs


def test_kv_gold_round_trip():
    from covweave.runner import oracle_respond

    seed = AttributeSeed(TaskKind.KVG, Tier.T1k, 13)
    inst = gen_kv(seed)
    assert parse_kv(oracle_respond(inst)) == kv_spec_from_seed(seed).entries
