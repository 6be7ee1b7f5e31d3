import copy
import json

import pytest

from covweave.core import AttributeSeed, TaskKind, Tier, count_tokens
from covweave.gen_kg import (ID_PREFIX, KnowledgeGraph, RelationMapError, TripleSentence,
                             expand_graph, extract_subgraph, gen_biog, load_relation_map,
                             parse_relation_map, render_triple, validate_graph, verbalize)


def _raw_map():
    from importlib import resources
    text = resources.files("covweave.data").joinpath("kg_relations.json").read_text()
    return json.loads(text)


@pytest.mark.parametrize("tier", [Tier.T1k, Tier.T4k])
@pytest.mark.parametrize("rng_seed", [0, 1, 2])
def test_expanded_graph_is_temporally_valid(tier, rng_seed):
    graph = expand_graph(AttributeSeed(TaskKind.BioG, tier, rng_seed))
    assert validate_graph(graph) == []
    assert graph.edges


def test_node_ids_use_kind_prefix():
    graph = expand_graph(AttributeSeed(TaskKind.BioG, Tier.T1k, 3))
    for node in graph.nodes.values():
        assert node.id.startswith(ID_PREFIX[node.kind])


def test_subgraph_respects_radius():
    seed = AttributeSeed(TaskKind.BioG, Tier.T2k, 5)
    graph = expand_graph(seed)
    radius = int(seed.knobs["radius"])
    sub = extract_subgraph(graph, radius)
    assert all(d <= radius for d in sub.distances().values())
    assert set(sub.nodes) <= set(graph.nodes)
    assert extract_subgraph(graph, 0).edges == []
    with pytest.raises(ValueError):
        extract_subgraph(graph, -1)


def test_budget_one_yields_single_edge():
    graph = expand_graph(AttributeSeed(TaskKind.BioG, Tier.T1k, 7), triple_budget=1)
    assert len(graph.edges) >= 1
    assert validate_graph(graph) == []


def test_graph_round_trip():
    graph = expand_graph(AttributeSeed(TaskKind.BioG, Tier.T1k, 9))
    again = KnowledgeGraph.from_dict(json.loads(json.dumps(graph.to_dict())))
    assert again.to_dict() == graph.to_dict()


def test_verbalize_one_sentence_per_fact_and_deterministic():
    graph = expand_graph(AttributeSeed(TaskKind.BioG, Tier.T1k, 11))
    sentences = verbalize(graph)
    attr_facts = sum(1 for n in graph.nodes.values() for k in n.attrs if k != "name")
    assert len(sentences) == len(graph.edges) + attr_facts
    assert verbalize(graph) == sentences
    for ts in sentences:
        assert ts.sentence[0].isupper()
        assert all(k.lower() in ts.sentence.lower() for k in ts.keys)
        assert TripleSentence.from_dict(ts.to_dict()) == ts


def test_render_triple_shows_names():
    graph = expand_graph(AttributeSeed(TaskKind.BioG, Tier.T1k, 12))
    ts = next(t for t in verbalize(graph) if t.triple[1] == "born_in")
    line = render_triple(ts, graph)
    assert line.startswith("(") and "born_in" in line
    assert graph.nodes[ts.triple[0]].name in line


def test_validate_detects_broken_dates():
    graph = expand_graph(AttributeSeed(TaskKind.BioG, Tier.T1k, 13))
    edge = next(e for e in graph.edges if e.attrs.get("date") is not None)
    edge.attrs["date"] = 3000
    assert validate_graph(graph)


@pytest.mark.parametrize("mutate,msg", [
    (lambda d: d["relations"]["born_in"].update(src="Robot"), "unknown kind"),
    (lambda d: d["relations"]["born_in"].update(templates=[]), "no template"),
    (lambda d: d["relations"]["born_in"].update(templates=["{s} {bogus}"]), "placeholder"),
    (lambda d: d["relations"]["born_in"].update(date="sometime"), "date rule"),
])
def test_relation_map_validation(mutate, msg):
    data = copy.deepcopy(_raw_map())
    mutate(data)
    with pytest.raises(RelationMapError, match=msg):
        parse_relation_map(data)


def test_default_map_loads():
    rmap = load_relation_map()
    assert rmap.relations and rmap.archetypes
    assert load_relation_map() is rmap


def test_gen_biog_gold_length_and_determinism():
    for tier in (Tier.T1k, Tier.T2k):
        seed = AttributeSeed(TaskKind.BioG, tier, 21)
        inst = gen_biog(seed)
        gold = " ".join(v["sentence"] for v in inst.verifiers)
        assert 0.9 <= count_tokens(gold) / tier.target_tokens <= 1.1
        assert len(inst.constraints) == len(inst.verifiers)
        assert gen_biog(seed) == inst
        assert inst.meta["protagonist"]["name"] in inst.instruction


def test_gen_biog_wrong_kind():
    with pytest.raises(ValueError):
        gen_biog(AttributeSeed(TaskKind.KVG, Tier.T1k, 0))


def test_subgraph_matches_brute_force_on_random_graphs():
    import random

    from covweave.gen_kg import KgEdge, KgNode, Protagonist
    from oracles import brute_force_ball

    rng = random.Random(0)
    for _ in range(200):
        n = rng.randint(1, 25)
        ids = [f"n{i}" for i in range(n)]
        nodes = {i: KgNode(i, "Person", {"name": i}, (1900, 1950)) for i in ids}
        pairs = [(rng.choice(ids), rng.choice(ids)) for _ in range(rng.randint(0, 40))]
        edges = [KgEdge(a, b, "knows", {}) for a, b in pairs if a != b]
        graph = KnowledgeGraph(nodes, edges, Protagonist(ids[0], "x", "y", []))
        radius = rng.randint(0, 4)
        sub = extract_subgraph(graph, radius)
        keep = brute_force_ball(ids, [(e.src, e.dst) for e in edges], ids[0], radius)
        assert set(sub.nodes) == keep
        assert sub.edges == [e for e in edges if e.src in keep and e.dst in keep]
