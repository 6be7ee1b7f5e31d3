"""Biography generation (BioG): protagonist-centred knowledge graphs.

A graph grows outward from a protagonist: each step picks an existing node
within the extraction radius (weight ``1 / (1 + hops)``), a relation that node may take part in (weighted
by the protagonist's archetype when the protagonist is picked), and either a
second existing node or a freshly minted one.  Every candidate edge passes the
temporal validator before it is kept.  The triple budget counts edges inside
the extraction radius, so the verbalized subgraph scales with the tier.
"""

from __future__ import annotations

import hashlib
import json
import random
import string
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Optional

from .core import (CALIBRATION_VERSION, AttributeSeed, TaskInstance, TaskKind,
                   compose_instruction, count_tokens, instance_id,
                   seeded_stream)

KINDS = ("Person", "Organization", "Place", "Work", "Event")
ID_PREFIX = {"Person": "p", "Organization": "o", "Place": "l", "Work": "w",
             "Event": "e"}
EARLIEST_YEAR = 1750
PRESENT_YEAR = 2020
MAX_FAILED_ATTEMPTS = 1000
CONNECT_EXISTING_PROB = 0.2
_PLACEHOLDERS = {"s", "o", "date", "role", "degree", "amount", "v"}


class KgExhaustedError(RuntimeError):
    """No legal expansion was found within the attempt limit."""


class RelationMapError(ValueError):
    """Relation/template tables are inconsistent."""


# ---------------------------------------------------------------------------
# Relation map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Relation:
    name: str
    src: str
    dst: str
    date: str  # none | free | src_start | dst_start
    templates: tuple[str, ...]
    attrs: dict[str, Any] = field(default_factory=dict)
    min_age_src: int = 0
    min_age_dst: int = 0
    symmetric: bool = False
    unique_src: bool = False


@dataclass
class RelationMap:
    version: str
    relations: dict[str, Relation]
    attributes: dict[str, dict[str, tuple[str, ...]]]
    archetypes: dict[str, dict[str, Any]]
    backgrounds: list[str]
    life_phases: list[tuple[str, int]]
    lexicon: dict[str, list[str]]

    def legal(self, kind: str) -> list[tuple[Relation, str]]:
        """Relations ``kind`` can join, with the role it would play."""
        out = []
        for rel in self.relations.values():
            if rel.src == kind:
                out.append((rel, "src"))
            if rel.dst == kind:
                out.append((rel, "dst"))
        return out


def _check_template(text: str, where: str) -> None:
    for _, name, _, _ in string.Formatter().parse(text):
        if name is not None and name not in _PLACEHOLDERS:
            raise RelationMapError(f"{where}: unknown placeholder {{{name}}}")


def parse_relation_map(data: dict[str, Any]) -> RelationMap:
    relations = {}
    for name, spec in data["relations"].items():
        for end in ("src", "dst"):
            if spec[end] not in KINDS:
                raise RelationMapError(f"{name}: unknown kind {spec[end]!r}")
        if spec.get("date", "none") not in ("none", "free", "src_start", "dst_start"):
            raise RelationMapError(f"{name}: bad date rule {spec.get('date')!r}")
        templates = tuple(spec.get("templates", ()))
        if not templates:
            raise RelationMapError(f"relation {name!r} has no template")
        for t in templates:
            _check_template(t, name)
            for attr in spec.get("attrs", {}):
                if "{" + attr + "}" not in t:
                    raise RelationMapError(f"{name}: template omits {{{attr}}}")
        relations[name] = Relation(
            name, spec["src"], spec["dst"], spec.get("date", "none"), templates,
            dict(spec.get("attrs", {})), int(spec.get("min_age_src", 0)),
            int(spec.get("min_age_dst", 0)), bool(spec.get("symmetric", False)),
            bool(spec.get("unique_src", False)))
    attributes: dict[str, dict[str, tuple[str, ...]]] = {}
    for kind in KINDS:
        table = data["attributes"].get(kind, {})
        attributes[kind] = {}
        for attr, spec in table.items():
            templates = tuple(spec.get("templates", ()))
            if not templates:
                raise RelationMapError(f"attribute {kind}.{attr} has no template")
            for t in templates:
                _check_template(t, f"{kind}.{attr}")
            attributes[kind][attr] = templates
    for arch, spec in data["archetypes"].items():
        for rel in spec.get("propensity", {}):
            if rel not in relations:
                raise RelationMapError(f"archetype {arch}: unknown relation {rel}")
    return RelationMap(
        version=str(data.get("version", "0")), relations=relations,
        attributes=attributes, archetypes=dict(data["archetypes"]),
        backgrounds=list(data["backgrounds"]),
        life_phases=[(p, int(a)) for p, a in data["life_phases"]],
        lexicon={k: list(v) for k, v in data["lexicon"].items()})


_DEFAULT_MAP: Optional[RelationMap] = None


def load_relation_map(path: str | Path | None = None) -> RelationMap:
    """Load (and validate) the relation/template tables; cached default."""
    global _DEFAULT_MAP
    if path is None:
        if _DEFAULT_MAP is None:
            text = resources.files("covweave.data").joinpath(
                "kg_relations.json").read_text(encoding="utf-8")
            _DEFAULT_MAP = parse_relation_map(json.loads(text))
        return _DEFAULT_MAP
    return parse_relation_map(json.loads(Path(path).read_text(encoding="utf-8")))


# ---------------------------------------------------------------------------
# Graph types
# ---------------------------------------------------------------------------

@dataclass
class KgNode:
    id: str
    kind: str
    attrs: dict[str, Any]
    era: tuple[Optional[int], Optional[int]]
    seq: int = 0

    @property
    def name(self) -> str:
        return self.attrs["name"]

    def window(self) -> tuple[int, int]:
        lo, hi = self.era
        return (EARLIEST_YEAR if lo is None else lo,
                PRESENT_YEAR if hi is None else hi)


@dataclass
class KgEdge:
    src: str
    dst: str
    relation: str
    attrs: dict[str, Any]
    seq: int = 0


@dataclass
class Protagonist:
    node_id: str
    archetype: str
    background: str
    life_phases: list[tuple[str, tuple[int, int]]]


@dataclass
class KnowledgeGraph:
    nodes: dict[str, KgNode]
    edges: list[KgEdge]
    protagonist: Protagonist

    def neighbors(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for e in self.edges:
            adj[e.src].append(e.dst)
            adj[e.dst].append(e.src)
        return adj

    def distances(self) -> dict[str, int]:
        """Hop distance from the protagonist, ignoring edge direction."""
        adj = self.neighbors()
        start = self.protagonist.node_id
        dist = {start: 0}
        queue = deque([start])
        while queue:
            cur = queue.popleft()
            for nxt in adj[cur]:
                if nxt not in dist:
                    dist[nxt] = dist[cur] + 1
                    queue.append(nxt)
        return dist

    def to_dict(self) -> dict[str, Any]:
        return {
            "nodes": [{"id": n.id, "kind": n.kind, "attrs": n.attrs,
                       "era": list(n.era), "seq": n.seq} for n in self.nodes.values()],
            "edges": [{"src": e.src, "dst": e.dst, "relation": e.relation,
                       "attrs": e.attrs, "seq": e.seq} for e in self.edges],
            "protagonist": {"node_id": self.protagonist.node_id,
                            "archetype": self.protagonist.archetype,
                            "background": self.protagonist.background,
                            "life_phases": [[p, list(r)] for p, r in
                                            self.protagonist.life_phases]},
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> KnowledgeGraph:
        nodes = {n["id"]: KgNode(n["id"], n["kind"], dict(n["attrs"]),
                                 tuple(n["era"]), n.get("seq", 0))
                 for n in data["nodes"]}
        edges = [KgEdge(e["src"], e["dst"], e["relation"], dict(e["attrs"]),
                        e.get("seq", 0)) for e in data["edges"]]
        p = data["protagonist"]
        prot = Protagonist(p["node_id"], p["archetype"], p["background"],
                           [(ph, tuple(r)) for ph, r in p["life_phases"]])
        return cls(nodes, edges, prot)


@dataclass(frozen=True)
class TripleSentence:
    triple: tuple[str, str, str]
    sentence: str
    template_id: str
    qualifiers: dict[str, Any] = field(default_factory=dict)
    keys: tuple[str, ...] = ()  # surface strings a faithful mention contains

    def to_dict(self) -> dict[str, Any]:
        return {"triple": list(self.triple), "sentence": self.sentence,
                "template_id": self.template_id, "qualifiers": self.qualifiers,
                "keys": list(self.keys)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> TripleSentence:
        return cls(tuple(data["triple"]), data["sentence"], data["template_id"],
                   dict(data.get("qualifiers", {})), tuple(data.get("keys", ())))


# ---------------------------------------------------------------------------
# Temporal validation
# ---------------------------------------------------------------------------

def edge_violations(graph: KnowledgeGraph, edge: KgEdge,
                    rmap: RelationMap) -> list[str]:
    rel = rmap.relations.get(edge.relation)
    if rel is None:
        return [f"unknown relation {edge.relation}"]
    src, dst = graph.nodes[edge.src], graph.nodes[edge.dst]
    tag = f"{edge.src}-{edge.relation}-{edge.dst}"
    out = []
    if (src.kind, dst.kind) != (rel.src, rel.dst):
        out.append(f"{tag}: kinds {src.kind}->{dst.kind} not permitted")
    if edge.src == edge.dst:
        out.append(f"{tag}: self loop")
    date = edge.attrs.get("date")
    if rel.date == "none":
        if date is not None:
            out.append(f"{tag}: undated relation carries a date")
        return out
    if date is None:
        return out + [f"{tag}: missing date"]
    for node in (src, dst):
        lo, hi = node.era
        if (lo is not None and date < lo) or (hi is not None and date > hi):
            out.append(f"{tag}: date {date} outside era of {node.id} {node.era}")
    if rel.date == "src_start" and date != src.era[0]:
        out.append(f"{tag}: date must equal start of {src.id}")
    if rel.date == "dst_start" and date != dst.era[0]:
        out.append(f"{tag}: date must equal start of {dst.id}")
    for node, min_age in ((src, rel.min_age_src), (dst, rel.min_age_dst)):
        if node.kind == "Person" and min_age and date - node.era[0] < min_age:
            out.append(f"{tag}: {node.id} younger than {min_age} in {date}")
    if date > PRESENT_YEAR:
        out.append(f"{tag}: date {date} in the future")
    return out


def validate_graph(graph: KnowledgeGraph, rmap: RelationMap | None = None) -> list[str]:
    """All temporal/structural violations (empty list means valid)."""
    rmap = rmap or load_relation_map()
    out: list[str] = []
    for node in graph.nodes.values():
        lo, hi = node.era
        if node.kind == "Person" and (lo is None or hi is None or lo >= hi):
            out.append(f"{node.id}: person without a proper lifespan {node.era}")
        if node.kind == "Event" and (lo is None or lo != hi):
            out.append(f"{node.id}: event must occupy a single year")
    seen: set[tuple[str, str, str]] = set()
    unique_counts: dict[tuple[str, str], int] = {}
    for edge in graph.edges:
        out.extend(edge_violations(graph, edge, rmap))
        key = (edge.src, edge.relation, edge.dst)
        rel = rmap.relations.get(edge.relation)
        if key in seen or (rel and rel.symmetric and
                           (edge.dst, edge.relation, edge.src) in seen):
            out.append(f"duplicate edge {key}")
        seen.add(key)
        if rel and rel.unique_src:
            k = (edge.src, edge.relation)
            unique_counts[k] = unique_counts.get(k, 0) + 1
            if unique_counts[k] > 1:
                out.append(f"{edge.src}: more than one {edge.relation}")
    prot = graph.protagonist
    node = graph.nodes[prot.node_id]
    phases = [r for _, r in prot.life_phases]
    if phases:
        if phases[0][0] != node.era[0] or phases[-1][1] != node.era[1]:
            out.append("life phases do not cover the lifespan")
        for (a, b), (c, _) in zip(phases, phases[1:]):
            if b != c or a >= b:
                out.append("life phases not contiguous and ordered")
    return out


# ---------------------------------------------------------------------------
# Expansion
# ---------------------------------------------------------------------------

class _Namer:
    def __init__(self, rng: random.Random, lex: dict[str, list[str]]) -> None:
        self.rng, self.lex, self.used = rng, lex, set()

    def _unique(self, make) -> str:
        for _ in range(50):
            name = make()
            if name not in self.used:
                self.used.add(name)
                return name
        base = make()
        n = 2
        while f"{base} {n}" in self.used:
            n += 1
        self.used.add(f"{base} {n}")
        return f"{base} {n}"

    def person(self) -> str:
        lx = self.lex
        return self._unique(lambda: f"{self.rng.choice(lx['first_names'])} "
                                    f"{self.rng.choice(lx['last_names'])}")

    def organization(self) -> str:
        lx, r = self.lex, self.rng

        def make() -> str:
            if r.random() < 0.5:
                return (f"{r.choice(lx['org_adjectives'])} {r.choice(lx['org_nouns'])}"
                        f" of {r.choice(lx['org_topics'])}")
            return f"{r.choice(lx['last_names'])} {r.choice(lx['org_nouns'])}"
        return self._unique(make)

    def place(self) -> str:
        lx, r = self.lex, self.rng
        return self._unique(lambda: f"{r.choice(lx['place_prefixes'])} "
                                    f"{r.choice(lx['place_roots'])}")

    def work(self) -> str:
        lx, r = self.lex, self.rng
        return self._unique(lambda: f"The {r.choice(lx['work_adjectives'])} "
                                    f"{r.choice(lx['work_nouns'])}")

    def event(self, year: int) -> str:
        lx, r = self.lex, self.rng
        return self._unique(lambda: f"the {r.choice(lx['event_qualifiers'])} "
                                    f"{r.choice(lx['event_topics'])} of {year}")


class _Expander:
    def __init__(self, rng: random.Random, rmap: RelationMap, archetype: str) -> None:
        self.rng = rng
        self.rmap = rmap
        self.archetype = archetype
        self.namer = _Namer(rng, rmap.lexicon)
        self.seq = 0
        self.graph: Optional[KnowledgeGraph] = None
        self.edge_keys: set[tuple[str, str, str]] = set()
        self.unique_used: set[tuple[str, str]] = set()
        self.kind_counts: dict[str, int] = {}
        self.all_occupations = sorted({o for a in rmap.archetypes.values()
                                       for o in a["occupations"]})
        self.all_genres = sorted({g for a in rmap.archetypes.values()
                                  for g in a["work_genres"]})

    def _next_seq(self) -> int:
        self.seq += 1
        return self.seq

    def _node_id(self, kind: str) -> str:
        assert self.graph is not None
        n = self.kind_counts.get(kind, 0)
        while f"{ID_PREFIX[kind]}{n}" in self.graph.nodes:
            n += 1
        self.kind_counts[kind] = n
        return f"{ID_PREFIX[kind]}{n}"

    # -- node factories -------------------------------------------------------
    def make_person(self, birth: int, death: int, occupation: str | None = None,
                    extra: dict | None = None) -> KgNode:
        attrs = {"name": self.namer.person(), "lifespan": f"{birth} to {death}",
                 "occupation": occupation or self.rng.choice(self.all_occupations)}
        attrs.update(extra or {})
        return KgNode(self._node_id("Person"), "Person", attrs, (birth, death),
                      self._next_seq())

    def make_node(self, kind: str, start: int | None, anchor: KgNode | None) -> KgNode:
        r, lx = self.rng, self.rmap.lexicon
        if kind == "Person":
            birth = start if start is not None else r.randint(EARLIEST_YEAR, 1950)
            death = min(birth + r.randint(50, 92), PRESENT_YEAR)
            if death - birth < 30:
                death = birth + 30
            return self.make_person(birth, death)
        if kind == "Organization":
            year = start if start is not None else r.randint(EARLIEST_YEAR, 1990)
            attrs = {"name": self.namer.organization(), "founded_year": year,
                     "sector": r.choice(lx["sectors"])}
            return KgNode(self._node_id(kind), kind, attrs, (year, None), self._next_seq())
        if kind == "Place":
            attrs = {"name": self.namer.place(),
                     "description": r.choice(lx["place_descriptions"])}
            return KgNode(self._node_id(kind), kind, attrs, (None, None), self._next_seq())
        if kind == "Work":
            year = start if start is not None else r.randint(EARLIEST_YEAR, PRESENT_YEAR)
            genres = self.all_genres
            if anchor is not None and self.graph is not None \
                    and anchor.id == self.graph.protagonist.node_id:
                genres = self.rmap.archetypes[self.archetype]["work_genres"]
            attrs = {"name": self.namer.work(), "genre": r.choice(genres)}
            return KgNode(self._node_id(kind), kind, attrs, (year, None), self._next_seq())
        if kind == "Event":
            year = start if start is not None else r.randint(EARLIEST_YEAR, PRESENT_YEAR)
            attrs = {"name": self.namer.event(year),
                     "description": r.choice(lx["event_descriptions"])}
            return KgNode(self._node_id(kind), kind, attrs, (year, year), self._next_seq())
        raise ValueError(kind)

    # -- sampling helpers -------------------------------------------------------
    def _active(self, node: KgNode, min_age: int) -> tuple[int, int]:
        lo, hi = node.window()
        if node.kind == "Person":
            lo += min_age
        return lo, min(hi, PRESENT_YEAR)

    def _edge_attrs(self, rel: Relation) -> dict[str, Any]:
        attrs: dict[str, Any] = {}
        for name, spec in rel.attrs.items():
            if spec == "money":
                attrs[name] = f"${self.rng.randrange(1000, 250001, 500):,}"
            else:
                attrs[name] = self.rng.choice(spec)
        return attrs

    def _new_partner(self, rel: Relation, anchor: KgNode, role: str) -> tuple[KgNode, Optional[int]]:
        """Mint the missing endpoint for ``rel`` and pick the edge date."""
        r = self.rng
        new_kind = rel.dst if role == "src" else rel.src
        anchor_age = rel.min_age_src if role == "src" else rel.min_age_dst
        new_age = rel.min_age_dst if role == "src" else rel.min_age_src
        new_is_dst = role == "src"
        lo, hi = self._active(anchor, anchor_age)
        if rel.date == "none":
            return self.make_node(new_kind, None, anchor), None
        pinned_to_new = (rel.date == "dst_start" and new_is_dst) or \
                        (rel.date == "src_start" and not new_is_dst)
        pinned_to_anchor = (rel.date == "dst_start" and not new_is_dst) or \
                           (rel.date == "src_start" and new_is_dst)
        if pinned_to_anchor:
            date = anchor.era[0]
        else:
            if lo > hi:
                raise _Retry
            date = r.randint(lo, hi)
        if pinned_to_new:
            return self.make_node(new_kind, date, anchor), date
        # The new node must already exist (and be old enough) at ``date``.
        if new_kind == "Person":
            birth = date - r.randint(new_age, new_age + 45)
            death = max(date + r.randint(0, 40), birth + 40)
            return self.make_person(birth, min(death, PRESENT_YEAR)), date
        if new_kind in ("Organization", "Work"):
            return self.make_node(new_kind, date - r.randint(0, 80), anchor), date
        if new_kind == "Event":
            return self.make_node(new_kind, date, anchor), date
        return self.make_node(new_kind, None, anchor), date

    def _date_between(self, rel: Relation, src: KgNode, dst: KgNode) -> Optional[int]:
        if rel.date == "none":
            return None
        if rel.date == "src_start":
            return src.era[0]
        if rel.date == "dst_start":
            return dst.era[0]
        lo_s, hi_s = self._active(src, rel.min_age_src)
        lo_d, hi_d = self._active(dst, rel.min_age_dst)
        lo, hi = max(lo_s, lo_d), min(hi_s, hi_d)
        if lo > hi:
            raise _Retry
        return self.rng.randint(lo, hi)

    # -- main loop -----------------------------------------------------------
    def seed_graph(self) -> KnowledgeGraph:
        r, rmap = self.rng, self.rmap
        birth = r.randint(1820, 1930)
        death = min(birth + r.randint(58, 94), PRESENT_YEAR)
        arche = rmap.archetypes[self.archetype]
        background = r.choice(rmap.backgrounds)
        self.graph = KnowledgeGraph({}, [], Protagonist("", self.archetype, background, []))
        node = self.make_person(birth, death, r.choice(arche["occupations"]),
                                {"background": background})
        self.graph.nodes[node.id] = node
        phases = []
        bounds = [birth + off for _, off in rmap.life_phases] + [death]
        for (phase, _), a, b in zip(rmap.life_phases, bounds, bounds[1:]):
            a, b = min(a, death), min(b, death)
            if a < b:
                phases.append((phase, (a, b)))
        self.graph.protagonist = Protagonist(node.id, self.archetype, background, phases)
        return self.graph

    def step(self, dist: dict[str, int], radius: int | None = None) -> bool:
        graph, r = self.graph, self.rng
        assert graph is not None
        ids = [i for i, d in dist.items() if radius is None or d <= radius]
        anchor = graph.nodes[r.choices(ids, [1.0 / (1 + dist[i]) for i in ids])[0]]
        options = self.rmap.legal(anchor.kind)
        if not options:
            return False
        prop = self.rmap.archetypes[self.archetype].get("propensity", {})
        is_prot = anchor.id == graph.protagonist.node_id
        weights = [float(prop.get(rel.name, 1)) if is_prot and role == "src" else 1.0
                   for rel, role in options]
        rel, role = r.choices(options, weights)[0]
        try:
            if r.random() < CONNECT_EXISTING_PROB:
                other_kind = rel.dst if role == "src" else rel.src
                pool = [n for n in graph.nodes.values()
                        if n.kind == other_kind and n.id != anchor.id]
                if not pool:
                    return False
                other = r.choice(pool)
                src, dst = (anchor, other) if role == "src" else (other, anchor)
                new_node = None
                date = self._date_between(rel, src, dst)
            else:
                new_node, date = self._new_partner(rel, anchor, role)
                src, dst = (anchor, new_node) if role == "src" else (new_node, anchor)
        except _Retry:
            return False
        attrs = self._edge_attrs(rel)
        if date is not None:
            attrs["date"] = date
        edge = KgEdge(src.id, dst.id, rel.name, attrs)
        if not self._admissible(edge, rel, new_node):
            if new_node is not None:
                self.namer.used.discard(new_node.name)
            return False
        if new_node is not None:
            graph.nodes[new_node.id] = new_node
        edge.seq = self._next_seq()
        graph.edges.append(edge)
        self.edge_keys.add((rel.name, edge.src, edge.dst))
        self.unique_used.add((rel.name, edge.src))
        return True

    def _admissible(self, edge: KgEdge, rel: Relation, new_node: KgNode | None) -> bool:
        graph = self.graph
        assert graph is not None
        if new_node is not None:
            graph.nodes[new_node.id] = new_node
        try:
            if edge_violations(graph, edge, self.rmap):
                return False
            if (rel.name, edge.src, edge.dst) in self.edge_keys:
                return False
            if rel.symmetric and (rel.name, edge.dst, edge.src) in self.edge_keys:
                return False
            if rel.unique_src and (rel.name, edge.src) in self.unique_used:
                return False
            if new_node is not None and new_node.kind == "Person" and \
                    new_node.era[1] - new_node.era[0] < 20:
                return False
            return True
        finally:
            if new_node is not None:
                del graph.nodes[new_node.id]


class _Retry(Exception):
    pass


def _facts_within(graph: KnowledgeGraph, dist: dict[str, int], radius: int) -> int:
    """Edges plus non-name attributes inside the radius (all when radius 0)."""
    def inside(nid: str) -> bool:
        return radius == 0 or dist.get(nid, radius + 1) <= radius
    edges = sum(1 for e in graph.edges if inside(e.src) and inside(e.dst))
    attrs = sum(_attr_facts(n) for n in graph.nodes.values() if inside(n.id))
    return edges + attrs


def _attr_facts(node: KgNode) -> int:
    return sum(1 for k in node.attrs if k != "name")


def expand_graph(seed: AttributeSeed, rmap: RelationMap | None = None,
                 triple_budget: int | None = None) -> KnowledgeGraph:
    """Grow a graph until ``triple_count`` facts lie within the radius.

    A fact is anything :func:`verbalize` turns into a sentence: an edge or a
    non-name node attribute.  At least one edge is always added, so a budget
    of 1 yields the protagonist plus exactly one edge.  With radius 0 the
    extraction ball holds no edges, so the budget then counts the whole graph.
    """
    if seed.task_kind != TaskKind.BioG:
        raise ValueError("expand_graph needs a BioG seed")
    rmap = rmap or load_relation_map()
    budget = int(seed.knobs["triple_count"] if triple_budget is None else triple_budget)
    radius = int(seed.knobs["radius"])
    rng = seeded_stream(seed.rng_seed, f"biog:{seed.tier.value}")
    archetype = rng.choice(sorted(rmap.archetypes))
    exp = _Expander(rng, rmap, archetype)
    graph = exp.seed_graph()
    failures = 0
    dist = graph.distances()
    counted = _facts_within(graph, dist, radius)
    while counted < budget or not graph.edges:
        if failures >= MAX_FAILED_ATTEMPTS:
            raise KgExhaustedError(
                f"no legal expansion after {MAX_FAILED_ATTEMPTS} attempts "
                f"({counted}/{budget} facts)")
        if not exp.step(dist, radius if radius > 0 else None):
            failures += 1
            continue
        failures = 0
        edge = graph.edges[-1]
        if edge.src in dist and edge.dst in dist:
            # A chord between known nodes can shorten paths: recount fully.
            dist = graph.distances()
            counted = _facts_within(graph, dist, radius)
            continue
        old, new = (edge.src, edge.dst) if edge.src in dist else (edge.dst, edge.src)
        dist[new] = dist[old] + 1
        if radius == 0 or dist[new] <= radius:
            counted += 1 + _attr_facts(graph.nodes[new])
    return graph


def extract_subgraph(graph: KnowledgeGraph, radius: int) -> KnowledgeGraph:
    """Induced subgraph on nodes within ``radius`` hops of the protagonist."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    dist = graph.distances()
    keep = {nid for nid, d in dist.items() if d <= radius}
    nodes = {nid: n for nid, n in graph.nodes.items() if nid in keep}
    edges = [e for e in graph.edges if e.src in keep and e.dst in keep]
    return KnowledgeGraph(nodes, edges, graph.protagonist)


# ---------------------------------------------------------------------------
# Verbalization
# ---------------------------------------------------------------------------

def _template_index(triple: Iterable[Any], n: int) -> int:
    digest = hashlib.sha256("|".join(map(str, triple)).encode()).digest()
    return int.from_bytes(digest[:4], "big") % n


def verbalize(subgraph: KnowledgeGraph, rmap: RelationMap | None = None) -> list[TripleSentence]:
    """One sentence per edge and per non-name node attribute, in insertion order."""
    rmap = rmap or load_relation_map()
    items: list[tuple[int, int, TripleSentence]] = []
    for node in subgraph.nodes.values():
        templates = rmap.attributes.get(node.kind, {})
        for k, (attr, value) in enumerate(node.attrs.items()):
            if attr == "name":
                continue
            if attr not in templates:
                raise RelationMapError(f"no template for {node.kind}.{attr}")
            triple = (node.id, attr, str(value))
            idx = _template_index(triple, len(templates[attr]))
            text = _sentence(templates[attr][idx], s=node.name, v=value)
            items.append((node.seq, k, TripleSentence(
                triple, text, f"{node.kind}.{attr}#{idx}", {},
                (node.name, str(value)))))
    for edge in subgraph.edges:
        rel = rmap.relations.get(edge.relation)
        if rel is None:
            raise RelationMapError(f"no template for relation {edge.relation}")
        triple = (edge.src, edge.relation, edge.dst)
        idx = _template_index(triple, len(rel.templates))
        src, dst = subgraph.nodes[edge.src], subgraph.nodes[edge.dst]
        text = _sentence(rel.templates[idx], s=src.name, o=dst.name, **edge.attrs)
        keys = (src.name, dst.name) + tuple(str(edge.attrs[a]) for a in
                                            sorted(edge.attrs))
        items.append((edge.seq, 0, TripleSentence(triple, text, f"{rel.name}#{idx}",
                                                  dict(edge.attrs), keys)))
    items.sort(key=lambda t: (t[0], t[1]))
    return [ts for _, _, ts in items]


def _sentence(template: str, **values: Any) -> str:
    text = template.format(**values)
    return text[0].upper() + text[1:]


def render_triple(ts: TripleSentence, graph: KnowledgeGraph,
                  rmap: RelationMap | None = None) -> str:
    rmap = rmap or load_relation_map()
    s, p, o = ts.triple
    subj = graph.nodes[s].name
    obj = graph.nodes[o].name if p in rmap.relations else o
    quals = "".join(f" | {k}: {v}" for k, v in sorted(ts.qualifiers.items()))
    return f"({subj}, {p}, {obj}{quals})"


# ---------------------------------------------------------------------------
# Task instance
# ---------------------------------------------------------------------------

BUDGET_SLACK = 0.15


def _sized_subgraph(seed: AttributeSeed, rmap: RelationMap):
    """Expand with the tier budget, then correct it for sentence length.

    Expansion is a deterministic prefix process, so a rescaled budget just
    stops the same history earlier or later.  The correction is capped at
    ``BUDGET_SLACK`` around the tier's ``triple_count``.
    """
    base = int(seed.knobs["triple_count"])
    radius = int(seed.knobs["radius"])
    target = seed.target_tokens
    budget = base
    for _ in range(3):
        graph = expand_graph(seed, rmap, triple_budget=budget)
        sub = extract_subgraph(graph, radius)
        sentences = verbalize(sub, rmap)
        tokens = count_tokens(" ".join(ts.sentence for ts in sentences))
        if abs(tokens - target) <= 0.03 * target or tokens == 0:
            break
        scaled = round(budget * target / tokens)
        lo, hi = int(base * (1 - BUDGET_SLACK)), int(base * (1 + BUDGET_SLACK)) + 1
        new_budget = max(1, min(max(scaled, lo), hi))
        if new_budget == budget:
            break
        budget = new_budget
    return graph, sub, sentences, budget


def gen_biog(seed: AttributeSeed, rmap: RelationMap | None = None) -> TaskInstance:
    if seed.task_kind != TaskKind.BioG:
        raise ValueError("gen_biog needs a BioG seed")
    rmap = rmap or load_relation_map()
    graph, sub, sentences, budget = _sized_subgraph(seed, rmap)
    lines = [render_triple(ts, sub, rmap) for ts in sentences]
    prot = sub.nodes[sub.protagonist.node_id]
    material = "Facts (subject, predicate, object | qualifiers):\n" + "\n".join(
        f"{i}. {line}" for i, line in enumerate(lines, 1))
    task = (f"Write a biography of {prot.name} as a fluent, well-organized "
            f"narrative in prose. Incorporate every fact listed above, each stated "
            f"accurately with its names, dates and other qualifiers. Do not invent "
            f"facts that contradict them, and do not output the list itself.")
    # The facts are already enumerated in the material; repeating them in the
    # instruction would double the prompt.
    instruction = compose_instruction(task, "", [], seed.target_tokens)
    constraints = [{"text": line, "triple": list(ts.triple)}
                   for line, ts in zip(lines, sentences)]
    verifiers = [ts.to_dict() for ts in sentences]
    meta = {"seed": seed.to_dict(), "calibration": CALIBRATION_VERSION,
            "relation_map_version": rmap.version,
            "protagonist": {"id": prot.id, "name": prot.name,
                            "archetype": sub.protagonist.archetype},
            "radius": int(seed.knobs["radius"]),
            "triple_budget": budget,
            "graph_nodes": len(graph.nodes), "graph_edges": len(graph.edges),
            "subgraph_edges": len(sub.edges)}
    return TaskInstance(instance_id(seed), seed.task_kind, seed.tier,
                        material=material, instruction=instruction,
                        constraints=constraints, verifiers=verifiers, meta=meta)
