"""Generators for the rule-verified tasks: KV dictionary, FSM simulation, paragraph reordering."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass
from typing import Any, Sequence

from .core import (
    AttributeSeed,
    CALIBRATION_VERSION,
    TaskInstance,
    TaskKind,
    compose_instruction,
    instance_id,
    seeded_stream,
)
from .corpus import Document, default_corpus

# ---------------------------------------------------------------------------
# KV dictionary generation
# ---------------------------------------------------------------------------

KEY_PATTERN = re.compile(r"^[A-Z0-9]+(?:_[A-Z0-9]+)*$")
_KEY_ALPHABET = string.ascii_uppercase + string.digits
_VALUE_ALPHABET = string.ascii_lowercase + string.digits
_KV_LINE = re.compile(r'^\s*"((?:[^"\\]|\\.)*)"\s*:\s*"((?:[^"\\]|\\.)*)"\s*,?\s*$')


@dataclass(frozen=True)
class KvSpec:
    entries: list[tuple[str, str]]
    key_length: int
    value_length: int
    target_index: int

    @property
    def target_key(self) -> str:
        return self.entries[self.target_index][0]

    @property
    def target_value(self) -> str:
        return self.entries[self.target_index][1]


def _random_key(rng, length: int) -> str:
    chars = [rng.choice(_KEY_ALPHABET) for _ in range(length)]
    # Underscores at interior positions, never adjacent.
    for pos in range(2, length - 2, rng.randint(4, 7)):
        chars[pos] = "_"
    return "".join(chars)


def _random_value(rng, length: int) -> str:
    return "".join(rng.choice(_VALUE_ALPHABET) for _ in range(length))


def serialize_kv(entries: Sequence[tuple[str, str]]) -> str:
    lines = ["{"]
    for i, (key, value) in enumerate(entries):
        comma = "," if i < len(entries) - 1 else ""
        lines.append(f'    "{key}": "{value}"{comma}')
    lines.append("}")
    return "\n".join(lines)


def parse_kv(text: str) -> list[tuple[str, str]]:
    """Tolerant line-wise parse; entry position is its line order among entries."""
    return [(m.group(1), m.group(2))
            for line in text.splitlines() if (m := _KV_LINE.match(line))]


def kv_spec_from_seed(seed: AttributeSeed) -> KvSpec:
    knobs = seed.knobs
    n = int(knobs["entry_count"])
    rng = seeded_stream(seed.rng_seed, "kv")
    keys: set[str] = set()
    entries = []
    while len(entries) < n:
        key = _random_key(rng, int(knobs["key_length"]))
        if key in keys:
            continue
        keys.add(key)
        entries.append((key, _random_value(rng, int(knobs["value_length"]))))
    return KvSpec(entries, int(knobs["key_length"]), int(knobs["value_length"]),
                  rng.randrange(n))


def gen_kv(seed: AttributeSeed) -> TaskInstance:
    if seed.task_kind != TaskKind.KVG:
        raise ValueError("gen_kv needs a KVG seed")
    spec = kv_spec_from_seed(seed)
    n = len(spec.entries)
    gold = serialize_kv(spec.entries)
    if seed.target_tokens < len(gold.splitlines()[1]) // 4:
        raise ValueError("tier underflow")
    constraint_text = (f'Place the entry "{spec.target_key}": "{spec.target_value}" '
                       f"at index {spec.target_index} (0-based).")
    task = (
        f"Generate a dictionary with exactly {n} key-value entries.\n"
        f"Formatting rules:\n"
        f"- Keys are exactly {spec.key_length} characters of uppercase letters "
        f"(A-Z), digits and underscores, e.g. ABC_DEF; no lowercase letters.\n"
        f"- Values are exactly {spec.value_length} characters of lowercase "
        f"letters and digits.\n"
        f"- All keys are unique.\n"
        f"- Output one entry per line in the form \"KEY\": \"value\", enclosed "
        f"in braces, and nothing else.\n"
        f"- Entry positions are counted from 0 in line order."
    )
    instruction = compose_instruction(task, "Required placement:",
                                      [constraint_text], seed.target_tokens)
    constraint = {"text": constraint_text, "target_key": spec.target_key,
                  "target_value": spec.target_value,
                  "target_index": spec.target_index}
    verifier = {"target_key": spec.target_key, "target_value": spec.target_value,
                "target_index": spec.target_index, "entry_count": n,
                "key_pattern": KEY_PATTERN.pattern,
                "key_length": spec.key_length, "value_length": spec.value_length}
    meta = {"seed": seed.to_dict(), "calibration": CALIBRATION_VERSION,
            "gold_entries": [list(e) for e in spec.entries],
            "tokens_per_entry": round(len(gold) / 4 / n, 3)}
    return TaskInstance(instance_id(seed), seed.task_kind, seed.tier,
                        material="", instruction=instruction,
                        constraints=[constraint], verifiers=[verifier], meta=meta)


# ---------------------------------------------------------------------------
# Finite state machine simulation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FsmSpec:
    num_states: int
    input_alphabet: tuple[str, ...]
    output_alphabet: tuple[str, ...]
    transitions: dict[tuple[int, str], tuple[int, str]]
    initial_state: int
    input_string: tuple[str, ...]

    def validate(self) -> None:
        for state in range(self.num_states):
            for sym in self.input_alphabet:
                if (state, sym) not in self.transitions:
                    raise ValueError(f"transition missing for ({state}, {sym})")
        if not 0 <= self.initial_state < self.num_states:
            raise ValueError("initial state out of range")
        for sym in self.input_string:
            if sym not in self.input_alphabet:
                raise ValueError(f"input symbol {sym!r} not in alphabet")

    def reachable(self) -> set[int]:
        seen = {self.initial_state}
        frontier = [self.initial_state]
        while frontier:
            state = frontier.pop()
            for sym in self.input_alphabet:
                nxt = self.transitions[(state, sym)][0]
                if nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
        return seen

    def to_dict(self) -> dict[str, Any]:
        return {
            "num_states": self.num_states,
            "input_alphabet": list(self.input_alphabet),
            "output_alphabet": list(self.output_alphabet),
            "transitions": [[s, a, n, o] for (s, a), (n, o)
                            in sorted(self.transitions.items())],
            "initial_state": self.initial_state,
            "input_string": list(self.input_string),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> FsmSpec:
        return cls(
            int(data["num_states"]), tuple(data["input_alphabet"]),
            tuple(data["output_alphabet"]),
            {(int(s), a): (int(n), o) for s, a, n, o in data["transitions"]},
            int(data["initial_state"]), tuple(data["input_string"]))


@dataclass(frozen=True)
class FsmStep:
    index: int
    state_before: int
    input_symbol: str
    state_after: int
    output_symbol: str


FsmTrace = list[FsmStep]


def simulate_fsm(spec: FsmSpec) -> FsmTrace:
    trace = []
    state = spec.initial_state
    for i, sym in enumerate(spec.input_string):
        nxt, out = spec.transitions[(state, sym)]
        trace.append(FsmStep(i, state, sym, nxt, out))
        state = nxt
    return trace


def state_name(state: int) -> str:
    return f"S{state}"


def render_step(step: FsmStep) -> str:
    return (f"STEP {step.index + 1}: {state_name(step.state_before)} "
            f"--{step.input_symbol}/{step.output_symbol}--> "
            f"{state_name(step.state_after)}")


def render_trace(trace: Sequence[FsmStep]) -> str:
    return "\n".join(render_step(s) for s in trace)


def render_transition_table(spec: FsmSpec) -> str:
    lines = ["Transition table (current state, input -> next state, output):"]
    for state in range(spec.num_states):
        for sym in spec.input_alphabet:
            nxt, out = spec.transitions[(state, sym)]
            lines.append(f"{state_name(state)}, {sym} -> {state_name(nxt)}, {out}")
    return "\n".join(lines)


_INPUT_SYMBOLS = "abcdefghij"
_OUTPUT_SYMBOLS = "xyzuvwrstq"
MAX_FSM_ATTEMPTS = 100


def random_fsm(rng, num_states: int, input_size: int, output_size: int,
               step_length: int) -> FsmSpec | None:
    inputs = tuple(_INPUT_SYMBOLS[:input_size])
    outputs = tuple(_OUTPUT_SYMBOLS[:output_size])
    transitions = {(s, a): (rng.randrange(num_states), rng.choice(outputs))
                   for s in range(num_states) for a in inputs}
    spec = FsmSpec(num_states, inputs, outputs, transitions, 0,
                   tuple(rng.choice(inputs) for _ in range(step_length)))
    if len(spec.reachable()) != num_states:
        return None
    return spec


def fsm_spec_from_seed(seed: AttributeSeed) -> FsmSpec:
    knobs = seed.knobs
    rng = seeded_stream(seed.rng_seed, "fsm")
    for _ in range(MAX_FSM_ATTEMPTS):
        spec = random_fsm(rng, int(knobs["num_states"]), int(knobs["input_size"]),
                          int(knobs["output_size"]), int(knobs["step_length"]))
        if spec is not None:
            return spec
    raise RuntimeError(
        f"no machine with all states reachable after {MAX_FSM_ATTEMPTS} attempts")


def gen_fsm(seed: AttributeSeed) -> TaskInstance:
    if seed.task_kind != TaskKind.SMS:
        raise ValueError("gen_fsm needs an SMS seed")
    spec = fsm_spec_from_seed(seed)
    trace = simulate_fsm(spec)
    constraint_text = (f"Initial state: {state_name(spec.initial_state)}; "
                       f"input sequence ({len(spec.input_string)} symbols): "
                       f"{' '.join(spec.input_string)}")
    task = (
        "Simulate the finite state machine defined by the transition table "
        "above. Starting from the initial state, consume the input sequence "
        "one symbol at a time. For every symbol write exactly one line in the "
        "format\n"
        "STEP i: state_before --input/output--> state_after\n"
        "where i counts from 1, for example: STEP 1: S0 --a/x--> S2\n"
        "Write every step; do not skip or summarize."
    )
    instruction = compose_instruction(task, "Simulation input:",
                                      [constraint_text], seed.target_tokens)
    constraint = {"text": constraint_text, "initial_state": spec.initial_state,
                  "input_string": list(spec.input_string)}
    verifier = {"spec": spec.to_dict(),
                "trace": [[s.index, s.state_before, s.input_symbol,
                           s.state_after, s.output_symbol] for s in trace]}
    meta = {"seed": seed.to_dict(), "calibration": CALIBRATION_VERSION}
    return TaskInstance(instance_id(seed), seed.task_kind, seed.tier,
                        material=render_transition_table(spec),
                        instruction=instruction, constraints=[constraint],
                        verifiers=[verifier], meta=meta)


def trace_from_verifier(verifier: dict[str, Any]) -> FsmTrace:
    return [FsmStep(int(i), int(b), a, int(n), o) for i, b, a, n, o in verifier["trace"]]


# ---------------------------------------------------------------------------
# Paragraph reordering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ReorderSpec:
    paragraphs: list[str]
    shuffled_order: list[int]

    @property
    def labels(self) -> list[str]:
        return [f"P{i + 1}" for i in range(len(self.paragraphs))]

    def presented(self) -> list[str]:
        return [self.paragraphs[j] for j in self.shuffled_order]

    def gold_labels(self) -> list[str]:
        position = {orig: pos for pos, orig in enumerate(self.shuffled_order)}
        return [f"P{position[j] + 1}" for j in range(len(self.paragraphs))]


def non_identity_shuffle(rng, n: int) -> list[int]:
    order = list(range(n))
    if n < 2:
        return order
    while True:
        rng.shuffle(order)
        if order != sorted(order):
            return order


def render_order_line(labels: Sequence[str]) -> str:
    return "ORDER: " + ", ".join(labels)


def gen_reorder(seed: AttributeSeed,
                corpus: Sequence[Document] | None = None) -> TaskInstance:
    if seed.task_kind != TaskKind.PR:
        raise ValueError("gen_reorder needs a PR seed")
    docs = corpus if corpus is not None else default_corpus()
    n = int(seed.knobs["para_length"])
    eligible = [i for i, d in enumerate(docs) if len(d) >= n]
    if not eligible:
        raise ValueError("insufficient corpus")
    rng = seeded_stream(seed.rng_seed, "reorder")
    doc_index = rng.choice(eligible)
    doc = docs[doc_index]
    start = rng.randint(0, len(doc) - n)
    spec = ReorderSpec(list(doc[start:start + n]), non_identity_shuffle(rng, n))
    labels = spec.labels
    material = "\n\n".join(f"[{label}]\n{text}"
                           for label, text in zip(labels, spec.presented()))
    constraint_text = "Shuffled paragraph labels: " + ", ".join(labels)
    task = (
        "The paragraphs above were taken from one document and shuffled. "
        "Restore their original order. Rewrite the paragraphs in the restored "
        "order, each preceded by its label in square brackets, and end your "
        "response with a single line of the form\n"
        "ORDER: Pi, Pj, Pk, ...\n"
        "listing every label exactly once in the restored order."
    )
    instruction = compose_instruction(task, "Labels to order:", [constraint_text],
                                      seed.target_tokens)
    constraint = {"text": constraint_text, "labels": labels}
    verifier = {"gold_order": spec.gold_labels()}
    meta = {"seed": seed.to_dict(), "calibration": CALIBRATION_VERSION,
            "doc_index": doc_index, "start": start,
            "shuffled_order": spec.shuffled_order}
    return TaskInstance(instance_id(seed), seed.task_kind, seed.tier,
                        material=material, instruction=instruction,
                        constraints=[constraint], verifiers=[verifier], meta=meta)


def reorder_spec_from_instance(instance: TaskInstance) -> tuple[dict[str, str], list[str]]:
    """(label -> paragraph text, gold label order) recovered from an instance."""
    blocks = {}
    for m in re.finditer(r"\[(P\d+)\]\n(.*?)(?=\n\n\[P\d+\]\n|\Z)",
                         instance.material, re.S):
        blocks[m.group(1)] = m.group(2)
    return blocks, list(instance.verifiers[0]["gold_order"])
