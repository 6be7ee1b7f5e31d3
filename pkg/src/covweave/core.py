"""Shared domain types, seeded randomness, token counting and score arithmetic."""

from __future__ import annotations

import enum
import hashlib
import json
import math
import random
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence


class TaskKind(str, enum.Enum):
    CF = "CF"
    BioG = "BioG"
    SR = "SR"
    NW = "NW"
    KVG = "KVG"
    SMS = "SMS"
    PR = "PR"


class Tier(str, enum.Enum):
    T1k = "T1k"
    T2k = "T2k"
    T4k = "T4k"
    T8k = "T8k"

    @property
    def target_tokens(self) -> int:
        return TIER_TOKENS[self]


TIER_TOKENS = {Tier.T1k: 1000, Tier.T2k: 2000, Tier.T4k: 4000, Tier.T8k: 8000}

# Report order for tables; also the canonical iteration order of a run.
TASK_ORDER = (TaskKind.CF, TaskKind.BioG, TaskKind.SR, TaskKind.NW,
              TaskKind.KVG, TaskKind.SMS, TaskKind.PR)
TIER_ORDER = (Tier.T1k, Tier.T2k, Tier.T4k, Tier.T8k)

# Words are estimated as 0.75 tokens when phrasing length requirements.
WORDS_PER_TOKEN = 0.75


# --------------------------------------------------------------------------
# Calibration: tier -> scale parameter.
#
# Each count is the measured gold-output cost per unit divided into the tier
# target, rounded.  Bump CALIBRATION_VERSION whenever a number changes; it is
# stamped into every generated instance.
# --------------------------------------------------------------------------

CALIBRATION_VERSION = "2026.10-1"

CALIBRATION: dict[TaskKind, dict[str, dict[Tier, int]]] = {
    TaskKind.KVG: {"entry_count": {Tier.T1k: 53, Tier.T2k: 106,
                                   Tier.T4k: 213, Tier.T8k: 426}},
    TaskKind.SMS: {"step_length": {Tier.T1k: 165, Tier.T2k: 325,
                                   Tier.T4k: 645, Tier.T8k: 1284}},
    TaskKind.PR: {"para_length": {Tier.T1k: 11, Tier.T2k: 22,
                                  Tier.T4k: 44, Tier.T8k: 88}},
    TaskKind.CF: {"error_lines": {Tier.T1k: 8, Tier.T2k: 16,
                                  Tier.T4k: 32, Tier.T8k: 64}},
    TaskKind.BioG: {"triple_count": {Tier.T1k: 76, Tier.T2k: 150,
                                     Tier.T4k: 303, Tier.T8k: 610}},
    TaskKind.SR: {"record_count": {Tier.T1k: 120, Tier.T2k: 240,
                                   Tier.T4k: 480, Tier.T8k: 960},
                  "target_count": {Tier.T1k: 31, Tier.T2k: 64,
                                   Tier.T4k: 132, Tier.T8k: 270},
                  "rep_count": {Tier.T1k: 4, Tier.T2k: 6,
                                Tier.T4k: 12, Tier.T8k: 24},
                  "product_count": {Tier.T1k: 4, Tier.T2k: 5,
                                    Tier.T4k: 10, Tier.T8k: 20},
                  "city_count": {Tier.T1k: 3, Tier.T2k: 5,
                                 Tier.T4k: 10, Tier.T8k: 20}},
    TaskKind.NW: {"fact_count": {Tier.T1k: 60, Tier.T2k: 120,
                                 Tier.T4k: 240, Tier.T8k: 480}},
}

# Fixed knobs (not tier dependent).  Values from the task configuration table
# where it gives one; the rest are artifact choices.
FIXED_KNOBS: dict[TaskKind, dict[str, Any]] = {
    TaskKind.CF: {"violation_prob": 0.85},
    TaskKind.BioG: {"radius": 2},
    TaskKind.SR: {"target_achievement": "auto", "growth": "auto"},
    TaskKind.NW: {"mode": "template"},
    TaskKind.KVG: {"key_length": 32, "value_length": 32},
    TaskKind.SMS: {"num_states": 3, "input_size": 3, "output_size": 3},
    TaskKind.PR: {},
}

_PROBABILITY_KNOBS = {"violation_prob"}
_COUNT_KNOBS = {"entry_count", "step_length", "para_length", "error_lines",
                "triple_count", "record_count", "target_count", "fact_count",
                "key_length", "value_length", "num_states", "input_size",
                "output_size", "radius", "rep_count", "product_count",
                "city_count"}
_MINIMUMS = {"key_length": 4, "value_length": 1, "num_states": 1,
             "input_size": 1, "output_size": 1, "entry_count": 1,
             "step_length": 1, "para_length": 1, "record_count": 1,
             "rep_count": 1, "product_count": 1, "city_count": 1}
_CHOICE_KNOBS = {"mode": ("template", "llm"),
                 "target_achievement": ("auto", "exceed", "meet", "miss"),
                 "growth": ("auto", "positive", "neutral", "negative")}


def default_knobs(task_kind: TaskKind, tier: Tier) -> dict[str, Any]:
    knobs = dict(FIXED_KNOBS[task_kind])
    for name, table in CALIBRATION[task_kind].items():
        knobs[name] = table[tier]
    return knobs


class AttributeSpaceError(ValueError):
    """An attribute seed lies outside the valid attribute space."""


@dataclass(frozen=True)
class AttributeSeed:
    task_kind: TaskKind
    tier: Tier
    rng_seed: int
    knobs: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        object.__setattr__(self, "tier", Tier(self.tier))
        if not 0 <= int(self.rng_seed) < 2**64:
            raise AttributeSpaceError(f"rng_seed out of range: {self.rng_seed}")
        merged = default_knobs(self.task_kind, self.tier)
        unknown = set(self.knobs) - set(merged)
        if unknown:
            raise AttributeSpaceError(
                f"unknown knobs for {self.task_kind.value}: {sorted(unknown)}")
        merged.update(self.knobs)
        for name, value in merged.items():
            if name in _PROBABILITY_KNOBS:
                if not 0.0 <= float(value) <= 1.0:
                    raise AttributeSpaceError(f"{name} must lie in [0, 1], got {value}")
            elif name in _COUNT_KNOBS:
                if int(value) != value or value < _MINIMUMS.get(name, 0):
                    raise AttributeSpaceError(f"{name} out of range: {value}")
            elif name in _CHOICE_KNOBS and value not in _CHOICE_KNOBS[name]:
                raise AttributeSpaceError(f"unknown {name} {value!r}")
        object.__setattr__(self, "knobs", dict(sorted(merged.items())))

    @property
    def target_tokens(self) -> int:
        return self.tier.target_tokens

    def to_dict(self) -> dict[str, Any]:
        return {"task_kind": self.task_kind.value, "tier": self.tier.value,
                "rng_seed": int(self.rng_seed), "knobs": dict(self.knobs)}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> AttributeSeed:
        return cls(TaskKind(data["task_kind"]), Tier(data["tier"]),
                   int(data["rng_seed"]), dict(data.get("knobs", {})))


def instance_id(seed: AttributeSeed) -> str:
    """Stable id: content hash of (task_kind, tier, rng_seed, knobs)."""
    payload = json.dumps(seed.to_dict(), sort_keys=True, separators=(",", ":"))
    digest = hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
    return f"{seed.task_kind.value}-{seed.tier.value}-{digest}"


@dataclass(frozen=True)
class TaskInstance:
    id: str
    task_kind: TaskKind
    tier: Tier
    material: str
    instruction: str
    constraints: list[dict[str, Any]]
    verifiers: list[dict[str, Any]]
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        object.__setattr__(self, "tier", Tier(self.tier))
        if len(self.constraints) != len(self.verifiers):
            raise ValueError(
                f"{self.id}: {len(self.constraints)} constraints vs "
                f"{len(self.verifiers)} verifiers")

    @property
    def target_tokens(self) -> int:
        return self.tier.target_tokens

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["task_kind"] = self.task_kind.value
        data["tier"] = self.tier.value
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TaskInstance:
        return cls(
            id=data["id"], task_kind=TaskKind(data["task_kind"]),
            tier=Tier(data["tier"]), material=data["material"],
            instruction=data["instruction"],
            constraints=list(data["constraints"]),
            verifiers=list(data["verifiers"]), meta=dict(data.get("meta", {})))


@dataclass(frozen=True)
class GenerationResult:
    instance_id: str
    output_text: str
    truncated: bool = False
    output_tokens: int = 0
    latency_ms: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> GenerationResult:
        return cls(instance_id=data["instance_id"],
                   output_text=data.get("output_text", ""),
                   truncated=bool(data.get("truncated", False)),
                   output_tokens=int(data.get("output_tokens", 0)),
                   latency_ms=float(data.get("latency_ms", 0.0)),
                   error=data.get("error"))


SKIPPED = "skipped"


@dataclass(frozen=True)
class TaskScore:
    """Named sub-scores and their harmonic-mean final.

    A sub-score may be the string ``"skipped"``; skipped entries are reported
    but excluded from the final.
    """

    instance_id: str
    task_kind: TaskKind
    tier: Tier
    sub_scores: list[tuple[str, float | str]]
    final: float
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "task_kind", TaskKind(self.task_kind))
        object.__setattr__(self, "tier", Tier(self.tier))
        object.__setattr__(self, "sub_scores",
                           [(str(n), v) for n, v in self.sub_scores])
        for name, value in self.sub_scores:
            if value != SKIPPED and not 0.0 <= value <= 1.0:
                raise ValueError(f"sub-score {name}={value} outside [0, 1]")

    @classmethod
    def build(cls, instance_id: str, task_kind: TaskKind, tier: Tier,
              sub_scores: Sequence[tuple[str, float | str]],
              diagnostics: Mapping[str, Any] | None = None) -> TaskScore:
        values = [float(v) for _, v in sub_scores if v != SKIPPED]
        final = harmonic_mean(values) if values else 0.0
        return cls(instance_id, task_kind, tier,
                   [(n, v if v == SKIPPED else float(v)) for n, v in sub_scores],
                   final, dict(diagnostics or {}))

    def sub(self, name: str) -> float | str:
        for key, value in self.sub_scores:
            if key == name:
                return value
        raise KeyError(name)

    def to_dict(self) -> dict[str, Any]:
        return {"instance_id": self.instance_id,
                "task_kind": self.task_kind.value, "tier": self.tier.value,
                "sub_scores": [[n, v] for n, v in self.sub_scores],
                "final": self.final, "diagnostics": self.diagnostics}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> TaskScore:
        return cls(data["instance_id"], TaskKind(data["task_kind"]),
                   Tier(data["tier"]),
                   [(n, v) for n, v in data["sub_scores"]],
                   float(data["final"]), dict(data.get("diagnostics", {})))


# --------------------------------------------------------------------------
# Tokenizers
# --------------------------------------------------------------------------

class Tokenizer(Protocol):
    name: str

    def count(self, text: str) -> int: ...


class CharEstimator:
    """ceil(characters / 4); the offline default."""

    name = "chars/4"

    def count(self, text: str) -> int:
        return math.ceil(len(text) / 4)


class TiktokenTokenizer:
    def __init__(self, encoding: str = "cl100k_base") -> None:
        import tiktoken

        self._enc = tiktoken.get_encoding(encoding)
        self.name = f"tiktoken:{encoding}"

    def count(self, text: str) -> int:
        return len(self._enc.encode(text, disallowed_special=()))


_tokenizer: Tokenizer = CharEstimator()


def get_tokenizer(name: str | None = None) -> Tokenizer:
    if name is None:
        return _tokenizer
    if name in ("chars/4", "chars", "default"):
        return CharEstimator()
    if name.startswith("tiktoken"):
        _, _, encoding = name.partition(":")
        return TiktokenTokenizer(encoding or "cl100k_base")
    raise ValueError(f"unknown tokenizer {name!r}")


def set_tokenizer(tokenizer: Tokenizer | str) -> Tokenizer:
    """Install the process-wide tokenizer; returns the previous one."""
    global _tokenizer
    previous = _tokenizer
    _tokenizer = get_tokenizer(tokenizer) if isinstance(tokenizer, str) else tokenizer
    return previous


def count_tokens(text: str, tokenizer: Tokenizer | None = None) -> int:
    return (tokenizer or _tokenizer).count(text)


# --------------------------------------------------------------------------
# Score arithmetic
# --------------------------------------------------------------------------

def harmonic_mean(values: Iterable[float]) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("no sub-scores")
    for v in vals:
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"sub-score {v} outside [0, 1]")
    if any(v == 0.0 for v in vals):
        return 0.0
    hm = len(vals) / math.fsum(1.0 / v for v in vals)
    # Clamp rounding drift so min <= HM <= max holds exactly.
    return min(max(hm, min(vals)), max(vals))


LENGTH_TOLERANCE = 0.10


def length_score(actual_tokens: int, target_tokens: int) -> float:
    """1.0 inside a 10% band, then linear decay reaching 0 at 100% deviation."""
    if target_tokens <= 0:
        raise ValueError("target_tokens must be positive")
    deviation = abs(actual_tokens - target_tokens) / target_tokens
    if deviation <= LENGTH_TOLERANCE:
        return 1.0
    return max(0.0, 1.0 - (deviation - LENGTH_TOLERANCE) / (1.0 - LENGTH_TOLERANCE))


def seeded_stream(seed: int, label: str) -> random.Random:
    """Independent, platform-stable stream for a (seed, label) pair."""
    digest = hashlib.sha256(f"{int(seed)}\x1f{label}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:16], "big"))


def derive_seed(*parts: Any) -> int:
    """64-bit seed from arbitrary labelled parts (hash, not Python's hash())."""
    text = "\x1f".join(str(p.value if isinstance(p, enum.Enum) else p) for p in parts)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


# --------------------------------------------------------------------------
# Instruction helpers shared by generators
# --------------------------------------------------------------------------

def length_requirement(target_tokens: int) -> str:
    words = int(round(target_tokens * WORDS_PER_TOKEN))
    return (f"Length requirement: your response should be about {words} words "
            f"(approximately {target_tokens} tokens).")


def enumerate_constraints(header: str, texts: Sequence[str]) -> str:
    if not texts:
        return ""
    lines = [header]
    lines.extend(f"{i}. {t}" for i, t in enumerate(texts, start=1))
    return "\n".join(lines)


def compose_instruction(task_text: str, constraint_header: str,
                        constraint_texts: Sequence[str], target_tokens: int) -> str:
    parts = [task_text.strip()]
    block = enumerate_constraints(constraint_header, constraint_texts)
    if block:
        parts.append(block)
    parts.append(length_requirement(target_tokens))
    return "\n\n".join(parts)


Generator = Callable[[AttributeSeed], TaskInstance]
