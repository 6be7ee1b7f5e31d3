"""AP-style news writing (NW): flawed/corrected statement pairs.

Template mode fills per-rule sentence templates from seeded streams and
applies exactly one rule's error injector per statement.  LLM mode asks an
external model for pairs, validates them, and retries malformed batches.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Optional, Protocol

from .core import (CALIBRATION_VERSION, AttributeSeed, TaskInstance, TaskKind,
                   compose_instruction, instance_id, seeded_stream)

NOUNS = ("buses", "trucks", "schools", "families", "volunteers", "classrooms",
         "bridges", "clinics", "teams", "boats", "shelters", "parks")
SMALL = ("one", "two", "three", "four", "five", "six", "seven", "eight", "nine")
TENS = {10: "ten", 11: "eleven", 12: "twelve", 13: "thirteen", 14: "fourteen",
        15: "fifteen", 16: "sixteen", 17: "seventeen", 18: "eighteen",
        19: "nineteen", 20: "twenty", 30: "thirty", 40: "forty", 50: "fifty",
        60: "sixty", 70: "seventy", 80: "eighty", 90: "ninety"}
STATES = {"IL": ("Illinois", "Ill."), "TX": ("Texas", "Tex."),
          "CA": ("California", "Calif."), "OR": ("Oregon", "Ore."),
          "MA": ("Massachusetts", "Mass."), "GA": ("Georgia", "Ga."),
          "CO": ("Colorado", "Colo."), "MI": ("Michigan", "Mich."),
          "PA": ("Pennsylvania", "Pa."), "WA": ("Washington", "Wash."),
          "FL": ("Florida", "Fla.")}
TOWNS = ("Riverton", "Fairview", "Lakeside", "Ashland", "Clayton", "Milford",
         "Oakdale", "Franklin", "Greenville", "Bristol", "Hudson", "Kingston")
PEOPLE = ("Ana Silva", "Marcus Reed", "Priya Nair", "Tomas Berg", "Lena Ortiz",
          "David Okafor", "Hannah Cole", "Omar Haddad", "Grace Lin", "Victor Hale")
ORGS = ("the Harbor Relief Fund", "the county transit board", "the city council",
        "the regional health district", "the school board", "the parks department",
        "the Riverside Food Bank", "the state emergency office")
TITLES = ("mayor", "governor", "senator", "superintendent", "chancellor", "president")
STREETS = ("Main", "Elm", "Oak", "Harbor", "Lincoln", "Maple", "Cedar", "Park")
STREET_KINDS = (("Street", "St."), ("Avenue", "Ave."), ("Boulevard", "Blvd."))
LONG_MONTHS = (("January", "Jan."), ("February", "Feb."), ("August", "Aug."),
               ("September", "Sept."), ("October", "Oct."), ("November", "Nov."),
               ("December", "Dec."))
SHORT_MONTHS = ("March", "April", "May", "June", "July")
ITEMS = ("bread", "blankets", "water", "medicine", "clothing", "fuel", "tools",
         "batteries", "tents", "radios")
QUOTES = ("we will rebuild", "every family deserves a safe home",
          "the work is far from over", "this community shows up",
          "we owe our neighbors that much", "help is on the way")
TOPICS = ("recovery after spring flooding", "the opening of a new light rail line",
          "a contested school district budget", "a hospital expansion plan",
          "the response to a regional wildfire", "a downtown revitalization project",
          "a public library renovation", "a statewide heat emergency")


class LlmClient(Protocol):
    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class ApRule:
    id: str
    dimension: str
    rule_text: str
    positive_example: str
    error_pattern: str
    detector: str

    def detects(self, text: str) -> bool:
        return re.search(self.detector, text) is not None


@dataclass(frozen=True)
class StatementPair:
    flawed: str
    corrected: str
    dimension: str
    rationale: str
    rule_id: str = ""

    def __post_init__(self) -> None:
        if not self.flawed.strip() or not self.corrected.strip():
            raise ValueError("statement pair fields must be non-empty")
        if self.flawed == self.corrected:
            raise ValueError("flawed and corrected statements must differ")

    def to_dict(self) -> dict[str, Any]:
        return {"flawed": self.flawed, "corrected": self.corrected,
                "dimension": self.dimension, "rationale": self.rationale,
                "rule_id": self.rule_id}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> StatementPair:
        return cls(d["flawed"], d["corrected"], d["dimension"],
                   d.get("rationale", ""), d.get("rule_id", ""))


class RuleBankError(ValueError):
    """The AP rule bank file is malformed."""


class PairGenerationError(RuntimeError):
    """LLM-backed pair generation failed after retries."""


@dataclass(frozen=True)
class RuleBank:
    version: str
    dimensions: tuple[str, ...]
    rules: tuple[ApRule, ...]

    def by_dimension(self, dim: str) -> list[ApRule]:
        return [r for r in self.rules if r.dimension == dim]

    def rule(self, rule_id: str) -> ApRule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    def triggered(self, text: str) -> list[str]:
        return [r.id for r in self.rules if r.detects(text)]

    def rubric(self) -> str:
        lines = ["AP style rubric:"]
        for dim in self.dimensions:
            lines.append(f"{dim.capitalize()}:")
            for r in self.by_dimension(dim):
                lines.append(f"- {r.rule_text} Correct: {r.positive_example} "
                             f"Error: {r.error_pattern}")
        return "\n".join(lines)


def parse_rule_bank(data: dict[str, Any]) -> RuleBank:
    dims = tuple(data.get("dimensions", ()))
    if len(dims) != 10:
        raise RuleBankError(f"expected 10 dimensions, got {len(dims)}")
    nouns = "|".join(NOUNS)
    rules = []
    for raw in data.get("rules", ()):
        if raw["dimension"] not in dims:
            raise RuleBankError(f"rule {raw['id']} has unknown dimension")
        if raw["id"] not in INJECTORS:
            raise RuleBankError(f"rule {raw['id']} has no injector")
        detector = raw["detector"].replace("NOUNS", nouns)
        re.compile(detector)
        rules.append(ApRule(raw["id"], raw["dimension"], raw["rule_text"],
                            raw["positive_example"], raw["error_pattern"], detector))
    for dim in dims:
        if sum(r.dimension == dim for r in rules) < 2:
            raise RuleBankError(f"dimension {dim} needs at least two rules")
    return RuleBank(data.get("version", ""), dims, tuple(rules))


@lru_cache(maxsize=None)
def _default_bank() -> RuleBank:
    text = resources.files("covweave.data").joinpath("ap_rules.json").read_text("utf-8")
    return parse_rule_bank(json.loads(text))


def load_rule_bank(path: Optional[str] = None) -> RuleBank:
    if path is None:
        return _default_bank()
    with open(path, encoding="utf-8") as fh:
        return parse_rule_bank(json.load(fh))


# ---------------------------------------------------------------------------
# Injectors: each returns (corrected statement, flawed statement)
# ---------------------------------------------------------------------------

def _ctx(rng: random.Random) -> dict[str, str]:
    code = rng.choice(sorted(STATES))
    return {"person": rng.choice(PEOPLE), "org": rng.choice(ORGS),
            "town": rng.choice(TOWNS), "state": STATES[code][0],
            "item": rng.choice(ITEMS), "noun": rng.choice(NOUNS)}


def _pair(rng: random.Random, templates: tuple[str, ...], good: str, bad: str,
          **extra: str) -> tuple[str, str]:
    tpl = rng.choice(templates)
    ctx = {**_ctx(rng), **extra}
    return _cap(tpl.format(x=good, **ctx)), _cap(tpl.format(x=bad, **ctx))


def _cap(text: str) -> str:
    return text[:1].upper() + text[1:]


def _inj_spell_small(rng):
    n = rng.randint(2, 9)
    noun = rng.choice(NOUNS)
    return _pair(rng, ("{org} sent {x} to {town} after the storm.",
                       "Officials in {town} said {x} were still waiting for repairs."),
                 f"{SMALL[n - 1]} {noun}", f"{n} {noun}")


def _inj_numerals_ten_up(rng):
    n = rng.choice(sorted(TENS))
    noun = rng.choice(NOUNS)
    return _pair(rng, ("By Friday, {org} had counted {x} across {town}.",
                       "{person} said that {x} joined the effort in {town}."),
                 f"{n} {noun}", f"{TENS[n]} {noun}")


def _inj_word_percent(rng):
    n = rng.randint(3, 60)
    return _pair(rng, ("Ridership in {town} climbed {x} over the past year, {org} said.",
                       "{person} said costs for {item} rose {x} since the spring."),
                 f"{n} percent", f"{n}%")


def _inj_one_word(rng):
    n = rng.randint(3, 60)
    return _pair(rng, ("The budget for {item} in {town} fell {x} this year.",
                       "{org} reported that demand for {item} grew {x}."),
                 f"{n} percent", f"{n} per cent")


def _inj_no_zero_cents(rng):
    n = rng.choice((15, 25, 40, 75, 120, 250, 500))
    return _pair(rng, ("Residents of {town} will pay {x} for a monthly transit pass.",
                       "{org} said each household would receive {x} for {item}."),
                 f"${n}", f"${n}.00")


def _inj_millions(rng):
    n = rng.randint(2, 90)
    return _pair(rng, ("{org} approved {x} for repairs in {town}.",
                       "The project in {town} is expected to cost {x}, {person} said."),
                 f"${n} million", f"${n},000,000")


def _inj_dollar_sign(rng):
    n = rng.choice((30, 45, 80, 150, 300, 650))
    return _pair(rng, ("Volunteers in {town} raised {x} for {item} on the first day.",
                       "{person} donated {x} to {org} last week."),
                 f"${n}", f"{n} dollars")


def _inj_month_abbrev(rng):
    full, short = rng.choice(LONG_MONTHS)
    day = rng.randint(2, 28)
    return _pair(rng, ("{org} will vote on the plan {x}, {person} said.",
                       "Work on the new bridge in {town} is set to begin {x}."),
                 f"{short} {day}", f"{full} {day}")


def _suffix(day: int) -> str:
    if 10 <= day % 100 <= 20:
        return "th"
    return {1: "st", 2: "nd", 3: "rd"}.get(day % 10, "th")


def _inj_no_ordinal(rng):
    month = rng.choice(SHORT_MONTHS + tuple(s for _, s in LONG_MONTHS))
    day = rng.randint(1, 28)
    return _pair(rng, ("The shelter in {town} will close {x}, {org} announced.",
                       "{person} plans to present the findings {x} in {town}."),
                 f"{month} {day}", f"{month} {day}{_suffix(day)}")


def _inj_lowercase_ampm(rng):
    h = rng.randint(1, 11)
    suffix, bad = rng.choice((("a.m.", "AM"), ("p.m.", "PM"), ("p.m.", "pm")))
    return _pair(rng, ("The hearing in {town} begins at {x} on Tuesday.",
                       "{person} said crews would arrive by {x} on Monday."),
                 f"{h} {suffix}", f"{h} {bad}")


def _inj_no_zero_minutes(rng):
    h = rng.randint(1, 11)
    suffix = rng.choice(("a.m.", "p.m."))
    return _pair(rng, ("Doors at the {town} community center open at {x} daily.",
                       "{org} will brief reporters at {x} on Wednesday."),
                 f"{h} {suffix}", f"{h}:00 {suffix}")


def _inj_noon_midnight(rng):
    word = rng.choice(("noon", "midnight"))
    return _pair(rng, ("The curfew in {town} lifts at {x} on Sunday.",
                       "{person} said the polls would stay open until {x}."),
                 word, f"12 {word}")


def _inj_capitalize_before_name(rng):
    title = rng.choice(TITLES)
    person = rng.choice(PEOPLE)
    return _pair(rng, ("On Thursday, {x} toured the damaged neighborhoods of {town}.",
                       "The plan for {town} was backed by {x} after a long debate."),
                 f"{title.capitalize()} {person}", f"{title} {person}")


def _inj_lowercase_after_name(rng):
    title = rng.choice(TITLES)
    person = rng.choice(PEOPLE)
    town = rng.choice(TOWNS)
    return _pair(rng, ("{x}, said the recovery would take months.",
                       "The request came from {x}, who met with {org}."),
                 f"{person}, {title} of {town}", f"{person}, {title.capitalize()} of {town}")


def _inj_no_postal_codes(rng):
    code = rng.choice(sorted(STATES))
    town = rng.choice(TOWNS)
    return _pair(rng, ("Crews from {x}, arrived to help with {item}.",
                       "{person} grew up in {x}, before joining {org}."),
                 f"{town}, {STATES[code][0]}", f"{town}, {code}")


def _inj_no_state_abbrev(rng):
    code = rng.choice(sorted(STATES))
    town = rng.choice(TOWNS)
    full, abbrev = STATES[code]
    return _pair(rng, ("A second convoy left {x} early Saturday.",
                       "{person} moved the company to {x} last year."),
                 f"{town}, {full}", f"{town}, {abbrev}")


def _inj_no_serial_comma(rng):
    a, b, c = rng.sample(ITEMS, 3)
    return _pair(rng, ("The trucks carried {x} to {town}.",
                       "{org} is collecting {x} at the fairgrounds."),
                 f"{a}, {b} and {c}", f"{a}, {b}, and {c}")


def _inj_period_inside_quotes(rng):
    quote = rng.choice(QUOTES)
    cap = quote[0].upper() + quote[1:]
    tpl = rng.choice(('{person} told residents in {town}, "{x}',
                      'At the rally in {town}, {person} said, "{x}'))
    ctx = _ctx(rng)
    good = tpl.format(x=f'{cap}."', **ctx)
    bad = tpl.format(x=f'{cap}".', **ctx)
    return good, bad


def _inj_numeral_ages(rng):
    n = rng.randint(2, 9)
    return _pair(rng, ("The {x} boy from {town} was rescued by firefighters.",
                       "The {x} girl helped {org} hand out {item}."),
                 f"{n}-year-old", f"{SMALL[n - 1]}-year-old")


def _inj_no_aged(rng):
    age = rng.randint(19, 88)
    person = rng.choice(PEOPLE)
    return _pair(rng, ("{x}, has lived in {town} for decades.",
                       "Longtime resident {x}, organized the cleanup."),
                 f"{person}, {age}", f"{person}, aged {age}")


def _inj_abbrev_numbered(rng):
    num = rng.randint(12, 980)
    street = rng.choice(STREETS)
    full, short = rng.choice(STREET_KINDS)
    return _pair(rng, ("The new clinic at {x} opens next month in {town}.",
                       "{org} moved its office to {x} in {town}."),
                 f"{num} {street} {short}", f"{num} {street} {full}")


def _inj_spell_without_number(rng):
    street = rng.choice(STREETS)
    full, short = rng.choice(STREET_KINDS)
    return _pair(rng, ("Traffic on {x} in {town} was closed for repairs.",
                       "{person} led a march down {x} on Sunday."),
                 f"{street} {full}", f"{street} {short}")


INJECTORS: dict[str, Callable[[random.Random], tuple[str, str]]] = {
    "numbers.spell_small": _inj_spell_small,
    "numbers.numerals_ten_up": _inj_numerals_ten_up,
    "percentages.word_percent": _inj_word_percent,
    "percentages.one_word": _inj_one_word,
    "money.no_zero_cents": _inj_no_zero_cents,
    "money.millions": _inj_millions,
    "money.dollar_sign": _inj_dollar_sign,
    "dates.month_abbrev": _inj_month_abbrev,
    "dates.no_ordinal": _inj_no_ordinal,
    "times.lowercase_ampm": _inj_lowercase_ampm,
    "times.no_zero_minutes": _inj_no_zero_minutes,
    "times.noon_midnight": _inj_noon_midnight,
    "titles.capitalize_before_name": _inj_capitalize_before_name,
    "titles.lowercase_after_name": _inj_lowercase_after_name,
    "locations.no_postal_codes": _inj_no_postal_codes,
    "locations.no_state_abbrev": _inj_no_state_abbrev,
    "punctuation.no_serial_comma": _inj_no_serial_comma,
    "punctuation.period_inside_quotes": _inj_period_inside_quotes,
    "ages.numeral_ages": _inj_numeral_ages,
    "ages.no_aged": _inj_no_aged,
    "addresses.abbrev_numbered": _inj_abbrev_numbered,
    "addresses.spell_without_number": _inj_spell_without_number,
}


def make_pair(rule: ApRule, rng: random.Random) -> StatementPair:
    corrected, flawed = INJECTORS[rule.id](rng)
    return StatementPair(flawed, corrected, rule.dimension,
                         f"{rule.error_pattern} {rule.rule_text}", rule.id)


def gen_statement_pairs_template(seed: AttributeSeed, fact_count: int,
                                 bank: Optional[RuleBank] = None) -> list[StatementPair]:
    """Round-robin over dimensions; rules rotate within each dimension."""
    if fact_count < 0:
        raise ValueError("fact_count must be >= 0")
    bank = bank or load_rule_bank()
    rng = seeded_stream(seed.rng_seed, f"nw:pairs:{seed.tier.value}")
    offsets = {d: rng.randrange(len(bank.by_dimension(d))) for d in bank.dimensions}
    visits = {d: 0 for d in bank.dimensions}
    pairs = []
    for i in range(fact_count):
        dim = bank.dimensions[i % len(bank.dimensions)]
        rules = bank.by_dimension(dim)
        rule = rules[(offsets[dim] + visits[dim]) % len(rules)]
        visits[dim] += 1
        pairs.append(make_pair(rule, rng))
    return pairs


# ---------------------------------------------------------------------------
# LLM mode
# ---------------------------------------------------------------------------

LLM_RETRIES = 3


def _llm_prompt(topic: str, fact_count: int, bank: RuleBank) -> str:
    return (
        f"You are preparing test material for a news-writing exercise on {topic}.\n"
        f"Write {fact_count} factual statements for the story. For each one, also "
        "write a flawed version that breaks exactly one AP style rule from the "
        "rubric below. Spread the statements across all rubric dimensions.\n\n"
        f"{bank.rubric()}\n\nReturn only a JSON array of objects with keys "
        '"flawed", "corrected", "dimension" (one of: '
        f"{', '.join(bank.dimensions)}) and \"rationale\".")


def _extract_json_array(text: str) -> Any:
    start, end = text.find("["), text.rfind("]")
    if start < 0 or end <= start:
        raise ValueError("no JSON array in response")
    return json.loads(text[start:end + 1])


def validate_llm_pairs(items: Any, bank: RuleBank) -> tuple[list[StatementPair], list[str]]:
    pairs, problems = [], []
    if not isinstance(items, list):
        return [], ["response is not a list"]
    for i, item in enumerate(items):
        try:
            dim = str(item["dimension"]).strip().lower()
            if dim not in bank.dimensions:
                raise ValueError(f"unknown dimension {dim!r}")
            pairs.append(StatementPair(str(item["flawed"]).strip(),
                                       str(item["corrected"]).strip(), dim,
                                       str(item.get("rationale", "")).strip()))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"item {i}: {exc}")
    return pairs, problems


def gen_statement_pairs_llm(topic: str, fact_count: int, client: Optional[LlmClient],
                            bank: Optional[RuleBank] = None) -> list[StatementPair]:
    """Ask the model for pairs; malformed batches are retried up to 3 times."""
    if fact_count <= 0:
        return []
    if client is None:
        raise PairGenerationError("LLM mode needs a configured client")
    bank = bank or load_rule_bank()
    prompt = _llm_prompt(topic, fact_count, bank)
    problems: list[str] = []
    for attempt in range(LLM_RETRIES + 1):
        text = client.complete(prompt if attempt == 0 else
                               f"{prompt}\n\nThe previous answer was malformed "
                               f"({'; '.join(problems[:5])}). Try again.")
        try:
            items = _extract_json_array(text)
        except ValueError as exc:
            problems = [str(exc)]
            continue
        pairs, problems = validate_llm_pairs(items, bank)
        if not problems and len(pairs) >= fact_count:
            return pairs[:fact_count]
        if not problems:
            problems = [f"expected {fact_count} pairs, got {len(pairs)}"]
    raise PairGenerationError("malformed pairs after retries: " + "; ".join(problems))


# ---------------------------------------------------------------------------
# Task instance
# ---------------------------------------------------------------------------

TASK_TEXT = (
    "Write a news article in AP style on the topic below. The article must "
    "include every factual statement listed, each rewritten in its correct AP "
    "style form; the statements as given may contain style errors. Follow the "
    "AP style rubric throughout the article.")


def topic_brief(seed: AttributeSeed) -> str:
    rng = seeded_stream(seed.rng_seed, f"nw:topic:{seed.tier.value}")
    topic = rng.choice(TOPICS)
    town = rng.choice(TOWNS)
    return f"Topic: {topic} in {town}. Cover the key developments, the people " \
           f"involved, and what residents should expect next."


def gen_news(seed: AttributeSeed, mode: Optional[str] = None,
             client: Optional[LlmClient] = None) -> TaskInstance:
    if seed.task_kind != TaskKind.NW:
        raise ValueError("gen_news needs an NW seed")
    mode = mode or seed.knobs.get("mode", "template")
    fact_count = int(seed.knobs["fact_count"])
    bank = load_rule_bank()
    brief = topic_brief(seed)
    if mode == "template":
        pairs = gen_statement_pairs_template(seed, fact_count, bank)
    elif mode == "llm":
        pairs = gen_statement_pairs_llm(brief, fact_count, client, bank)
    else:
        raise ValueError(f"unknown NW mode {mode!r}")
    material = f"{brief}\n\n{bank.rubric()}"
    texts = [p.flawed for p in pairs]
    instruction = compose_instruction(TASK_TEXT, "Statements to include:", texts,
                                      seed.target_tokens)
    constraints = [{"text": p.flawed, "dimension": p.dimension} for p in pairs]
    verifiers = [p.to_dict() for p in pairs]
    meta = {"seed": seed.to_dict(), "calibration": CALIBRATION_VERSION,
            "mode": mode, "topic": brief, "rules_version": bank.version}
    return TaskInstance(instance_id(seed), seed.task_kind, seed.tier,
                        material=material, instruction=instruction,
                        constraints=constraints, verifiers=verifiers, meta=meta)
