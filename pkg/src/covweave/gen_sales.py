"""Sales report (SR) generation: biased transaction tables and CQ pairs.

The scenario fixes a target and prior-period sales that are jointly
compatible with the bias profile; after drawing raw transactions, a scaling
pass rescales amounts so the table total lands strictly inside the required
attainment and growth bands.  All analytics use :class:`decimal.Decimal`.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Optional

from .core import (CALIBRATION_VERSION, AttributeSeed, TaskInstance, TaskKind,
                   compose_instruction, instance_id, seeded_stream)

CSV_COLUMNS = ("id", "date", "rep", "product", "city", "customer_type", "amount")
CENT = Decimal("0.01")
HUNDRED = Decimal(100)

# Hard bands.  Sampling happens strictly inside them so rounding never
# pushes a total across a boundary.
TARGET_BANDS = {"exceed": (Decimal("1.05"), Decimal("1.30")),
                "meet": (Decimal("0.95"), Decimal("1.05")),
                "miss": (Decimal("0.65"), Decimal("0.95"))}
GROWTH_BANDS = {"positive": (Decimal("0.05"), Decimal("0.35")),
                "neutral": (Decimal("-0.02"), Decimal("0.02")),
                "negative": (Decimal("-0.30"), Decimal("-0.05"))}
_MARGIN = Decimal("0.004")

REGIONS = ["Northeast", "Southeast", "Midwest", "Pacific Northwest", "Southwest",
           "Mountain West", "Great Lakes", "Gulf Coast", "Mid-Atlantic", "New England"]
FIRST = ["Alice", "Bruno", "Chen", "Dana", "Elif", "Farid", "Grace", "Hiro", "Ivana",
         "Jamal", "Keiko", "Luis", "Maya", "Nikhil", "Olga", "Pedro", "Quinn", "Rania",
         "Sven", "Tara", "Umar", "Vera", "Wes", "Ximena", "Yusuf", "Zoe"]
LAST = ["Grant", "Okoye", "Larsen", "Moreau", "Tanaka", "Silva", "Novak", "Reyes",
        "Patel", "Fischer", "Kim", "Bianchi", "Haddad", "Walsh", "Ivanova", "Costa"]
PRODUCTS = ["Aurora Router", "Beacon Sensor", "Cobalt Laptop", "Delta Monitor",
            "Echo Headset", "Flux Keyboard", "Glide Mouse", "Harbor Dock",
            "Ion Battery", "Jade Tablet", "Kite Drone", "Lumen Lamp", "Mesa Printer",
            "Nova Phone", "Orbit Camera", "Pulse Watch", "Quartz Speaker",
            "Ridge Charger", "Summit Server", "Tidal Projector", "Umbra Router",
            "Vertex Scanner", "Willow Earbuds", "Zenith Console"]
CITIES = ["Springfield", "Riverton", "Fairview", "Lakeside", "Georgetown", "Ashland",
          "Clayton", "Milford", "Oakdale", "Salem", "Franklin", "Greenville",
          "Bristol", "Dover", "Hudson", "Kingston", "Marion", "Newport",
          "Arlington", "Burlington", "Camden", "Easton", "Lexington", "Winchester"]


@dataclass(frozen=True)
class SalesScenario:
    region: str
    fiscal_period: str
    period_start: dt.date
    period_end: dt.date
    currency: str
    sales_target: Decimal
    prior_period_sales: Decimal
    reps: tuple[str, ...]
    products: tuple[str, ...]
    cities: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.sales_target <= 0 or self.prior_period_sales <= 0:
            raise ValueError("target and prior-period sales must be positive")
        if not (self.reps and self.products and self.cities):
            raise ValueError("scenario lists must be non-empty")

    def to_dict(self) -> dict[str, Any]:
        return {"region": self.region, "fiscal_period": self.fiscal_period,
                "period_start": self.period_start.isoformat(),
                "period_end": self.period_end.isoformat(),
                "currency": self.currency,
                "sales_target": str(self.sales_target),
                "prior_period_sales": str(self.prior_period_sales),
                "reps": list(self.reps), "products": list(self.products),
                "cities": list(self.cities)}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SalesScenario:
        return cls(d["region"], d["fiscal_period"],
                   dt.date.fromisoformat(d["period_start"]),
                   dt.date.fromisoformat(d["period_end"]), d["currency"],
                   Decimal(d["sales_target"]), Decimal(d["prior_period_sales"]),
                   tuple(d["reps"]), tuple(d["products"]), tuple(d["cities"]))


@dataclass(frozen=True)
class BiasProfile:
    target_achievement: str
    growth: str
    anomalous_rep: Optional[str] = None
    anomalous_product: Optional[str] = None
    new_customer_rate: float = 0.3

    def __post_init__(self) -> None:
        if self.target_achievement not in TARGET_BANDS:
            raise ValueError(f"unknown target_achievement {self.target_achievement!r}")
        if self.growth not in GROWTH_BANDS:
            raise ValueError(f"unknown growth {self.growth!r}")
        if not 0.0 <= self.new_customer_rate <= 1.0:
            raise ValueError("new_customer_rate must lie in [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        return {"target_achievement": self.target_achievement, "growth": self.growth,
                "anomalous_rep": self.anomalous_rep,
                "anomalous_product": self.anomalous_product,
                "new_customer_rate": self.new_customer_rate}


@dataclass(frozen=True)
class Transaction:
    id: str
    date: dt.date
    rep: str
    product: str
    city: str
    customer_type: str
    amount: Decimal

    def row(self) -> list[str]:
        return [self.id, self.date.isoformat(), self.rep, self.product, self.city,
                self.customer_type, f"{self.amount:.2f}"]


@dataclass(frozen=True)
class ConclusionQuery:
    conclusion: str
    query: str
    answer: str
    value: str
    kind: str  # amount | percent | count | name
    facet: str
    key: str

    def to_dict(self) -> dict[str, Any]:
        return {"conclusion": self.conclusion, "query": self.query,
                "answer": self.answer, "value": self.value, "kind": self.kind,
                "facet": self.facet, "key": self.key}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ConclusionQuery:
        return cls(d["conclusion"], d["query"], d["answer"], d["value"], d["kind"],
                   d["facet"], d["key"])


# ---------------------------------------------------------------------------
# Scenario and bias
# ---------------------------------------------------------------------------

def _uniform_decimal(rng: random.Random, lo: Decimal, hi: Decimal) -> Decimal:
    frac = Decimal(rng.randrange(0, 10_001)) / Decimal(10_000)
    return lo + (hi - lo) * frac


def _names(rng: random.Random, n: int) -> tuple[str, ...]:
    pool = [f"{f} {l}" for f in FIRST for l in LAST]
    return tuple(rng.sample(pool, n))


def _pick(rng: random.Random, pool: list[str], n: int) -> tuple[str, ...]:
    if n > len(pool):
        raise ValueError(f"at most {len(pool)} names available, asked for {n}")
    return tuple(rng.sample(pool, n))


def make_bias(rng: random.Random, knobs: dict[str, Any],
              reps: tuple[str, ...], products: tuple[str, ...]) -> BiasProfile:
    target = knobs.get("target_achievement", "auto")
    growth = knobs.get("growth", "auto")
    if target == "auto":
        target = rng.choice(sorted(TARGET_BANDS))
    if growth == "auto":
        growth = rng.choice(sorted(GROWTH_BANDS))
    anomalous_rep = rng.choice(reps) if len(reps) > 2 and rng.random() < 0.6 else None
    anomalous_product = rng.choice(products) if len(products) > 2 and \
        rng.random() < 0.5 else None
    rate = round(rng.uniform(0.15, 0.55), 2)
    return BiasProfile(target, growth, anomalous_rep, anomalous_product, rate)


def make_scenario(rng: random.Random, bias_target: str, bias_growth: str,
                  n_reps: int, n_products: int, n_cities: int,
                  record_count: int) -> SalesScenario:
    """Scenario whose target/prior admit a total satisfying both bands."""
    year = rng.randint(2019, 2025)
    quarter = rng.randint(1, 4)
    start = dt.date(year, 3 * quarter - 2, 1)
    end = (dt.date(year + 1, 1, 1) if quarter == 4
           else dt.date(year, 3 * quarter + 1, 1)) - dt.timedelta(days=1)
    target = Decimal(rng.randrange(40, 400)) * Decimal(250) * Decimal(max(1, record_count)) \
        / Decimal(10)
    target = target.quantize(Decimal("1000"), rounding=ROUND_HALF_UP) or Decimal(1000)
    a_lo, a_hi = TARGET_BANDS[bias_target]
    g_lo, g_hi = GROWTH_BANDS[bias_growth]
    ratio = _uniform_decimal(rng, a_lo + 2 * _MARGIN, a_hi - 2 * _MARGIN)
    growth = _uniform_decimal(rng, g_lo + 2 * _MARGIN, g_hi - 2 * _MARGIN)
    prior = (target * ratio / (1 + growth)).quantize(CENT, rounding=ROUND_HALF_UP)
    return SalesScenario(
        region=rng.choice(REGIONS), fiscal_period=f"Q{quarter} {year}",
        period_start=start, period_end=end, currency="USD", sales_target=target,
        prior_period_sales=prior, reps=_names(rng, n_reps),
        products=_pick(rng, PRODUCTS, n_products), cities=_pick(rng, CITIES, n_cities))


def total_band(scenario: SalesScenario, bias: BiasProfile) -> tuple[Decimal, Decimal]:
    """Totals (inclusive, with safety margin) satisfying both hard biases."""
    a_lo, a_hi = TARGET_BANDS[bias.target_achievement]
    g_lo, g_hi = GROWTH_BANDS[bias.growth]
    t, p = scenario.sales_target, scenario.prior_period_sales
    lo = max(t * (a_lo + _MARGIN), p * (1 + g_lo + _MARGIN))
    hi = min(t * (a_hi - _MARGIN), p * (1 + g_hi - _MARGIN))
    return lo.quantize(CENT, rounding="ROUND_CEILING"), hi.quantize(CENT, rounding="ROUND_FLOOR")


# ---------------------------------------------------------------------------
# Transactions
# ---------------------------------------------------------------------------

def gen_transactions(scenario: SalesScenario, bias: BiasProfile, record_count: int,
                     rng: random.Random) -> list[Transaction]:
    """Draw biased transactions, then rescale so every hard bias holds."""
    if record_count < 1:
        raise ValueError("record_count must be >= 1")
    lo, hi = total_band(scenario, bias)
    if lo > hi:
        raise ValueError("bias profile unsatisfiable for this scenario")
    days = (scenario.period_end - scenario.period_start).days
    price = {p: Decimal(rng.randrange(40, 2400)) for p in scenario.products}
    rep_weights = [0.35 if r == bias.anomalous_rep else 1.0 for r in scenario.reps]
    prod_weights = [2.5 if p == bias.anomalous_product else 1.0 for p in scenario.products]
    city_weights = [rng.uniform(0.5, 2.0) for _ in scenario.cities]
    raw = []
    for i in range(record_count):
        rep = rng.choices(scenario.reps, rep_weights)[0]
        product = rng.choices(scenario.products, prod_weights)[0]
        city = rng.choices(scenario.cities, city_weights)[0]
        ctype = "new" if rng.random() < bias.new_customer_rate else "existing"
        qty = Decimal(rng.randint(1, 12))
        factor = Decimal(rng.randint(80, 120)) / HUNDRED
        if rep == bias.anomalous_rep:
            factor *= Decimal("0.6")
        amount = price[product] * qty * factor
        date = scenario.period_start + dt.timedelta(days=rng.randint(0, days))
        raw.append([f"T{i + 1:05d}", date, rep, product, city, ctype, amount])
    raw.sort(key=lambda r: (r[1], r[0]))
    for i, r in enumerate(raw):
        r[0] = f"T{i + 1:05d}"
    # Scaling pass: pick the final total inside the admissible band.
    goal = _uniform_decimal(rng, lo, hi).quantize(CENT, rounding=ROUND_HALF_UP)
    goal = min(max(goal, lo), hi)
    raw_total = sum(r[6] for r in raw)
    scaled = [max(CENT, (r[6] * goal / raw_total).quantize(CENT, rounding=ROUND_HALF_UP))
              for r in raw]
    biggest = max(range(len(scaled)), key=lambda i: (scaled[i], -i))
    scaled[biggest] += goal - sum(scaled)
    if scaled[biggest] <= 0:  # pragma: no cover - needs absurd skew
        raise ValueError("scaling pass produced a non-positive amount")
    return [Transaction(r[0], r[1], r[2], r[3], r[4], r[5], a)
            for r, a in zip(raw, scaled)]


def render_csv(transactions: list[Transaction]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for t in transactions:
        writer.writerow(t.row())
    return buf.getvalue()


def parse_csv(text: str) -> list[Transaction]:
    reader = csv.DictReader(io.StringIO(text))
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header {reader.fieldnames}")
    return [Transaction(r["id"], dt.date.fromisoformat(r["date"]), r["rep"],
                        r["product"], r["city"], r["customer_type"],
                        Decimal(r["amount"])) for r in reader]


# ---------------------------------------------------------------------------
# Analytics
# ---------------------------------------------------------------------------

def pct(part: Decimal, whole: Decimal) -> Decimal:
    return part / whole * HUNDRED if whole else Decimal(0)


def q2(x: Decimal) -> Decimal:
    return x.quantize(CENT, rounding=ROUND_HALF_UP)


@dataclass
class SalesSummary:
    total: Decimal
    count: int
    target: Decimal
    prior: Decimal
    attainment_pct: Decimal
    growth_pct: Decimal
    average: Decimal
    rep_totals: dict[str, Decimal]
    rep_counts: dict[str, int]
    rep_new_counts: dict[str, int]
    product_totals: dict[str, Decimal]
    product_counts: dict[str, int]
    product_shares: dict[str, Decimal]
    city_totals: dict[str, Decimal]
    city_counts: dict[str, int]
    segment_totals: dict[str, Decimal]
    segment_counts: dict[str, int]
    scenario: SalesScenario = field(repr=False)


def analyze(transactions: list[Transaction], scenario: SalesScenario) -> SalesSummary:
    if not transactions:
        raise ValueError("empty transaction table")
    total = sum((t.amount for t in transactions), Decimal(0))
    rep_totals: dict[str, Decimal] = {r: Decimal(0) for r in scenario.reps}
    rep_counts: Counter = Counter({r: 0 for r in scenario.reps})
    rep_new: Counter = Counter({r: 0 for r in scenario.reps})
    prod_totals = {p: Decimal(0) for p in scenario.products}
    prod_counts: Counter = Counter({p: 0 for p in scenario.products})
    city_totals = {c: Decimal(0) for c in scenario.cities}
    city_counts: Counter = Counter({c: 0 for c in scenario.cities})
    seg_totals: dict[str, Decimal] = defaultdict(Decimal)
    seg_counts: Counter = Counter()
    for t in transactions:
        rep_totals[t.rep] += t.amount
        rep_counts[t.rep] += 1
        rep_new[t.rep] += t.customer_type == "new"
        prod_totals[t.product] += t.amount
        prod_counts[t.product] += 1
        city_totals[t.city] += t.amount
        city_counts[t.city] += 1
        seg_totals[t.customer_type] += t.amount
        seg_counts[t.customer_type] += 1
    for seg in ("new", "existing"):
        seg_totals.setdefault(seg, Decimal(0))
        seg_counts.setdefault(seg, 0)
    return SalesSummary(
        total=total, count=len(transactions), target=scenario.sales_target,
        prior=scenario.prior_period_sales,
        attainment_pct=pct(total, scenario.sales_target),
        growth_pct=pct(total - scenario.prior_period_sales, scenario.prior_period_sales),
        average=total / len(transactions),
        rep_totals=rep_totals, rep_counts=dict(rep_counts), rep_new_counts=dict(rep_new),
        product_totals=prod_totals, product_counts=dict(prod_counts),
        product_shares={p: pct(v, total) for p, v in prod_totals.items()},
        city_totals=city_totals, city_counts=dict(city_counts),
        segment_totals=dict(seg_totals), segment_counts=dict(seg_counts),
        scenario=scenario)


# ---------------------------------------------------------------------------
# Conclusion-query pairs
# ---------------------------------------------------------------------------

FACETS = ("overall", "rep", "product", "geo", "segment")


def fmt_amount(x: Decimal) -> str:
    return f"${q2(x):,.2f}"


def fmt_pct(x: Decimal) -> str:
    return f"{q2(x):.2f}%"


def _cq(conclusion: str, query: str, value: Any, kind: str, facet: str,
        key: str) -> ConclusionQuery:
    if kind == "amount":
        answer, raw = fmt_amount(value), str(q2(value))
    elif kind == "percent":
        answer, raw = fmt_pct(value), str(q2(value))
    elif kind == "count":
        answer, raw = str(int(value)), str(int(value))
    else:
        answer, raw = str(value), str(value)
    return ConclusionQuery(conclusion, query, answer, raw, kind, facet, key)


def _unique_extreme(values: dict[str, Any], highest: bool) -> Optional[str]:
    if not values:
        return None
    best = max(values.values()) if highest else min(values.values())
    names = [k for k, v in values.items() if v == best]
    return names[0] if len(names) == 1 else None


def _candidates(s: SalesSummary) -> dict[str, list[ConclusionQuery]]:
    sc = s.scenario
    out: dict[str, list[ConclusionQuery]] = {f: [] for f in FACETS}
    period = sc.fiscal_period
    verb = ("exceeded" if s.attainment_pct >= 105 else
            "missed" if s.attainment_pct <= 95 else "met")
    trend = ("grew" if s.growth_pct >= 5 else "declined" if s.growth_pct <= -5
             else "stayed roughly flat")
    gap = s.total - s.target
    ov = out["overall"]
    ov.append(_cq(f"The {sc.region} team {verb} its sales target of "
                  f"{fmt_amount(s.target)} in {period}.",
                  "What percentage of the sales target was achieved?",
                  s.attainment_pct, "percent", "overall", "attainment_pct"))
    ov.append(_cq(f"Sales {trend} compared with the prior period's "
                  f"{fmt_amount(s.prior)}.",
                  "By what percentage did total sales change versus the prior period?",
                  s.growth_pct, "percent", "overall", "growth_pct"))
    ov.append(_cq(f"The region booked its full quarterly revenue in {period}.",
                  "What were the total sales for the period?",
                  s.total, "amount", "overall", "total"))
    ov.append(_cq("Activity volume is measured by the number of deals closed.",
                  "How many transactions were recorded in the period?",
                  s.count, "count", "overall", "count"))
    ov.append(_cq("Deal size indicates how much each sale contributed on average.",
                  "What was the average transaction value?",
                  s.average, "amount", "overall", "average"))
    ov.append(_cq(f"The distance to target shows how far results were from plan "
                  f"({'above' if gap >= 0 else 'below'} target).",
                  "What is the absolute difference between total sales and the target?",
                  abs(gap), "amount", "overall", "target_gap"))
    for facet, totals, label in (("rep", s.rep_totals, "sales representative"),
                                 ("product", s.product_totals, "product"),
                                 ("geo", s.city_totals, "city")):
        top = _unique_extreme(totals, True)
        bottom = _unique_extreme(totals, False)
        if top:
            out[facet].append(_cq(
                f"One {label} clearly led the period in revenue.",
                f"Which {label} generated the highest total sales?",
                top, "name", facet, f"{facet}_top"))
        if bottom:
            out[facet].append(_cq(
                f"One {label} trailed all others in revenue.",
                f"Which {label} generated the lowest total sales?",
                bottom, "name", facet, f"{facet}_bottom"))
    for rep in sc.reps:
        total, n = s.rep_totals[rep], s.rep_counts[rep]
        out["rep"].append(_cq(f"{rep} contributed to the team's results.",
                              f"What were the total sales of {rep}?",
                              total, "amount", "rep", f"rep_total:{rep}"))
        out["rep"].append(_cq(f"{rep} was active throughout the period.",
                              f"How many transactions did {rep} close?",
                              n, "count", "rep", f"rep_count:{rep}"))
        out["rep"].append(_cq(f"{rep} holds a share of team revenue.",
                              f"What percentage of total sales came from {rep}?",
                              pct(total, s.total), "percent", "rep", f"rep_share:{rep}"))
        if n:
            out["rep"].append(_cq(f"{rep}'s deal size can be compared with the team.",
                                  f"What was the average transaction value for {rep}?",
                                  total / n, "amount", "rep", f"rep_avg:{rep}"))
        out["rep"].append(_cq(f"{rep} brought in new customers.",
                              f"How many transactions did {rep} close with new customers?",
                              s.rep_new_counts[rep], "count", "rep", f"rep_new:{rep}"))
    for prod in sc.products:
        total, n = s.product_totals[prod], s.product_counts[prod]
        out["product"].append(_cq(f"The {prod} line contributed revenue.",
                                  f"What was the total revenue from the {prod}?",
                                  total, "amount", "product", f"product_total:{prod}"))
        out["product"].append(_cq(f"The {prod} holds a share of the product mix.",
                                  f"What percentage of total sales came from the {prod}?",
                                  s.product_shares[prod], "percent", "product",
                                  f"product_share:{prod}"))
        out["product"].append(_cq(f"The {prod} sold in several deals.",
                                  f"How many transactions involved the {prod}?",
                                  n, "count", "product", f"product_count:{prod}"))
        if n:
            out["product"].append(_cq(f"The {prod} has a typical deal size.",
                                      f"What was the average transaction value for "
                                      f"the {prod}?", total / n, "amount", "product",
                                      f"product_avg:{prod}"))
    for city in sc.cities:
        total, n = s.city_totals[city], s.city_counts[city]
        out["geo"].append(_cq(f"{city} is part of the regional footprint.",
                              f"What were the total sales in {city}?",
                              total, "amount", "geo", f"city_total:{city}"))
        out["geo"].append(_cq(f"{city} accounts for part of regional revenue.",
                              f"What percentage of total sales came from {city}?",
                              pct(total, s.total), "percent", "geo", f"city_share:{city}"))
        out["geo"].append(_cq(f"{city} generated a number of deals.",
                              f"How many transactions took place in {city}?",
                              n, "count", "geo", f"city_count:{city}"))
    seg = out["segment"]
    for ctype in ("new", "existing"):
        total, n = s.segment_totals[ctype], s.segment_counts[ctype]
        seg.append(_cq(f"Sales to {ctype} customers form a distinct segment.",
                       f"How many transactions were with {ctype} customers?",
                       n, "count", "segment", f"segment_count:{ctype}"))
        seg.append(_cq(f"Revenue from {ctype} customers is tracked separately.",
                       f"What were the total sales to {ctype} customers?",
                       total, "amount", "segment", f"segment_total:{ctype}"))
        seg.append(_cq(f"The {ctype}-customer segment has its own weight in revenue.",
                       f"What percentage of total sales came from {ctype} customers?",
                       pct(total, s.total), "percent", "segment", f"segment_share:{ctype}"))
        if n:
            seg.append(_cq(f"Deal sizes differ between customer segments.",
                           f"What was the average transaction value with {ctype} "
                           f"customers?", total / n, "amount", "segment",
                           f"segment_avg:{ctype}"))
    return out


def derive_cq_pairs(summary: SalesSummary, target_count: int) -> list[ConclusionQuery]:
    """Overall facet first (attainment leads), then round-robin over facets."""
    if target_count < 1:
        return []
    pools = _candidates(summary)
    available = sum(len(v) for v in pools.values())
    if target_count > available:
        raise ValueError(f"target_count too large: {target_count} > {available}")
    chosen = list(pools["overall"][:target_count])
    queues = {f: list(pools[f]) for f in FACETS[1:]}
    while len(chosen) < target_count:
        for facet in FACETS[1:]:
            if queues[facet] and len(chosen) < target_count:
                chosen.append(queues[facet].pop(0))
    return chosen


# ---------------------------------------------------------------------------
# Task instance
# ---------------------------------------------------------------------------

def render_report(pairs: list[ConclusionQuery], scenario: SalesScenario) -> str:
    """Gold report: every query answered, with its supporting conclusion."""
    lines = [f"Sales report for the {scenario.region} region, {scenario.fiscal_period}",
             ""]
    for i, cq in enumerate(pairs, 1):
        lines.append(f"{i}. {cq.query} Answer: {cq.answer}. {cq.conclusion}")
    return "\n".join(lines) + "\n"


def gen_sales(seed: AttributeSeed) -> TaskInstance:
    if seed.task_kind != TaskKind.SR:
        raise ValueError("gen_sales needs an SR seed")
    knobs = dict(seed.knobs)
    rng = seeded_stream(seed.rng_seed, f"sr:{seed.tier.value}")
    record_count = int(knobs["record_count"])
    target_count = int(knobs["target_count"])
    reps = int(knobs["rep_count"])
    products = int(knobs["product_count"])
    cities = int(knobs["city_count"])
    bias_rng = seeded_stream(seed.rng_seed, f"sr:bias:{seed.tier.value}")
    target = knobs.get("target_achievement", "auto")
    growth = knobs.get("growth", "auto")
    target = bias_rng.choice(sorted(TARGET_BANDS)) if target == "auto" else target
    growth = bias_rng.choice(sorted(GROWTH_BANDS)) if growth == "auto" else growth
    scenario = make_scenario(rng, target, growth, reps, products, cities, record_count)
    bias = make_bias(rng, {"target_achievement": target, "growth": growth},
                     scenario.reps, scenario.products)
    transactions = gen_transactions(scenario, bias, record_count, rng)
    summary = analyze(transactions, scenario)
    pairs = derive_cq_pairs(summary, target_count)
    csv_text = render_csv(transactions)
    material = (
        f"Region: {scenario.region}\nFiscal period: {scenario.fiscal_period} "
        f"({scenario.period_start.isoformat()} to {scenario.period_end.isoformat()})\n"
        f"Currency: {scenario.currency}\n"
        f"Sales target: {fmt_amount(scenario.sales_target)}\n"
        f"Prior period sales: {fmt_amount(scenario.prior_period_sales)}\n\n"
        f"Transactions (CSV):\n{csv_text}")
    task = ("Write a sales analysis report for this period based on the transaction "
            "table. The report must answer every question below explicitly, giving "
            "amounts in dollars with two decimals, percentages with two decimals, and "
            "exact counts and names. Support each answer with a short interpretation.")
    texts = [cq.query for cq in pairs]
    instruction = compose_instruction(task, "Questions to answer:", texts,
                                      seed.target_tokens)
    constraints = [{"text": cq.query, "facet": cq.facet, "key": cq.key} for cq in pairs]
    verifiers = [cq.to_dict() for cq in pairs]
    meta = {"seed": seed.to_dict(), "calibration": CALIBRATION_VERSION,
            "scenario": scenario.to_dict(), "bias": bias.to_dict(),
            "csv": csv_text, "gold_report": render_report(pairs, scenario)}
    return TaskInstance(instance_id(seed), seed.task_kind, seed.tier,
                        material=material, instruction=instruction,
                        constraints=constraints, verifiers=verifiers, meta=meta)
