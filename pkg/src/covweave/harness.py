"""Run orchestration: generate -> run -> score -> report, plus stability study.

A run directory holds ``dataset.jsonl``, ``results.jsonl``, ``scores.jsonl``
and ``report.md``; instance ids join the three JSONL files.
"""

from __future__ import annotations

import json
import logging
import random
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional, Sequence

from .core import (TASK_ORDER, TIER_ORDER, AttributeSeed, GenerationResult,
                   TaskInstance, TaskKind, TaskScore, Tier, derive_seed)
from .runner import DEFAULT_PARALLELISM, ModelEndpoint, Responder, run_batch
from .scoring import Judge, MockJudge, ReportTable, aggregate, score_instance

log = logging.getLogger(__name__)

DATASET_FILE = "dataset.jsonl"
RESULTS_FILE = "results.jsonl"
SCORES_FILE = "scores.jsonl"
REPORT_FILE = "report.md"
STABILITY_SIZES = tuple(range(20, 201, 20))
STABILITY_RESAMPLES = 50


def _generators() -> dict[TaskKind, Callable[[AttributeSeed], TaskInstance]]:
    from .gen_code import gen_code_fixing
    from .gen_kg import gen_biog
    from .gen_news import gen_news
    from .gen_rule import gen_fsm, gen_kv, gen_reorder
    from .gen_sales import gen_sales

    return {TaskKind.CF: gen_code_fixing, TaskKind.BioG: gen_biog,
            TaskKind.SR: gen_sales, TaskKind.NW: gen_news, TaskKind.KVG: gen_kv,
            TaskKind.SMS: gen_fsm, TaskKind.PR: gen_reorder}


def generate_instance(seed: AttributeSeed, relation_map: Any = None) -> TaskInstance:
    """``relation_map`` (a loaded RelationMap) overrides the shipped BioG tables."""
    if seed.task_kind == TaskKind.BioG and relation_map is not None:
        from .gen_kg import gen_biog

        return gen_biog(seed, relation_map)
    return _generators()[seed.task_kind](seed)


class GenerationError(RuntimeError):
    def __init__(self, seed: AttributeSeed, cause: Exception) -> None:
        super().__init__(f"generation failed for seed {json.dumps(seed.to_dict())}: "
                         f"{type(cause).__name__}: {cause}")
        self.seed = seed


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RunConfig:
    tasks: list[TaskKind] = field(default_factory=lambda: list(TASK_ORDER))
    tiers: list[Tier] = field(default_factory=lambda: list(TIER_ORDER))
    samples_per_variant: int = 200
    base_seed: int = 0
    knobs: dict[str, dict[str, Any]] = field(default_factory=dict)
    endpoint: Optional[dict[str, Any]] = None
    judge: Optional[dict[str, Any]] = None
    judge_replay: Optional[str] = None
    parallelism: int = DEFAULT_PARALLELISM
    output_dir: str = "runs/default"
    execute: bool = True
    relation_map: Optional[str] = None

    def __post_init__(self) -> None:
        self.tasks = [TaskKind(t) for t in self.tasks]
        self.tiers = [Tier(t) for t in self.tiers]
        if not self.tasks or not self.tiers:
            raise ValueError("tasks and tiers must be non-empty")
        if self.samples_per_variant < 1:
            raise ValueError("samples_per_variant must be >= 1")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        unknown = set(self.knobs) - {k.value for k in TaskKind}
        if unknown:
            raise ValueError(f"knob overrides for unknown tasks: {sorted(unknown)}")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        text = Path(path).read_text(encoding="utf-8")
        if str(path).endswith((".yaml", ".yml")):
            import yaml

            data = yaml.safe_load(text) or {}
        else:
            data = json.loads(text)
        return cls.from_dict(data)

    def to_dict(self) -> dict[str, Any]:
        return {"tasks": [t.value for t in self.tasks],
                "tiers": [t.value for t in self.tiers],
                "samples_per_variant": self.samples_per_variant,
                "base_seed": self.base_seed, "knobs": self.knobs,
                "endpoint": self.endpoint, "judge": self.judge,
                "judge_replay": self.judge_replay, "parallelism": self.parallelism,
                "output_dir": self.output_dir, "execute": self.execute,
                "relation_map": self.relation_map}

    def seeds(self) -> Iterator[AttributeSeed]:
        for kind in self.tasks:
            for tier in self.tiers:
                for index in range(self.samples_per_variant):
                    yield AttributeSeed(kind, tier,
                                        derive_seed(self.base_seed, kind, tier, index),
                                        dict(self.knobs.get(kind.value, {})))


# ---------------------------------------------------------------------------
# JSONL helpers
# ---------------------------------------------------------------------------

def dumps(record: dict[str, Any]) -> str:
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    p = Path(path)
    if not p.exists():
        return []
    out = []
    for n, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            out.append(json.loads(line))
        except json.JSONDecodeError as exc:
            # A torn final line from an interrupted run is dropped.
            log.warning("%s:%d: skipping malformed record (%s)", p, n, exc)
    return out


def write_jsonl(path: str | Path, records: Iterable[dict[str, Any]]) -> int:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    n = 0
    with p.open("w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(dumps(rec) + "\n")
            n += 1
    return n


def load_dataset(path: str | Path) -> list[TaskInstance]:
    return [TaskInstance.from_dict(r) for r in read_jsonl(path)]


def load_results(path: str | Path) -> list[GenerationResult]:
    return [GenerationResult.from_dict(r) for r in read_jsonl(path)]


def load_scores(path: str | Path) -> list[TaskScore]:
    return [TaskScore.from_dict(r) for r in read_jsonl(path)]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_generate(config: RunConfig, path: Optional[str | Path] = None) -> Path:
    """One JSONL record per instance, deterministic in the config."""
    out = Path(path) if path else Path(config.output_dir) / DATASET_FILE
    rmap = None
    if config.relation_map:
        from .gen_kg import load_relation_map

        rmap = load_relation_map(config.relation_map)

    def records() -> Iterator[dict[str, Any]]:
        for seed in config.seeds():
            try:
                inst = generate_instance(seed, rmap)
            except Exception as exc:
                raise GenerationError(seed, exc) from exc
            yield inst.to_dict()

    write_jsonl(out, records())
    return out


def cmd_run(dataset: str | Path, responder: Responder, results: str | Path,
            endpoint: Optional[ModelEndpoint] = None,
            parallelism: int = DEFAULT_PARALLELISM) -> Path:
    """Generate outputs for instances not yet in ``results`` (resumable)."""
    instances = load_dataset(dataset)
    out = Path(results)
    existing = load_results(out)
    done = {r.instance_id for r in existing}
    pending = [i for i in instances if i.id not in done]
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.exists() and not out.read_bytes().endswith(b"\n") and out.stat().st_size:
        # Drop a torn final line so appended records start on a fresh line.
        write_jsonl(out, (r.to_dict() for r in existing))
    if pending:
        with out.open("a", encoding="utf-8", newline="\n") as fh:
            def append(res: GenerationResult) -> None:
                fh.write(dumps(res.to_dict()) + "\n")
                fh.flush()

            run_batch(pending, responder, endpoint, parallelism, on_result=append)
    # Canonical order (dataset order) once complete.
    by_id = {r.instance_id: r for r in load_results(out)}
    if all(i.id in by_id for i in instances):
        write_jsonl(out, (by_id[i.id].to_dict() for i in instances))
    return out


def cmd_score(dataset: str | Path, results: str | Path, scores: str | Path,
              judge: Optional[Judge] = None, execute: bool = True,
              report: Optional[str | Path] = None,
              fabrication_probe: bool = False) -> ReportTable:
    instances = load_dataset(dataset)
    by_id = {r.instance_id: r for r in load_results(results)}
    judge = judge or MockJudge()
    missing = 0
    out: list[TaskScore] = []
    for inst in instances:
        res = by_id.get(inst.id)
        missing += res is None
        out.append(score_instance(inst, res, judge, execute=execute,
                                  fabrication_probe=fabrication_probe))
    write_jsonl(scores, (s.to_dict() for s in out))
    notes = []
    if any(s.sub("runnability") == "skipped" for s in out if s.task_kind == TaskKind.CF):
        notes.append("CF runnability skipped (no execution); excluded from CF finals.")
    table = aggregate(out, missing=missing, notes=notes)
    if report:
        Path(report).write_text(table.to_markdown(), encoding="utf-8")
    return table


def cmd_report(scores: str | Path, markdown: bool = True) -> str:
    table = aggregate(load_scores(scores))
    return table.to_markdown() if markdown else table.to_text()


# ---------------------------------------------------------------------------
# Stability
# ---------------------------------------------------------------------------

@dataclass
class StabilityReport:
    sizes: list[int]
    resamples: int
    rows: dict[str, dict[int, tuple[float, float]]]  # name -> size -> (mean, std)

    def to_dict(self) -> dict[str, Any]:
        return {"sizes": self.sizes, "resamples": self.resamples,
                "rows": {name: {str(s): list(v) for s, v in row.items()}
                         for name, row in self.rows.items()}}

    def to_markdown(self) -> str:
        header = "| Task | " + " | ".join(str(s) for s in self.sizes) + " |"
        lines = [header, "|" + "---|" * (len(self.sizes) + 1)]
        for name, row in self.rows.items():
            cells = [f"{row[s][0] * 100:.2f}±{row[s][1] * 100:.2f}" for s in self.sizes]
            lines.append(f"| {name} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def cmd_stability(scores: Sequence[TaskScore], sizes: Sequence[int] = STABILITY_SIZES,
                  resamples: int = STABILITY_RESAMPLES, seed: int = 0) -> StabilityReport:
    """Bootstrap (subsampling without replacement) mean±std per task and overall.

    A subsample of size s draws s instances per task; the overall value of a
    subsample is the mean of its task means.
    """
    if resamples < 1 or not sizes:
        raise ValueError("need at least one size and one resample")
    by_task: dict[str, list[float]] = {}
    for s in scores:
        by_task.setdefault(s.task_kind.value, []).append(s.final)
    if not by_task:
        raise ValueError("no scores")
    need = max(sizes)
    short = {k: len(v) for k, v in by_task.items() if len(v) < need}
    if short:
        raise ValueError(f"insufficient samples for size {need}: " +
                         ", ".join(f"{k} has {n}" for k, n in sorted(short.items())))
    rng = random.Random(seed)
    tasks = [k.value for k in TASK_ORDER if k.value in by_task]
    rows: dict[str, dict[int, tuple[float, float]]] = {t: {} for t in tasks}
    rows["Overall"] = {}
    for size in sizes:
        task_means: dict[str, list[float]] = {t: [] for t in tasks}
        overall: list[float] = []
        for _ in range(resamples):
            means = [statistics.fmean(rng.sample(by_task[t], size)) for t in tasks]
            for t, m in zip(tasks, means):
                task_means[t].append(m)
            overall.append(statistics.fmean(means))
        for t in tasks:
            rows[t][size] = (statistics.fmean(task_means[t]),
                             statistics.pstdev(task_means[t]))
        rows["Overall"][size] = (statistics.fmean(overall), statistics.pstdev(overall))
    return StabilityReport(list(sizes), resamples, rows)
