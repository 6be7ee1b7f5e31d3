"""Scorers for all seven tasks, judge plumbing, and run aggregation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from statistics import fmean
from typing import Any, Optional, Sequence

from ..core import (TASK_ORDER, TIER_ORDER, GenerationResult, TaskInstance, TaskKind,
                    TaskScore, Tier)
from .judge import (ABSENT, CORRECT, CORRECTED, COVERED, INCORRECT, NOT_ADDRESSED,
                    EndpointClient, Judge, LlmJudge, MockJudge, ReplayClient, Verdict,
                    parse_verdicts)
from .rules import (kendall_tau, normalized_tau, parse_order, parse_steps,
                    residual_findings, score_code, score_fsm, score_kv, score_reorder,
                    strip_code_fences)

__all__ = [
    "ABSENT", "CORRECT", "CORRECTED", "COVERED", "INCORRECT", "NOT_ADDRESSED",
    "EndpointClient", "Judge", "LlmJudge", "MockJudge", "ReplayClient", "ReportTable",
    "Verdict", "aggregate", "judge_coverage", "kendall_tau", "normalized_tau",
    "parse_order", "parse_steps", "parse_verdicts", "residual_findings",
    "score_biog", "score_code", "score_fsm", "score_instance", "score_kv",
    "score_news", "score_reorder", "score_sales", "strip_code_fences",
]

log = logging.getLogger(__name__)


def _hm_score(instance_id: str, kind: TaskKind, tier: Tier,
              subs: list[tuple[str, float]], diag: dict[str, Any]) -> TaskScore:
    return TaskScore.build(instance_id, kind, tier, subs, diag)


def judge_coverage(output: str, items: Sequence[dict[str, Any]], judge: Judge,
                   warnings: Optional[list[str]] = None) -> float:
    """covered / total; an empty item list is vacuously 1.0 (with a warning)."""
    if not items:
        if warnings is not None:
            warnings.append("no verifier items; coverage is vacuously 1.0")
        log.warning("judge_coverage called with no items")
        return 1.0
    verdicts = judge.coverage(output or "", items)
    return sum(v.outcome == COVERED for v in verdicts) / len(items)


def score_biog(output: str, verifiers: Sequence[dict[str, Any]], judge: Judge,
               instance_id: str = "", tier: Tier = Tier.T1k,
               fabrication_probe: bool = False) -> TaskScore:
    """Coverage only; the optional fabrication probe is logged, never scored."""
    warnings: list[str] = []
    items = [{"text": v["sentence"], "keys": v.get("keys", ())} for v in verifiers]
    cov = judge_coverage(output, items, judge, warnings)
    diag: dict[str, Any] = {}
    if fabrication_probe:
        probe = getattr(judge, "fabrications", None)
        if probe is None:
            warnings.append("judge has no fabrication probe")
        else:
            diag["fabricated_claims"] = probe(output or "", items)
    diag["warnings"] = warnings + list(getattr(judge, "warnings", []))
    return _hm_score(instance_id, TaskKind.BioG, tier, [("coverage", cov)], diag)


def score_sales(output: str, cq_pairs: Sequence[dict[str, Any]], judge: Judge,
                instance_id: str = "", tier: Tier = Tier.T1k) -> TaskScore:
    if not cq_pairs:
        return _hm_score(instance_id, TaskKind.SR, tier,
                         [("coverage", 1.0), ("correctness", 1.0)],
                         {"warnings": ["no queries; vacuous score"]})
    verdicts = judge.answers(output or "", cq_pairs)
    addressed = sum(v.outcome != NOT_ADDRESSED for v in verdicts)
    correct = sum(v.outcome == CORRECT for v in verdicts)
    coverage = addressed / len(cq_pairs)
    correctness = correct / addressed if addressed else 0.0
    return _hm_score(instance_id, TaskKind.SR, tier,
                     [("coverage", coverage), ("correctness", correctness)],
                     {"addressed": addressed, "correct": correct,
                      "warnings": list(getattr(judge, "warnings", []))})


def score_news(output: str, pairs: Sequence[dict[str, Any]], judge: Judge,
               instance_id: str = "", tier: Tier = Tier.T1k) -> TaskScore:
    if not pairs:
        return _hm_score(instance_id, TaskKind.NW, tier,
                         [("coverage", 1.0), ("ap_style", 1.0)],
                         {"warnings": ["no statements; vacuous score"]})
    verdicts = judge.statements(output or "", pairs)
    present = sum(v.outcome != ABSENT for v in verdicts)
    corrected = sum(v.outcome == CORRECTED for v in verdicts)
    coverage = present / len(pairs)
    style = corrected / present if present else 0.0
    return _hm_score(instance_id, TaskKind.NW, tier,
                     [("coverage", coverage), ("ap_style", style)],
                     {"present": present, "corrected": corrected,
                      "warnings": list(getattr(judge, "warnings", []))})


def score_instance(instance: TaskInstance, result: Optional[GenerationResult],
                   judge: Optional[Judge] = None, execute: bool = True,
                   interpreter: Optional[str] = None,
                   fabrication_probe: bool = False) -> TaskScore:
    """Dispatch to the task's scorer; a missing result scores on empty output."""
    from ..gen_rule import trace_from_verifier

    output = result.output_text if result is not None else ""
    judge = judge or MockJudge()
    kind, iid, tier = instance.task_kind, instance.id, instance.tier
    if kind == TaskKind.KVG:
        score = score_kv(output, instance.verifiers[0], iid, tier)
    elif kind == TaskKind.SMS:
        score = score_fsm(output, trace_from_verifier(instance.verifiers[0]), iid, tier)
    elif kind == TaskKind.PR:
        score = score_reorder(output, instance.verifiers[0]["gold_order"], iid, tier)
    elif kind == TaskKind.CF:
        score = score_code(output, instance.verifiers, instance.target_tokens, iid, tier,
                           execute=execute, interpreter=interpreter)
    elif kind == TaskKind.BioG:
        score = score_biog(output, instance.verifiers, judge, iid, tier,
                           fabrication_probe)
    elif kind == TaskKind.SR:
        score = score_sales(output, instance.verifiers, judge, iid, tier)
    elif kind == TaskKind.NW:
        score = score_news(output, instance.verifiers, judge, iid, tier)
    else:  # pragma: no cover - enum is closed
        raise ValueError(f"unknown task {kind}")
    extra: dict[str, Any] = {}
    if result is None:
        extra["missing_result"] = True
    elif result.error:
        extra["generation_error"] = result.error
    if result is not None and result.truncated:
        extra["truncated"] = True
    if extra:
        score.diagnostics.update(extra)
    return score


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class ReportTable:
    """Scores ×100: per (task, tier) cell, per task, per tier, and overall."""

    cells: dict[tuple[TaskKind, Tier], float]
    task_scores: dict[TaskKind, float]
    length_scores: dict[Tier, float]
    overall: float
    counts: dict[tuple[TaskKind, Tier], int]
    missing: int = 0
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {"cells": {f"{k.value}/{t.value}": v for (k, t), v in self.cells.items()},
                "task_scores": {k.value: v for k, v in self.task_scores.items()},
                "length_scores": {t.value: v for t, v in self.length_scores.items()},
                "overall": self.overall,
                "counts": {f"{k.value}/{t.value}": n for (k, t), n in self.counts.items()},
                "missing": self.missing, "notes": list(self.notes)}

    def _tasks(self) -> list[TaskKind]:
        return [k for k in TASK_ORDER if k in self.task_scores]

    def _tiers(self) -> list[Tier]:
        return [t for t in TIER_ORDER if t in self.length_scores]

    def _rows(self) -> tuple[list[str], list[list[str]]]:
        tiers = self._tiers()
        header = ["Task"] + [t.value for t in tiers] + ["Avg"]
        rows = []
        for kind in self._tasks():
            row = [kind.value]
            for tier in tiers:
                v = self.cells.get((kind, tier))
                row.append("-" if v is None else f"{v:.2f}")
            row.append(f"{self.task_scores[kind]:.2f}")
            rows.append(row)
        rows.append(["Avg"] + [f"{self.length_scores[t]:.2f}" for t in tiers]
                    + [f"{self.overall:.2f}"])
        return header, rows

    def to_markdown(self) -> str:
        header, rows = self._rows()
        lines = ["| " + " | ".join(header) + " |",
                 "|" + "|".join("---" for _ in header) + "|"]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        lines += self._footer()
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        header, rows = self._rows()
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        fmt = "  ".join(f"{{:<{w}}}" if i == 0 else f"{{:>{w}}}"
                        for i, w in enumerate(widths))
        lines = [fmt.format(*header)] + [fmt.format(*r) for r in rows]
        lines += self._footer()
        return "\n".join(lines) + "\n"

    def _footer(self) -> list[str]:
        out = []
        if self.missing:
            out.append("")
            out.append(f"Warning: {self.missing} instance(s) had no result and "
                       f"were scored 0.")
        for note in self.notes:
            out.append(f"Note: {note}")
        return out


def _r2(x: float) -> float:
    return round(x * 100.0, 2)


def aggregate(scores: Sequence[TaskScore], missing: int = 0,
              notes: Sequence[str] = ()) -> ReportTable:
    """Task score: mean over a task's instances (all tiers).  Length score:
    mean of that tier's cell means.  Overall: mean of all cell means."""
    by_cell: dict[tuple[TaskKind, Tier], list[float]] = {}
    by_task: dict[TaskKind, list[float]] = {}
    for s in scores:
        by_cell.setdefault((s.task_kind, s.tier), []).append(s.final)
        by_task.setdefault(s.task_kind, []).append(s.final)
    cell_means = {k: fmean(v) for k, v in by_cell.items()}
    by_tier: dict[Tier, list[float]] = {}
    for (kind, tier), m in cell_means.items():
        by_tier.setdefault(tier, []).append(m)
    return ReportTable(
        cells={k: _r2(v) for k, v in cell_means.items()},
        task_scores={k: _r2(fmean(v)) for k, v in by_task.items()},
        length_scores={t: _r2(fmean(v)) for t, v in by_tier.items()},
        overall=_r2(fmean(cell_means.values())) if cell_means else 0.0,
        counts={k: len(v) for k, v in by_cell.items()},
        missing=missing, notes=list(notes))
