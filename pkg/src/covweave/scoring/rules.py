"""Rule-based scorers: PR (Kendall's tau), SMS, KVG and CF."""

from __future__ import annotations

import re
from collections import Counter
from typing import Any, Optional, Sequence

from ..core import SKIPPED, TaskKind, TaskScore, Tier, count_tokens, length_score
from ..gen_rule import KEY_PATTERN, FsmStep, parse_kv

_FENCE = re.compile(r"```[ \t]*([\w+-]*)[ \t]*\n(.*?)```", re.S)


def strip_code_fences(text: str) -> str:
    """Body of the first fenced block if there is one, else the text itself."""
    m = _FENCE.search(text or "")
    return m.group(2) if m else (text or "")


# ---------------------------------------------------------------------------
# Kendall's tau
# ---------------------------------------------------------------------------

def _check_permutation(predicted: Sequence[Any], gold: Sequence[Any]) -> None:
    if len(predicted) != len(gold) or len(set(gold)) != len(gold) \
            or set(predicted) != set(gold):
        raise ValueError("invalid permutation")


def _count_inversions(seq: list[int]) -> int:
    """Merge-sort inversion count."""
    if len(seq) < 2:
        return 0
    mid = len(seq) // 2
    left, right = seq[:mid], seq[mid:]
    inv = _count_inversions(left) + _count_inversions(right)
    i = j = 0
    for k in range(len(seq)):
        if j >= len(right) or (i < len(left) and left[i] <= right[j]):
            seq[k] = left[i]
            i += 1
        else:
            seq[k] = right[j]
            inv += len(left) - i
            j += 1
    return inv


def kendall_tau(predicted: Sequence[Any], gold: Sequence[Any]) -> float:
    """tau = (concordant - discordant) / (n(n-1)/2); n < 2 gives 1.0."""
    _check_permutation(predicted, gold)
    n = len(gold)
    if n < 2:
        return 1.0
    rank = {label: i for i, label in enumerate(gold)}
    pairs = n * (n - 1) // 2
    discordant = _count_inversions([rank[x] for x in predicted])
    return (pairs - 2 * discordant) / pairs


def normalized_tau(tau: float) -> float:
    return (tau + 1.0) / 2.0


_ORDER_LINE = re.compile(r"^\W*ORDER\W*:(.*)$", re.I | re.M)
_LABEL = re.compile(r"\bP(\d+)\b", re.I)


def parse_order(output: str, labels: Sequence[str]) -> Optional[tuple[list[str], dict]]:
    """Labels from the last ORDER line, repaired to a full permutation.

    Unknown and duplicate labels are dropped; missing labels are appended in
    presented order.  Returns None if no ORDER line carries a valid label.
    """
    matches = _ORDER_LINE.findall(output or "")
    if not matches:
        return None
    valid = set(labels)
    seen: list[str] = []
    dupes = unknown = 0
    for m in _LABEL.finditer(matches[-1]):
        label = f"P{int(m.group(1))}"
        if label not in valid:
            unknown += 1
        elif label in seen:
            dupes += 1
        else:
            seen.append(label)
    if not seen:
        return None
    missing = [lb for lb in labels if lb not in seen]
    return seen + missing, {"missing": len(missing), "duplicates": dupes,
                            "unknown": unknown}


def score_reorder(output: str, gold_order: Sequence[str], instance_id: str = "",
                  tier: Tier = Tier.T1k) -> TaskScore:
    labels = sorted(gold_order, key=lambda s: int(s[1:]))
    parsed = parse_order(output, labels)
    if parsed is None:
        return TaskScore.build(instance_id, TaskKind.PR, tier, [("kendall_tau", 0.0)],
                               {"parse_error": "no ORDER line with valid labels"})
    order, diag = parsed
    tau = kendall_tau(order, list(gold_order))
    return TaskScore.build(instance_id, TaskKind.PR, tier,
                           [("kendall_tau", normalized_tau(tau))], {**diag, "tau": tau})


# ---------------------------------------------------------------------------
# State machine simulation
# ---------------------------------------------------------------------------

_STEP = re.compile(r"STEP\s+(\d+)\s*:\s*S(\d+)\s*-+\s*(\w+)\s*/\s*(\w+)\s*-+>\s*S(\d+)",
                   re.I)


def parse_steps(output: str) -> dict[int, tuple[int, str, int, str]]:
    """1-based step index -> (state_before, input, state_after, output); first wins."""
    steps: dict[int, tuple[int, str, int, str]] = {}
    for m in _STEP.finditer(output or ""):
        idx = int(m.group(1))
        steps.setdefault(idx, (int(m.group(2)), m.group(3), int(m.group(5)), m.group(4)))
    return steps


def score_fsm(output: str, trace: Sequence[FsmStep], instance_id: str = "",
              tier: Tier = Tier.T1k) -> TaskScore:
    steps = parse_steps(output)
    matches = sum(
        steps.get(s.index + 1) == (s.state_before, s.input_symbol, s.state_after,
                                   s.output_symbol) for s in trace)
    ratio = matches / len(trace) if trace else 1.0
    return TaskScore.build(instance_id, TaskKind.SMS, tier,
                           [("step_match_ratio", ratio)],
                           {"matched": matches, "steps": len(trace),
                            "all_correct": matches == len(trace)})


# ---------------------------------------------------------------------------
# KV dictionary generation
# ---------------------------------------------------------------------------

def key_ok(key: str, key_length: Optional[int]) -> bool:
    return KEY_PATTERN.match(key) is not None and (key_length is None
                                                   or len(key) == key_length)


def score_kv(output: str, verifier: dict[str, Any], instance_id: str = "",
             tier: Tier = Tier.T1k) -> TaskScore:
    entries = parse_kv(output or "")
    names = ("existence", "position", "format", "length")
    if not entries:
        return TaskScore.build(instance_id, TaskKind.KVG, tier,
                               [(n, 0.0) for n in names], {"parsed": 0})
    pair = (verifier["target_key"], verifier["target_value"])
    idx = int(verifier["target_index"])
    existence = 1.0 if pair in entries else 0.0
    position = 1.0 if idx < len(entries) and entries[idx] == pair else 0.0
    key_length = verifier.get("key_length")
    fmt = sum(key_ok(k, key_length) for k, _ in entries) / len(entries)
    length = length_score(len(entries), int(verifier["entry_count"]))
    return TaskScore.build(instance_id, TaskKind.KVG, tier,
                           list(zip(names, (existence, position, fmt, length))),
                           {"parsed": len(entries)})


# ---------------------------------------------------------------------------
# Code fixing
# ---------------------------------------------------------------------------

def residual_findings(program: str, ledger: Sequence[dict[str, Any]]) -> int:
    """Ledger entries still present, matched by code as a multiset.

    Line numbers shift when a repair adds or removes lines, so matching is by
    rule code; a program that no longer parses leaves the whole ledger
    unresolved.
    """
    from ..gen_code import check_violations

    findings = check_violations(program)
    if any(f.code == "PARSE" for f in findings):
        return len(ledger)
    found = Counter(f.code for f in findings)
    wanted = Counter(e["code"] for e in ledger)
    return sum(min(n, found[code]) for code, n in wanted.items())


def score_code(output: str, ledger: Sequence[dict[str, Any]], tier_target: int,
               instance_id: str = "", tier: Tier = Tier.T1k, execute: bool = True,
               interpreter: Optional[str] = None) -> TaskScore:
    from ..gen_code import find_interpreter, run_program

    program = strip_code_fences(output or "")
    diag: dict[str, Any] = {}
    if not execute or find_interpreter(interpreter) is None:
        runnability: float | str = SKIPPED
    elif not program.strip():
        runnability = 0.0
    else:
        outcome = run_program(program, interpreter)
        runnability = 1.0 if outcome.ok else 0.0
        diag["returncode"] = outcome.returncode
        diag["timed_out"] = outcome.timed_out
    if ledger:
        residual = residual_findings(program, ledger)
        style = max(0.0, 1.0 - residual / len(ledger))
        diag["residual"] = residual
    else:
        style = 1.0
    length = length_score(count_tokens(output or ""), tier_target)
    return TaskScore.build(instance_id, TaskKind.CF, tier,
                           [("runnability", runnability), ("style", style),
                            ("length", length)], diag)
