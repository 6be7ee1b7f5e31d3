"""Code fixing (CF): runnable program synthesis, pollution, and checking."""

from __future__ import annotations

import os
import shutil
import subprocess
import sys
import tempfile
from dataclasses import dataclass, field

from ..core import (CALIBRATION_VERSION, AttributeSeed, TaskInstance, TaskKind,
                    compose_instruction, count_tokens, instance_id, seeded_stream)
from .checker import (CATEGORIES, CODE_CATEGORY, SUPPORTED_CODES, Finding,
                      check_violations)
from .pollute import LedgerEntry, PollutionBudgetError, pollute
from .synth import build_program, render

__all__ = [
    "CATEGORIES", "CODE_CATEGORY", "SUPPORTED_CODES", "CodeArtifact", "Finding",
    "LedgerEntry", "PollutionBudgetError", "RunOutcome", "check_violations",
    "find_interpreter", "gen_clean_program", "gen_code_artifact",
    "gen_code_fixing", "pollute", "run_program",
]

RUN_TIMEOUT = 5.0
MAX_ATTEMPTS = 5
TASK_TEXT = (
    "The Python program below violates several style rules (spacing, line "
    "length, naming, comprehensions, boolean patterns, default arguments, "
    "unused locals). Repair all style violations, keep behavior: the fixed "
    "program must run and print exactly what the original prints. Output the "
    "complete corrected program and nothing else."
)


@dataclass
class CodeArtifact:
    clean_source: str
    polluted_source: str
    ledger: list[LedgerEntry]
    violation_prob: float
    error_lines: int
    meta: dict = field(default_factory=dict)


def _require_cf(seed: AttributeSeed) -> None:
    if seed.task_kind != TaskKind.CF:
        raise ValueError("code fixing generators need a CF seed")


def gen_clean_program(seed: AttributeSeed, fill: float = 0.97,
                      attempt: int = 0) -> str:
    """Clean program sized to ``fill`` of the seed's target length."""
    _require_cf(seed)
    rng = seeded_stream(seed.rng_seed, f"cf:program:{seed.tier.value}:{attempt}")
    return render(build_program(rng, seed.target_tokens, fill=fill))


def gen_code_artifact(seed: AttributeSeed) -> CodeArtifact:
    """Clean + polluted program pair; regrows the program if sites run short."""
    _require_cf(seed)
    prob = float(seed.knobs["violation_prob"])
    error_lines = int(seed.knobs["error_lines"])
    fill = 0.97
    last_error: Exception | None = None
    for attempt in range(MAX_ATTEMPTS):
        clean = gen_clean_program(seed, fill=fill, attempt=attempt)
        rng = seeded_stream(seed.rng_seed, f"cf:pollute:{attempt}")
        try:
            polluted, ledger = pollute(clean, prob, error_lines, rng)
        except PollutionBudgetError as exc:
            last_error = exc
            fill *= 1.25
            continue
        return CodeArtifact(clean, polluted, ledger, prob, error_lines,
                            {"attempt": attempt})
    raise PollutionBudgetError(str(last_error))


def gen_code_fixing(seed: AttributeSeed) -> TaskInstance:
    art = gen_code_artifact(seed)
    texts = [f"Line {e.line}: {e.description} [{e.code}]" for e in art.ledger]
    instruction = compose_instruction(TASK_TEXT, "Known problem locations:",
                                      texts, seed.target_tokens)
    constraints = [{"text": t, "code": e.code, "line": e.line}
                   for t, e in zip(texts, art.ledger)]
    verifiers = [e.to_dict() for e in art.ledger]
    meta = {
        "seed": seed.to_dict(), "calibration": CALIBRATION_VERSION,
        "clean_source": art.clean_source,
        "ledger": verifiers,
        "expect_exit": 0,
        "violation_prob": art.violation_prob,
        "error_lines": art.error_lines,
        "polluted_tokens": count_tokens(art.polluted_source),
    }
    return TaskInstance(instance_id(seed), seed.task_kind, seed.tier,
                        material=art.polluted_source, instruction=instruction,
                        constraints=constraints, verifiers=verifiers, meta=meta)


# -- sandboxed execution ---------------------------------------------------
@dataclass(frozen=True)
class RunOutcome:
    ok: bool
    returncode: int | None
    stdout: str
    stderr: str
    timed_out: bool = False


def find_interpreter(explicit: str | None = None) -> str | None:
    """Interpreter from the argument, ``COVWEAVE_PYTHON``, PATH, or ourselves."""
    for cand in (explicit, os.environ.get("COVWEAVE_PYTHON")):
        if cand:
            return cand
    return shutil.which("python3") or sys.executable or None


def run_program(source: str, interpreter: str | None = None,
                timeout: float = RUN_TIMEOUT) -> RunOutcome:
    """Execute ``source`` in a scratch directory with empty stdin."""
    exe = find_interpreter(interpreter)
    if exe is None:
        raise FileNotFoundError("no interpreter available")
    with tempfile.TemporaryDirectory(prefix="covweave-run-") as tmp:
        path = os.path.join(tmp, "program.py")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(source)
        try:
            proc = subprocess.run([exe, "-I", path], cwd=tmp, stdin=subprocess.DEVNULL,
                                  capture_output=True, text=True, timeout=timeout)
        except subprocess.TimeoutExpired as exc:
            out = exc.stdout.decode() if isinstance(exc.stdout, bytes) else exc.stdout
            return RunOutcome(False, None, out or "", "timeout", timed_out=True)
    return RunOutcome(proc.returncode == 0, proc.returncode, proc.stdout, proc.stderr)
