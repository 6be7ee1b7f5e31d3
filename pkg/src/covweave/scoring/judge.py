"""Judges for coverage-style metrics.

A judge answers, for each verifier item, a closed-vocabulary question about a
model output.  :class:`MockJudge` is a cooperative, deterministic heuristic for
offline runs; :class:`LlmJudge` asks a judge model, always embedding the gold
item in the prompt so the judge compares rather than recalls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Optional, Protocol, Sequence

log = logging.getLogger(__name__)

COVERED, NOT_COVERED = "covered", "not_covered"
CORRECT, INCORRECT, NOT_ADDRESSED = "correct", "incorrect", "not_addressed"
CORRECTED, FLAWED, ABSENT = "corrected", "flawed", "absent"


@dataclass(frozen=True)
class Verdict:
    item_index: int
    outcome: str
    rationale: str = ""


class Judge(Protocol):
    warnings: list[str]

    def coverage(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]: ...

    def answers(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]: ...

    def statements(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]: ...


def normalize(text: str) -> str:
    text = (text or "").lower().replace("“", '"').replace("”", '"')
    text = text.replace("’", "'")
    return re.sub(r"\s+", " ", text).strip()


_NUMBER = re.compile(r"-?\$?\d[\d,]*(?:\.\d+)?")


def _numbers(text: str) -> list[Decimal]:
    out = []
    for tok in _NUMBER.findall(text):
        try:
            out.append(Decimal(tok.replace("$", "").replace(",", "")))
        except InvalidOperation:
            continue
    return out


def answer_matches(window: str, item: dict[str, Any]) -> bool:
    """Stated answer agrees with gold: ±0.1 on percentages, exact otherwise."""
    kind, value = item.get("kind"), str(item.get("value", ""))
    if kind == "name":
        return normalize(value) in normalize(window)
    try:
        gold = Decimal(value)
    except InvalidOperation:
        return normalize(str(item.get("answer", ""))) in normalize(window)
    tol = Decimal("0.1") if kind == "percent" else Decimal("0.005")
    return any(abs(n - gold) <= tol for n in _numbers(window))


class MockJudge:
    """Cooperative heuristic judge: literal mentions count, paraphrase does not."""

    def __init__(self, window: int = 240) -> None:
        self.window = window
        self.warnings: list[str] = []

    def coverage(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]:
        text = normalize(output)
        sentences = [s for s in re.split(r"(?<=[.!?])\s+", text) if s]
        verdicts = []
        for i, item in enumerate(items):
            hit = normalize(item.get("text", "")) in text if item.get("text") else False
            keys = [normalize(k) for k in item.get("keys", ()) if k]
            if not hit and keys:
                hit = any(all(k in s for k in keys) for s in sentences)
            verdicts.append(Verdict(i, COVERED if hit else NOT_COVERED))
        return verdicts

    def answers(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]:
        text = normalize(output)
        verdicts = []
        for i, item in enumerate(items):
            pos = text.find(normalize(item["query"]))
            if pos < 0:
                verdicts.append(Verdict(i, NOT_ADDRESSED))
                continue
            start = pos + len(normalize(item["query"]))
            window = text[start:start + self.window]
            verdicts.append(Verdict(i, CORRECT if answer_matches(window, item)
                                    else INCORRECT))
        return verdicts

    def fabrications(self, output: str, items: Sequence[dict[str, Any]]) -> int:
        """Output sentences that support none of the items (unsupported claims)."""
        facts = [normalize(it.get("text", "")) for it in items]
        keysets = [[normalize(k) for k in it.get("keys", ()) if k] for it in items]
        count = 0
        for sent in re.split(r"(?<=[.!?])\s+", normalize(output)):
            if len(sent.split()) < 3:
                continue
            supported = any(f and (f in sent or sent in f) for f in facts) or \
                any(keys and all(k in sent for k in keys) for keys in keysets)
            count += not supported
        return count

    def statements(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]:
        text = normalize(output)
        verdicts = []
        for i, item in enumerate(items):
            if normalize(item["corrected"]) in text:
                outcome = CORRECTED
            elif normalize(item["flawed"]) in text:
                outcome = FLAWED
            else:
                outcome = ABSENT
            verdicts.append(Verdict(i, outcome))
        return verdicts


# ---------------------------------------------------------------------------
# LLM judge
# ---------------------------------------------------------------------------

class CompletionClient(Protocol):
    def complete(self, prompt: str) -> str: ...


class EndpointClient:
    """``complete(prompt)`` over a chat-completions endpoint, with retries."""

    def __init__(self, endpoint: Any, sleep: Any = None) -> None:
        import time

        self.endpoint = endpoint
        self._sleep = sleep or time.sleep

    def complete(self, prompt: str) -> str:
        from ..runner import EndpointError, chat_request

        last: Optional[Exception] = None
        for attempt in range(self.endpoint.max_retries + 1):
            try:
                return chat_request(self.endpoint,
                                    [{"role": "user", "content": prompt}]).text
            except EndpointError as exc:
                last = exc
                if attempt < self.endpoint.max_retries:
                    self._sleep(self.endpoint.backoff_base * (2 ** attempt))
        raise EndpointError(str(last))


class ReplayClient:
    """Prompt-hash keyed response cache backed by a JSONL file.

    With ``live`` set, misses are forwarded and recorded; without it, a miss
    is an error (pure replay).
    """

    def __init__(self, path: str | Path, live: Optional[CompletionClient] = None) -> None:
        self.path = Path(path)
        self.live = live
        self._lock = threading.Lock()
        self._cache: dict[str, str] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._cache[rec["key"]] = rec["response"]

    @staticmethod
    def key(prompt: str) -> str:
        return hashlib.sha256(prompt.encode("utf-8")).hexdigest()

    def complete(self, prompt: str) -> str:
        from ..runner import EndpointError

        key = self.key(prompt)
        if key in self._cache:
            return self._cache[key]
        if self.live is None:
            raise EndpointError(f"no recorded response for prompt {key[:12]}")
        response = self.live.complete(prompt)
        with self._lock:
            self._cache[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps({"key": key, "response": response},
                                    ensure_ascii=False) + "\n")
        return response


_VERDICT_LINE = re.compile(r"^\s*\[?(\d+)\]?\s*[:.)\-]\s*\**\s*([A-Za-z_ ]+?)\s*\**\s*$",
                           re.M)


def parse_verdicts(text: str, n: int, vocab: Sequence[str]) -> Optional[list[str]]:
    """``i: label`` lines (1-based) -> labels; None unless all n parse."""
    labels: dict[int, str] = {}
    canon = {v.replace("_", " "): v for v in vocab}
    for m in _VERDICT_LINE.finditer(text or ""):
        idx = int(m.group(1))
        word = m.group(2).strip().lower().replace("_", " ")
        if word in canon and 1 <= idx <= n:
            labels.setdefault(idx, canon[word])
    if len(labels) != n:
        return None
    return [labels[i] for i in range(1, n + 1)]


@dataclass
class LlmJudge:
    client: CompletionClient
    batch_size: int = 5
    statement_batch_size: int = 10
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.statement_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")

    def _ask(self, prompt: str, n: int, vocab: Sequence[str], negative: str) -> list[str]:
        from ..runner import EndpointError

        for attempt in range(2):
            try:
                text = self.client.complete(prompt)
            except EndpointError as exc:
                self.warnings.append(f"judge failure: {exc}")
                return [negative] * n
            labels = parse_verdicts(text, n, vocab)
            if labels is not None:
                return labels
        self.warnings.append("unparseable judge verdicts; counted negative")
        return [negative] * n

    def _run(self, output: str, items: Sequence[dict[str, Any]], size: int,
             render: Any, intro: str, vocab: Sequence[str], negative: str) -> list[Verdict]:
        verdicts: list[Verdict] = []
        for start in range(0, len(items), size):
            batch = items[start:start + size]
            listing = "\n".join(f"{i}. {render(item)}" for i, item in enumerate(batch, 1))
            prompt = (f"{intro}\n\nTEXT:\n<<<\n{output}\n>>>\n\nITEMS:\n{listing}\n\n"
                      f"Answer with one line per item, formatted as `number: label`, "
                      f"where label is one of: {', '.join(vocab)}.")
            labels = self._ask(prompt, len(batch), vocab, negative)
            verdicts.extend(Verdict(start + i, lab) for i, lab in enumerate(labels))
        return verdicts

    def coverage(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]:
        return self._run(output, items, self.batch_size, lambda it: it["text"],
                         "For each item, decide whether the text states the fact. "
                         "Paraphrase counts; contradictions and omissions do not.",
                         (COVERED, NOT_COVERED), NOT_COVERED)

    def answers(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]:
        def render(it: dict[str, Any]) -> str:
            tol = " (within 0.1 percentage points)" if it.get("kind") == "percent" else ""
            return f"Question: {it['query']} Gold answer: {it['answer']}{tol}"
        return self._run(output, items, self.batch_size, render,
                         "For each question, decide whether the report answers it and, "
                         "if so, whether its answer matches the gold answer.",
                         (CORRECT, INCORRECT, NOT_ADDRESSED), NOT_ADDRESSED)

    def fabrications(self, output: str, items: Sequence[dict[str, Any]]) -> int:
        """Judge-counted claims that contradict or go beyond the fact list.

        Returns -1 (with a warning) when the judge fails or its answer does not
        parse; the count is a diagnostic and never enters the score.
        """
        from ..runner import EndpointError

        listing = "\n".join(f"- {it['text']}" for it in items)
        prompt = ("Count the factual claims in the text that contradict the fact "
                  "list or are not supported by it. Answer with a single line "
                  f"`FABRICATED: <number>`.\n\nFACTS:\n{listing}\n\nTEXT:\n<<<\n"
                  f"{output}\n>>>")
        try:
            reply = self.client.complete(prompt)
        except EndpointError as exc:
            self.warnings.append(f"judge failure: {exc}")
            return -1
        m = re.search(r"FABRICATED\W*(\d+)", reply or "", re.I)
        if not m:
            self.warnings.append("unparseable fabrication count")
            return -1
        return int(m.group(1))

    def statements(self, output: str, items: Sequence[dict[str, Any]]) -> list[Verdict]:
        def render(it: dict[str, Any]) -> str:
            return f"Correct form: {it['corrected']} | Flawed form: {it['flawed']}"
        return self._run(output, items, self.statement_batch_size, render,
                         "For each statement, decide whether the article includes its "
                         "fact, and if so whether it uses the correct AP style form or "
                         "the flawed form.", (CORRECTED, FLAWED, ABSENT), ABSENT)
