"""Prompt assembly and batched generation against chat-completions endpoints."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional, Protocol, Sequence

from .core import GenerationResult, TaskInstance, TaskKind, count_tokens

log = logging.getLogger(__name__)

DEFAULT_PARALLELISM = 16
SYSTEM_TEXT = "You are a careful assistant. Follow every instruction exactly."


class EndpointError(RuntimeError):
    """A request failed (transport error, HTTP error, or malformed payload)."""


@dataclass
class ModelEndpoint:
    base_url: str = ""
    model_name: str = ""
    api_key_env: Optional[str] = None
    temperature: float = 0.7
    top_p: float = 0.8
    max_output_tokens: int = 8192
    streaming: bool = False
    timeout: float = 600.0
    max_retries: int = 3
    backoff_base: float = 1.0
    extra_params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ModelEndpoint:
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown endpoint fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    def api_key(self) -> Optional[str]:
        return os.environ.get(self.api_key_env) if self.api_key_env else None


@dataclass(frozen=True)
class PromptBundle:
    system_text: Optional[str]
    user_text: str

    def messages(self) -> list[dict[str, str]]:
        msgs = []
        if self.system_text:
            msgs.append({"role": "system", "content": self.system_text})
        msgs.append({"role": "user", "content": self.user_text})
        return msgs


def build_prompt(instance: TaskInstance) -> PromptBundle:
    """Material, then the instruction (which enumerates constraints and the
    length requirement)."""
    parts = [p for p in (instance.material.strip("\n"), instance.instruction.strip("\n"))
             if p]
    return PromptBundle(SYSTEM_TEXT, "\n\n".join(parts))


# ---------------------------------------------------------------------------
# Responders
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Completion:
    text: str
    output_tokens: int
    finish_reason: Optional[str] = None


class Responder(Protocol):
    def respond(self, instance: TaskInstance, prompt: PromptBundle) -> Completion: ...


def chat_request(endpoint: ModelEndpoint, messages: list[dict[str, str]],
                 client: Any = None) -> Completion:
    """One chat-completions call; raises EndpointError on any failure."""
    import httpx

    url = endpoint.base_url.rstrip("/") + "/chat/completions"
    headers = {"Content-Type": "application/json"}
    key = endpoint.api_key()
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = {"model": endpoint.model_name, "messages": messages,
            "temperature": endpoint.temperature, "top_p": endpoint.top_p,
            "max_tokens": endpoint.max_output_tokens, "stream": False,
            **endpoint.extra_params}
    try:
        if client is None:
            resp = httpx.post(url, json=body, headers=headers, timeout=endpoint.timeout)
        else:
            resp = client.post(url, json=body, headers=headers, timeout=endpoint.timeout)
        resp.raise_for_status()
        data = resp.json()
        choice = data["choices"][0]
        text = choice["message"]["content"] or ""
    except (httpx.HTTPError, KeyError, IndexError, TypeError, ValueError) as exc:
        raise EndpointError(f"{type(exc).__name__}: {exc}") from exc
    usage = data.get("usage") or {}
    tokens = int(usage.get("completion_tokens") or count_tokens(text))
    return Completion(text, tokens, choice.get("finish_reason"))


class HttpResponder:
    def __init__(self, endpoint: ModelEndpoint, transport: Any = None) -> None:
        self.endpoint = endpoint
        self._transport = transport

    def respond(self, instance: TaskInstance, prompt: PromptBundle) -> Completion:
        if self._transport is not None:
            import httpx

            with httpx.Client(transport=self._transport) as client:
                return chat_request(self.endpoint, prompt.messages(), client)
        return chat_request(self.endpoint, prompt.messages())


class OracleResponder:
    """Returns the gold answer for every instance (end-to-end test double)."""

    def respond(self, instance: TaskInstance, prompt: PromptBundle) -> Completion:
        text = oracle_respond(instance)
        return Completion(text, count_tokens(text), "stop")


class CallableResponder:
    """Adapts ``fn(instance) -> text`` (mock models in tests and studies)."""

    def __init__(self, fn: Callable[[TaskInstance], str]) -> None:
        self.fn = fn

    def respond(self, instance: TaskInstance, prompt: PromptBundle) -> Completion:
        text = self.fn(instance)
        return Completion(text, count_tokens(text), "stop")


class ReplayResponder:
    """Serves recorded transcripts; optionally records misses from a live one."""

    def __init__(self, path: str | Path, live: Optional[Responder] = None) -> None:
        self.path = Path(path)
        self.live = live
        self._lock = threading.Lock()
        self._records: dict[str, dict[str, Any]] = {}
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self._records[rec["key"]] = rec

    @staticmethod
    def key(instance: TaskInstance, prompt: PromptBundle) -> str:
        digest = hashlib.sha256(prompt.user_text.encode("utf-8")).hexdigest()[:16]
        return f"{instance.id}:{digest}"

    def respond(self, instance: TaskInstance, prompt: PromptBundle) -> Completion:
        key = self.key(instance, prompt)
        rec = self._records.get(key)
        if rec is not None:
            return Completion(rec["text"], int(rec["output_tokens"]),
                              rec.get("finish_reason"))
        if self.live is None:
            raise EndpointError(f"no recorded response for {key}")
        comp = self.live.respond(instance, prompt)
        rec = {"key": key, "text": comp.text, "output_tokens": comp.output_tokens,
               "finish_reason": comp.finish_reason}
        with self._lock:
            self._records[key] = rec
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
        return comp


# ---------------------------------------------------------------------------
# Batch execution
# ---------------------------------------------------------------------------

def is_truncated(comp: Completion, max_output_tokens: int) -> bool:
    return comp.finish_reason == "length" or comp.output_tokens >= max_output_tokens


def _run_one(instance: TaskInstance, responder: Responder, endpoint: ModelEndpoint,
             sleep: Callable[[float], None]) -> GenerationResult:
    prompt = build_prompt(instance)
    last_error = ""
    for attempt in range(endpoint.max_retries + 1):
        start = time.perf_counter()
        try:
            comp = responder.respond(instance, prompt)
        except EndpointError as exc:
            last_error = str(exc)
            log.warning("request for %s failed (attempt %d): %s",
                        instance.id, attempt + 1, exc)
            if attempt < endpoint.max_retries:
                sleep(endpoint.backoff_base * (2 ** attempt))
            continue
        latency = (time.perf_counter() - start) * 1000.0
        return GenerationResult(instance.id, comp.text,
                                truncated=is_truncated(comp, endpoint.max_output_tokens),
                                output_tokens=comp.output_tokens, latency_ms=latency)
    return GenerationResult(instance.id, "", error=f"retries exhausted: {last_error}")


def run_batch(instances: Sequence[TaskInstance], responder: Responder,
              endpoint: Optional[ModelEndpoint] = None,
              parallelism: int = DEFAULT_PARALLELISM,
              sleep: Callable[[float], None] = time.sleep,
              on_result: Optional[Callable[[GenerationResult], None]] = None,
              ) -> list[GenerationResult]:
    """Generate for every instance with at most ``parallelism`` in flight.

    Results are returned sorted by instance id.  ``on_result`` is called from
    the collecting thread as each result completes (used for resumable
    append-only persistence).
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    endpoint = endpoint or ModelEndpoint()
    if instances:
        needed = max(i.target_tokens for i in instances)
        if endpoint.max_output_tokens < needed:
            raise ValueError(f"max_output_tokens {endpoint.max_output_tokens} is below "
                             f"the tier target {needed}")
    results: list[GenerationResult] = []
    lock = threading.Lock()

    def task(inst: TaskInstance) -> GenerationResult:
        res = _run_one(inst, responder, endpoint, sleep)
        with lock:
            results.append(res)
            if on_result is not None:
                on_result(res)
        return res

    if parallelism == 1:
        for inst in instances:
            task(inst)
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(task, instances))
    return sorted(results, key=lambda r: r.instance_id)


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

def oracle_respond(instance: TaskInstance) -> str:
    """Gold-perfect answer reconstructed from the instance's verifiers."""
    from .gen_rule import (render_order_line, render_trace, reorder_spec_from_instance,
                           serialize_kv, trace_from_verifier)

    kind = instance.task_kind
    if kind == TaskKind.KVG:
        return serialize_kv([tuple(e) for e in instance.meta["gold_entries"]])
    if kind == TaskKind.SMS:
        return render_trace(trace_from_verifier(instance.verifiers[0]))
    if kind == TaskKind.PR:
        blocks, gold = reorder_spec_from_instance(instance)
        body = "\n\n".join(f"[{label}]\n{blocks[label]}" for label in gold)
        return f"{body}\n\n{render_order_line(gold)}"
    if kind == TaskKind.CF:
        return instance.meta["clean_source"]
    if kind == TaskKind.SR:
        return instance.meta["gold_report"]
    if kind == TaskKind.BioG:
        return " ".join(v["sentence"] for v in instance.verifiers)
    if kind == TaskKind.NW:
        return " ".join(v["corrected"] for v in instance.verifiers)
    raise ValueError(f"no oracle for {kind}")
