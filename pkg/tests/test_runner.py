import json
import threading

import httpx
import pytest

from covweave.core import TaskInstance, TaskKind, Tier
from covweave.runner import (SYSTEM_TEXT, CallableResponder, Completion, EndpointError,
                             HttpResponder, ModelEndpoint, OracleResponder,
                             ReplayResponder, build_prompt, chat_request, is_truncated,
                             oracle_respond, run_batch)


def _instances(n, tier=Tier.T1k):
    return [TaskInstance(f"KVG-{tier.value}-{i:04d}", TaskKind.KVG, tier,
                         material=f"material {i}", instruction=f"instruction {i}",
                         constraints=[], verifiers=[])
            for i in range(n)]


class Flaky:
    """Fails the first ``failures`` calls per instance."""

    def __init__(self, failures):
        self.failures = failures
        self.calls = {}
        self.lock = threading.Lock()

    def respond(self, instance, prompt):
        with self.lock:
            n = self.calls[instance.id] = self.calls.get(instance.id, 0) + 1
        if n <= self.failures:
            raise EndpointError("boom")
        return Completion(f"answer {instance.id}", 3, "stop")


def test_build_prompt_is_deterministic_and_complete(small_dataset):
    for inst in small_dataset:
        bundle = build_prompt(inst)
        assert bundle == build_prompt(inst)
        assert bundle.system_text == SYSTEM_TEXT
        if inst.material.strip():
            assert bundle.user_text.index(inst.material.strip()[:50]) < \
                bundle.user_text.index(inst.instruction.strip()[:50])
        for c in inst.constraints:
            if inst.task_kind != TaskKind.BioG:
                assert c["text"] in bundle.user_text
        assert [m["role"] for m in bundle.messages()] == ["system", "user"]


@pytest.mark.parametrize("parallelism", [1, 4, 16])
def test_run_batch_sorted_and_complete(parallelism):
    insts = list(reversed(_instances(20)))
    seen = []
    results = run_batch(insts, CallableResponder(lambda i: "x " + i.id),
                        parallelism=parallelism, on_result=seen.append)
    assert [r.instance_id for r in results] == sorted(i.id for i in insts)
    assert len(seen) == 20
    assert all(r.output_text == "x " + r.instance_id and r.error is None for r in results)


def test_run_batch_retries_with_backoff():
    sleeps = []
    endpoint = ModelEndpoint(max_retries=3, backoff_base=0.5)
    results = run_batch(_instances(2), Flaky(2), endpoint, parallelism=1,
                        sleep=sleeps.append)
    assert all(r.error is None for r in results)
    assert len(results) == len({r.instance_id for r in results}) == 2
    assert sleeps == [0.5, 1.0, 0.5, 1.0]


def test_run_batch_retries_exhausted():
    endpoint = ModelEndpoint(max_retries=2, backoff_base=0)
    (res,) = run_batch(_instances(1), Flaky(10), endpoint, sleep=lambda s: None)
    assert res.output_text == "" and res.error.startswith("retries exhausted")


def test_max_tokens_below_target_rejected():
    with pytest.raises(ValueError, match="below"):
        run_batch(_instances(1, Tier.T8k), OracleResponder(),
                  ModelEndpoint(max_output_tokens=4000))
    with pytest.raises(ValueError):
        run_batch(_instances(1), OracleResponder(), parallelism=0)


def test_truncation_flag():
    assert is_truncated(Completion("x", 5, "length"), 100)
    assert is_truncated(Completion("x", 100, "stop"), 100)
    assert not is_truncated(Completion("x", 5, "stop"), 100)
    resp = CallableResponder(lambda i: "word " * 20000)
    (res,) = run_batch(_instances(1), resp, ModelEndpoint(max_output_tokens=8192))
    assert res.truncated


def test_endpoint_from_dict():
    ep = ModelEndpoint.from_dict({"base_url": "http://x", "model_name": "m",
                                  "extra_params": {"seed": 1}})
    assert ep.to_dict()["extra_params"] == {"seed": 1}
    with pytest.raises(ValueError):
        ModelEndpoint.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        ModelEndpoint(max_output_tokens=0)


def test_http_responder_with_mock_transport(monkeypatch):
    captured = {}

    def handler(request):
        captured["url"] = str(request.url)
        captured["auth"] = request.headers.get("authorization")
        captured["body"] = json.loads(request.content)
        return httpx.Response(200, json={
            "choices": [{"message": {"content": "hello"}, "finish_reason": "stop"}],
            "usage": {"completion_tokens": 7}})

    monkeypatch.setenv("TEST_KEY", "secret")
    ep = ModelEndpoint(base_url="http://model/v1/", model_name="m", api_key_env="TEST_KEY",
                       extra_params={"repetition_penalty": 1.05})
    (inst,) = _instances(1)
    comp = HttpResponder(ep, httpx.MockTransport(handler)).respond(inst, build_prompt(inst))
    assert comp == Completion("hello", 7, "stop")
    assert captured["url"] == "http://model/v1/chat/completions"
    assert captured["auth"] == "Bearer secret"
    body = captured["body"]
    assert body["temperature"] == 0.7 and body["top_p"] == 0.8
    assert body["max_tokens"] == 8192 and body["repetition_penalty"] == 1.05


@pytest.mark.parametrize("response", [
    httpx.Response(500, text="oops"),
    httpx.Response(200, json={"choices": []}),
    httpx.Response(200, text="not json"),
])
def test_chat_request_errors(response):
    transport = httpx.MockTransport(lambda request: response)
    with httpx.Client(transport=transport) as client:
        with pytest.raises(EndpointError):
            chat_request(ModelEndpoint(base_url="http://m"), [], client)


def test_replay_records_then_serves(tmp_path):
    path = tmp_path / "replay.jsonl"
    live = Flaky(0)
    insts = _instances(3)
    first = run_batch(insts, ReplayResponder(path, live), parallelism=4)
    assert sum(live.calls.values()) == 3
    offline = ReplayResponder(path)
    second = run_batch(insts, offline, parallelism=4)
    assert [r.output_text for r in first] == [r.output_text for r in second]
    extra = _instances(4)[3]
    with pytest.raises(EndpointError):
        offline.respond(extra, build_prompt(extra))


def test_oracle_respond_every_kind(small_dataset):
    kinds = {inst.task_kind for inst in small_dataset}
    assert kinds == set(TaskKind)
    for inst in small_dataset:
        assert oracle_respond(inst).strip()
