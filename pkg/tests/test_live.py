"""Smoke test against a real chat-completions endpoint.

Skipped unless COVWEAVE_LIVE_CONFIG names an endpoint config file (JSON or
YAML with ModelEndpoint fields).
"""

import json
import os

import pytest

from covweave.core import AttributeSeed, TaskKind, Tier
from covweave.harness import generate_instance
from covweave.runner import HttpResponder, ModelEndpoint, run_batch
from covweave.scoring import score_instance

CONFIG = os.environ.get("COVWEAVE_LIVE_CONFIG")

pytestmark = [pytest.mark.live,
              pytest.mark.skipif(not CONFIG, reason="COVWEAVE_LIVE_CONFIG not set")]


def _endpoint():
    with open(CONFIG, encoding="utf-8") as fh:
        text = fh.read()
    if CONFIG.endswith((".yaml", ".yml")):
        import yaml
        return ModelEndpoint.from_dict(yaml.safe_load(text))
    return ModelEndpoint.from_dict(json.loads(text))


def test_live_kv_round_trip():
    inst = generate_instance(AttributeSeed(TaskKind.KVG, Tier.T1k, 1))
    (res,) = run_batch([inst], HttpResponder(_endpoint()), _endpoint(), parallelism=1)
    assert res.error is None and res.output_text
    score = score_instance(inst, res)
    assert 0.0 <= score.final <= 1.0
