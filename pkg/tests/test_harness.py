import json

import pytest

from covweave.cli import main
from covweave.core import TaskKind, TaskScore, Tier
from covweave.harness import (RunConfig, cmd_generate, cmd_report, cmd_run, cmd_score,
                              cmd_stability, load_dataset, load_results, load_scores,
                              read_jsonl, write_jsonl)
from covweave.runner import CallableResponder, OracleResponder, oracle_respond

FAST_TASKS = [TaskKind.KVG, TaskKind.SMS, TaskKind.PR]


class CountingOracle:
    def __init__(self):
        self.calls = 0

    def respond(self, instance, prompt):
        self.calls += 1
        return OracleResponder().respond(instance, prompt)


@pytest.fixture()
def fast_config(tmp_path):
    return RunConfig(tasks=FAST_TASKS, tiers=[Tier.T1k, Tier.T2k], samples_per_variant=3,
                     base_seed=11, output_dir=str(tmp_path / "run"))


def test_generate_counts_and_is_byte_identical(fast_config, tmp_path):
    a = cmd_generate(fast_config, tmp_path / "a.jsonl")
    b = cmd_generate(fast_config, tmp_path / "b.jsonl")
    assert a.read_bytes() == b.read_bytes()
    insts = load_dataset(a)
    assert len(insts) == 3 * 2 * 3
    assert len({i.id for i in insts}) == len(insts)


def test_run_resumes_without_new_requests(fast_config, tmp_path):
    ds = cmd_generate(fast_config, tmp_path / "ds.jsonl")
    insts = load_dataset(ds)
    fresh = tmp_path / "fresh.jsonl"
    cmd_run(ds, OracleResponder(), fresh)
    # Simulate an interrupted run: the first 5 results plus a torn final line.
    results = tmp_path / "results.jsonl"
    lines = fresh.read_text().splitlines(keepends=True)
    results.write_text("".join(lines[:5]) + '{"instance_id": "tor')
    counter = CountingOracle()
    cmd_run(ds, counter, results, parallelism=4)
    assert counter.calls == len(insts) - 5
    assert [r.instance_id for r in load_results(results)] == [i.id for i in insts]
    again = CountingOracle()
    cmd_run(ds, again, results)
    assert again.calls == 0

    def strip(path):
        return [{k: v for k, v in r.items() if k != "latency_ms"} for r in read_jsonl(path)]

    # Same final file as an uninterrupted run, latency aside.
    assert strip(results) == strip(fresh)


def test_parallelism_does_not_change_results(fast_config, tmp_path):
    ds = cmd_generate(fast_config, tmp_path / "ds.jsonl")
    outs = []
    for p in (1, 4, 16):
        path = tmp_path / f"r{p}.jsonl"
        cmd_run(ds, CallableResponder(oracle_respond), path, parallelism=p)
        outs.append([(r["instance_id"], r["output_text"]) for r in read_jsonl(path)])
    assert outs[0] == outs[1] == outs[2]


def test_score_with_empty_results_warns(fast_config, tmp_path):
    ds = cmd_generate(fast_config, tmp_path / "ds.jsonl")
    table = cmd_score(ds, tmp_path / "none.jsonl", tmp_path / "scores.jsonl",
                      report=tmp_path / "report.md")
    assert table.overall == 0.0 and table.missing == 18
    assert "18 instance(s) had no result" in (tmp_path / "report.md").read_text()
    scores = load_scores(tmp_path / "scores.jsonl")
    assert all(s.diagnostics.get("missing_result") for s in scores)


def test_oracle_pipeline_scores_100(fast_config, tmp_path):
    ds = cmd_generate(fast_config, tmp_path / "ds.jsonl")
    cmd_run(ds, OracleResponder(), tmp_path / "r.jsonl")
    table = cmd_score(ds, tmp_path / "r.jsonl", tmp_path / "s.jsonl")
    assert table.overall == 100.0
    assert "100.00" in cmd_report(tmp_path / "s.jsonl")


def test_pipeline_scores_are_deterministic(fast_config, tmp_path):
    ds = cmd_generate(fast_config, tmp_path / "ds.jsonl")
    texts = []
    for name in ("a", "b"):
        cmd_run(ds, OracleResponder(), tmp_path / f"r{name}.jsonl")
        cmd_score(ds, tmp_path / f"r{name}.jsonl", tmp_path / f"s{name}.jsonl")
        texts.append((tmp_path / f"s{name}.jsonl").read_bytes())
    assert texts[0] == texts[1]


def test_hand_fixture_table(tmp_path):
    """Four scores with hand-computed cell, task, tier and overall values."""
    rows = [("KVG", "T1k", 1.0), ("KVG", "T1k", 0.5), ("KVG", "T2k", 0.25),
            ("PR", "T1k", 0.0)]
    scores = [TaskScore.build(f"i{n}", TaskKind(k), Tier(t), [("m", v)])
              for n, (k, t, v) in enumerate(rows)]
    path = tmp_path / "s.jsonl"
    write_jsonl(path, (s.to_dict() for s in scores))
    text = cmd_report(path)
    # Cells: KVG/T1k 75, KVG/T2k 25, PR/T1k 0.  KVG task: mean(1, .5, .25)=58.33.
    # T1k: mean(75, 0)=37.5; T2k: 25.  Overall: mean(75, 25, 0)=33.33.
    assert "| KVG | 75.00 | 25.00 | 58.33 |" in text
    assert "| PR | 0.00 | - | 0.00 |" in text
    assert "| Avg | 37.50 | 25.00 | 33.33 |" in text


def _scores(values, kinds=(TaskKind.KVG, TaskKind.PR)):
    return [TaskScore.build(f"{k.value}{i}", k, Tier.T1k, [("m", v)])
            for k in kinds for i, v in enumerate(values)]


def test_stability_constant_scores_have_zero_spread():
    rep = cmd_stability(_scores([0.4] * 50), sizes=[10, 50], resamples=5)
    assert rep.rows["Overall"][10] == pytest.approx((0.4, 0.0))
    assert rep.rows["Overall"][50][1] == 0.0


def test_stability_full_sample_is_degenerate():
    values = [i / 40 for i in range(40)]
    rep = cmd_stability(_scores(values), sizes=[40], resamples=7)
    mean, std = rep.rows["KVG"][40]
    assert std == pytest.approx(0.0, abs=1e-12)
    assert mean == pytest.approx(sum(values) / 40)
    assert "Overall" in rep.to_markdown()


def test_stability_insufficient_samples():
    with pytest.raises(ValueError, match="insufficient samples"):
        cmd_stability(_scores([0.1] * 5), sizes=[10])
    with pytest.raises(ValueError):
        cmd_stability([], sizes=[1])


def test_run_config_validation_and_yaml(tmp_path):
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        RunConfig(samples_per_variant=0)
    with pytest.raises(ValueError):
        RunConfig(knobs={"XYZ": {}})
    with pytest.raises(ValueError):
        RunConfig(tasks=["NOPE"])
    path = tmp_path / "cfg.yaml"
    path.write_text("tasks: [KVG, PR]\ntiers: [T1k]\nsamples_per_variant: 2\n"
                    "knobs:\n  KVG:\n    key_length: 16\n")
    cfg = RunConfig.load(path)
    assert cfg.tasks == [TaskKind.KVG, TaskKind.PR]
    seeds = list(cfg.seeds())
    assert len(seeds) == 4 and seeds[0].knobs["key_length"] == 16
    assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_cli_end_to_end(tmp_path, capsys):
    out = str(tmp_path / "run")
    common = ["--tasks", "KVG,PR", "--tiers", "T1k", "--n", "2", "--out", out]
    assert main(["generate", *common]) == 0
    assert main(["run", *common, "--parallelism", "2"]) == 0
    assert main(["score", *common, "--no-exec"]) == 0
    assert "100.00" in capsys.readouterr().out
    assert main(["report", "--scores", f"{out}/scores.jsonl", "--text"]) == 0
    assert "KVG" in capsys.readouterr().out
    assert main(["stability", "--scores", f"{out}/scores.jsonl", "--sizes", "1,2",
                 "--resamples", "3", "--json"]) == 0
    assert json.loads(capsys.readouterr().out)["sizes"] == [1, 2]
    assert main(["stability", "--scores", f"{out}/scores.jsonl", "--sizes", "5"]) == 1


def test_cli_replay_only_round_trip(tmp_path, capsys):
    out = str(tmp_path / "run")
    common = ["--tasks", "KVG", "--tiers", "T1k", "--n", "2", "--out", out]
    replay = str(tmp_path / "replay.jsonl")
    main(["generate", *common])
    assert main(["run", *common, "--replay", replay]) == 0
    first = (tmp_path / "run" / "results.jsonl").read_text()
    (tmp_path / "run" / "results.jsonl").unlink()
    assert main(["run", *common, "--replay", replay, "--replay-only"]) == 0
    second = (tmp_path / "run" / "results.jsonl").read_text()
    strip = [{k: v for k, v in r.items() if k != "latency_ms"}
             for r in map(json.loads, first.splitlines())]
    assert strip == [{k: v for k, v in r.items() if k != "latency_ms"}
                     for r in map(json.loads, second.splitlines())]


def test_cli_relation_map_override(tmp_path):
    from importlib import resources

    data = json.loads(resources.files("covweave.data").joinpath("kg_relations.json")
                      .read_text(encoding="utf-8"))
    data["version"] = "custom-7"
    rmap = tmp_path / "relations.json"
    rmap.write_text(json.dumps(data))
    out = str(tmp_path / "run")
    assert main(["generate", "--tasks", "BioG", "--tiers", "T1k", "--n", "1",
                 "--out", out, "--relation-map", str(rmap)]) == 0
    (inst,) = load_dataset(f"{out}/dataset.jsonl")
    assert inst.meta["relation_map_version"] == "custom-7"
