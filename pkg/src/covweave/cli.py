"""Command line interface: ``covweave generate|run|score|stability|report``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from .core import TaskKind, Tier
from .harness import (DATASET_FILE, REPORT_FILE, RESULTS_FILE, SCORES_FILE,
                      STABILITY_RESAMPLES, STABILITY_SIZES, GenerationError, RunConfig,
                      cmd_generate, cmd_report, cmd_run, cmd_score, cmd_stability,
                      load_scores)
from .runner import (DEFAULT_PARALLELISM, HttpResponder, ModelEndpoint,
                     OracleResponder, ReplayResponder)
from .scoring import EndpointClient, LlmJudge, MockJudge, ReplayClient


def _csv(kind: type) -> Any:
    def parse(text: str) -> list:
        try:
            return [kind(x.strip()) for x in text.split(",") if x.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc
    return parse


def _load_mapping(path: str) -> dict[str, Any]:
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith((".yaml", ".yml")):
        import yaml

        return yaml.safe_load(text) or {}
    return json.loads(text)


def build_config(args: argparse.Namespace) -> RunConfig:
    data = _load_mapping(args.config) if getattr(args, "config", None) else {}
    cfg = RunConfig.from_dict(data)
    if getattr(args, "tasks", None):
        cfg.tasks = args.tasks
    if getattr(args, "tiers", None):
        cfg.tiers = args.tiers
    if getattr(args, "n", None) is not None:
        cfg.samples_per_variant = args.n
    if getattr(args, "seed", None) is not None:
        cfg.base_seed = args.seed
    if getattr(args, "out", None):
        cfg.output_dir = args.out
    if getattr(args, "parallelism", None) is not None:
        cfg.parallelism = args.parallelism
    if getattr(args, "no_exec", False):
        cfg.execute = False
    if getattr(args, "relation_map", None):
        cfg.relation_map = args.relation_map
    if getattr(args, "judge_replay", None):
        cfg.judge_replay = args.judge_replay
    cfg.__post_init__()
    return cfg


def _endpoint(spec: Optional[str], cfg: RunConfig) -> Optional[ModelEndpoint]:
    if spec and spec != "oracle":
        return ModelEndpoint.from_dict(_load_mapping(spec))
    if not spec and cfg.endpoint:
        return ModelEndpoint.from_dict(cfg.endpoint)
    return None


def _judge(args: argparse.Namespace, cfg: RunConfig):
    spec = getattr(args, "judge", None)
    replay = cfg.judge_replay
    if spec == "mock" or (not spec and not cfg.judge and not replay):
        return MockJudge()
    live = None
    if spec:
        live = EndpointClient(ModelEndpoint.from_dict(_load_mapping(spec)))
    elif cfg.judge:
        live = EndpointClient(ModelEndpoint.from_dict(cfg.judge))
    client = ReplayClient(replay, live) if replay else live
    return LlmJudge(client)


def _run_dir(cfg: RunConfig) -> Path:
    return Path(cfg.output_dir)


def do_generate(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    try:
        path = cmd_generate(cfg, args.dataset)
    except GenerationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {path}")
    return 0


def do_run(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    run_dir = _run_dir(cfg)
    dataset = Path(args.dataset or run_dir / DATASET_FILE)
    results = Path(args.results or run_dir / RESULTS_FILE)
    endpoint = _endpoint(args.endpoint, cfg)
    if endpoint is None:
        responder: Any = OracleResponder()
    else:
        responder = HttpResponder(endpoint)
    if args.replay:
        responder = ReplayResponder(args.replay, None if args.replay_only else responder)
    cmd_run(dataset, responder, results, endpoint, cfg.parallelism)
    print(f"wrote {results}")
    return 0


def do_score(args: argparse.Namespace) -> int:
    cfg = build_config(args)
    run_dir = _run_dir(cfg)
    dataset = Path(args.dataset or run_dir / DATASET_FILE)
    results = Path(args.results or run_dir / RESULTS_FILE)
    scores = Path(args.scores or run_dir / SCORES_FILE)
    report = Path(args.report or run_dir / REPORT_FILE)
    table = cmd_score(dataset, results, scores, _judge(args, cfg), execute=cfg.execute,
                      report=report, fabrication_probe=args.fabrication_probe)
    print(table.to_text(), end="")
    return 0


def do_stability(args: argparse.Namespace) -> int:
    scores = load_scores(args.scores)
    try:
        rep = cmd_stability(scores, args.sizes, args.resamples, args.seed or 0)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(rep.to_dict(), indent=2) if args.json else rep.to_markdown(), end="")
    return 0


def do_report(args: argparse.Namespace) -> int:
    print(cmd_report(args.scores, markdown=not args.text), end="")
    return 0


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="covweave",
                                description="Constraint-verifier long-output benchmark.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help="run config (JSON or YAML)")
        sp.add_argument("--tasks", type=_csv(TaskKind),
                        help="comma-separated subset of CF,BioG,SR,NW,KVG,SMS,PR")
        sp.add_argument("--tiers", type=_csv(Tier), help="comma-separated subset of "
                        "T1k,T2k,T4k,T8k")
        sp.add_argument("--n", type=int, help="samples per (task, tier)")
        sp.add_argument("--seed", type=int, help="base seed")
        sp.add_argument("--out", help="run directory")

    g = sub.add_parser("generate", help="write dataset.jsonl")
    common(g)
    g.add_argument("--dataset", help="output path (default: <out>/dataset.jsonl)")
    g.add_argument("--relation-map", help="BioG relation/template tables (JSON) "
                   "replacing the shipped defaults")
    g.set_defaults(func=do_generate)

    r = sub.add_parser("run", help="generate model outputs (resumable)")
    common(r)
    r.add_argument("--dataset")
    r.add_argument("--results")
    r.add_argument("--endpoint", help="endpoint config file, or 'oracle' (default)")
    r.add_argument("--parallelism", type=int, default=None,
                   help=f"in-flight requests (default {DEFAULT_PARALLELISM})")
    r.add_argument("--replay", help="transcript file; misses go to the endpoint and "
                   "are recorded")
    r.add_argument("--replay-only", action="store_true",
                   help="serve only recorded transcripts")
    r.set_defaults(func=do_run)

    s = sub.add_parser("score", help="score results and write report.md")
    common(s)
    s.add_argument("--dataset")
    s.add_argument("--results")
    s.add_argument("--scores")
    s.add_argument("--report")
    s.add_argument("--judge", help="judge endpoint config file, or 'mock' (default)")
    s.add_argument("--judge-replay", help="recorded judge responses (JSONL)")
    s.add_argument("--no-exec", action="store_true",
                   help="do not execute CF programs; runnability is skipped")
    s.add_argument("--fabrication-probe", action="store_true",
                   help="log a judge count of unsupported BioG claims (not scored)")
    s.set_defaults(func=do_score)

    st = sub.add_parser("stability", help="bootstrap mean±std by subsample size")
    st.add_argument("--scores", required=True)
    st.add_argument("--sizes", type=_csv(int), default=list(STABILITY_SIZES))
    st.add_argument("--resamples", type=int, default=STABILITY_RESAMPLES)
    st.add_argument("--seed", type=int, default=0)
    st.add_argument("--json", action="store_true")
    st.set_defaults(func=do_stability)

    rp = sub.add_parser("report", help="aggregate table from scores.jsonl")
    rp.add_argument("--scores", required=True)
    rp.add_argument("--text", action="store_true", help="plain text instead of Markdown")
    rp.set_defaults(func=do_report)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
