"""Command-line interface: batch parsing, scoring, curation, simulation, serving.

Exit codes: 0 success, 1 domain failure (validation found problems),
2 usage or IO error.  Configuration precedence everywhere is
flags > environment > config file > built-in defaults; every subcommand
accepts --print-config to show the merged effective configuration and exit.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import __version__
from .curation import (
    CurationRecord,
    HardVerdict,
    QualityScore,
    QualityWeights,
    SamplerConfig,
    run_pipeline,
    sft_record,
)
from .jsonl import dumps, iter_jsonl, write_jsonl
from .metrics import cover_exact_match, exact_match, token_f1
from .retrieval import Bm25Index, CorpusDoc
from .rewards import RewardConfig, composite_reward
from .simulate import QAItem, build_fixture, hacking_demo
from .trajectory import (
    RawRollout,
    StructuralError,
    parse_text,
    token_budget_stats,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2


def _load_json_file(path: str, what: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ValueError(f"{what} file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"{what} file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ValueError(f"{what} file {path} must contain a JSON object")
    return data


def _env_config_sections() -> dict:
    path = os.environ.get("PLSEARCH_CONFIG")
    if not path:
        return {}
    return _load_json_file(path, "PLSEARCH_CONFIG")


def _resolve_reward_config(args) -> RewardConfig:
    if getattr(args, "config", None):
        return RewardConfig.from_dict(_load_json_file(args.config, "reward config"))
    section = _env_config_sections().get("reward")
    return RewardConfig.from_dict(section) if section else RewardConfig()


def _resolve_weights(args) -> QualityWeights:
    if getattr(args, "weights", None):
        data = _load_json_file(args.weights, "quality weights")
        return QualityWeights.from_dict(data.get("weights", data))
    section = _env_config_sections().get("weights")
    return QualityWeights.from_dict(section) if section else QualityWeights()


def _resolve_sampler(args) -> SamplerConfig | None:
    if getattr(args, "sampler", None):
        data = _load_json_file(args.sampler, "sampler config")
        return SamplerConfig.from_dict(data.get("sampler", data))
    section = _env_config_sections().get("sampler")
    return SamplerConfig.from_dict(section) if section else None


def _maybe_print_config(args, effective: dict) -> bool:
    if getattr(args, "print_config", False):
        print(json.dumps(effective, indent=2, sort_keys=True))
        return True
    return False


def _iter_rollouts(path: str):
    """Stream rollouts from a JSONL file, enforcing unique ids."""
    seen: set[str] = set()
    for index, data in enumerate(iter_jsonl(path), start=1):
        try:
            raw = RawRollout.from_dict(data)
        except ValueError as exc:
            raise ValueError(f"{path}: record {index}: {exc}") from None
        if raw.id in seen:
            raise ValueError(f"{path}: record {index}: duplicate rollout id {raw.id!r}")
        seen.add(raw.id)
        yield raw


# ---------------------------------------------------------------------------
# Subcommands


def cmd_parse(args) -> int:
    if _maybe_print_config(args, {"in": args.infile, "mode": args.mode, "out": args.out}):
        return EXIT_OK
    count = 0
    failures = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for raw in _iter_rollouts(args.infile):
            count += 1
            error = None
            try:
                parse_text(raw.output_text, "strict")
                valid = True
            except StructuralError as exc:
                valid = False
                failures += 1
                error = {"rule": exc.rule, "offset": exc.offset, "message": exc.message}
            row = {"id": raw.id, "strict_valid": valid, "error": error}
            if args.mode == "lenient":
                lenient = parse_text(raw.output_text, "lenient")
                row["diagnostics"] = [d.to_dict() for d in lenient.parse_diagnostics]
            out.write(dumps(row) + "\n")
    if count == 0:
        print("warning: zero records in input", file=sys.stderr)
    return EXIT_OK if failures == 0 else EXIT_DOMAIN


def cmd_score(args) -> int:
    cfg = _resolve_reward_config(args)
    if _maybe_print_config(args, {"reward": cfg.to_dict(), "in": args.infile, "out": args.out}):
        return EXIT_OK
    count = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for raw in _iter_rollouts(args.infile):
            count += 1
            traj = parse_text(raw.output_text, "lenient")
            breakdown = composite_reward(traj, raw.golden_answers, cfg)
            out.write(dumps({"id": raw.id, **breakdown.to_dict()}) + "\n")
    if count == 0:
        print("warning: zero records in input", file=sys.stderr)
    return EXIT_OK


def cmd_filter(args) -> int:
    weights = _resolve_weights(args)
    sampler = _resolve_sampler(args)
    effective = {
        "weights": weights.to_dict(),
        "sampler": sampler.to_dict() if sampler else None,
        "in": args.infile,
        "out": args.out,
        "report": args.report,
    }
    if _maybe_print_config(args, effective):
        return EXIT_OK
    rollouts = list(_iter_rollouts(args.infile))
    result = run_pipeline(rollouts, weights, sampler)
    with open(args.out, "w", encoding="utf-8") as out:
        for rec in result.selected:
            out.write(
                dumps(
                    {
                        **rec.raw.to_dict(),
                        "bucket": rec.bucket,
                        "n_search": len(rec.traj.search_queries()),
                        "quality": rec.quality.to_dict() if rec.quality else None,
                    }
                )
                + "\n"
            )
    with open(args.report, "w", encoding="utf-8") as out:
        out.write(json.dumps(result.report, indent=2, sort_keys=True) + "\n")
    if result.report["supply_exhausted"]:
        print(
            f"warning: supply exhausted, selected {result.report['selected']} "
            f"of target {result.report['target_count']}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_export_sft(args) -> int:
    if _maybe_print_config(args, {"in": args.infile, "out": args.out}):
        return EXIT_OK
    count = 0
    with open(args.out, "w", encoding="utf-8") as out:
        for index, data in enumerate(iter_jsonl(args.infile), start=1):
            raw = RawRollout.from_dict(data)
            try:
                traj = parse_text(raw.output_text, "strict")
            except StructuralError as exc:
                print(f"error: record {raw.id!r} is not strictly valid: {exc}", file=sys.stderr)
                return EXIT_DOMAIN
            quality = (
                QualityScore(**data["quality"]) if isinstance(data.get("quality"), dict) else None
            )
            record = CurationRecord(
                raw=raw,
                traj=traj,
                hard_verdict=HardVerdict(format_ok=True, cover_em_ok=True),
                quality=quality,
                bucket=data.get("bucket"),
                selected=True,
            )
            out.write(dumps(sft_record(record)) + "\n")
            count += 1
    if count == 0:
        print("warning: exported an empty SFT dataset", file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    known = {"em", "f1", "cem"}
    unknown = set(metrics) - known
    if unknown:
        raise ValueError(f"unknown metrics: {sorted(unknown)}; choose from {sorted(known)}")
    if _maybe_print_config(
        args, {"pred": args.pred, "gold": args.gold, "metrics": metrics, "out": args.out}
    ):
        return EXIT_OK
    golds = {}
    for data in iter_jsonl(args.gold):
        golds[str(data["id"])] = [str(g) for g in data["golden_answers"]]
    totals = {m: 0.0 for m in metrics}
    count = 0
    for data in iter_jsonl(args.pred):
        pid = str(data["id"])
        if pid not in golds:
            raise ValueError(f"prediction id {pid!r} has no gold entry")
        prediction = str(data["prediction"])
        gold = golds[pid]
        count += 1
        if "em" in totals:
            totals["em"] += exact_match(prediction, gold)
        if "f1" in totals:
            totals["f1"] += max(token_f1(prediction, g) for g in gold)
        if "cem" in totals:
            totals["cem"] += cover_exact_match(prediction, gold)
    if count == 0:
        raise ValueError("no predictions to evaluate")
    report = {"count": count, **{m: totals[m] / count for m in metrics}}
    with open(args.out, "w", encoding="utf-8") as out:
        out.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _resolve_reward_config(args)
    effective = {
        "seed": args.seed,
        "items": args.items,
        "corpus_size": args.corpus_size,
        "demo": args.demo,
        "reward": cfg.to_dict(),
        "corpus": args.corpus,
        "qa_items": args.qa_items,
        "out": args.out,
    }
    if _maybe_print_config(args, effective):
        return EXIT_OK
    if args.corpus or args.qa_items:
        if not (args.corpus and args.qa_items):
            raise ValueError("--corpus and --qa-items must be given together")
        corpus = [CorpusDoc.from_dict(d) for d in iter_jsonl(args.corpus)]
        items = [QAItem.from_dict(d) for d in iter_jsonl(args.qa_items)]
    else:
        corpus, items = build_fixture(args.seed, args.items, args.corpus_size)
    if args.dump_corpus:
        write_jsonl(args.dump_corpus, [d.to_dict() for d in corpus])
    if args.dump_items:
        write_jsonl(args.dump_items, [i.to_dict() for i in items])
    index = Bm25Index(corpus)
    report = hacking_demo(items, index, cfg, seed=args.seed)
    with open(args.out, "w", encoding="utf-8") as out:
        out.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_stats(args) -> int:
    if _maybe_print_config(args, {"in": args.infile, "out": args.out}):
        return EXIT_OK
    count = 0

    def stream():
        nonlocal count
        for raw in _iter_rollouts(args.infile):
            count += 1
            yield parse_text(raw.output_text, "lenient")

    stats = token_budget_stats(stream())
    report = {"n_trajectories": count, **stats}
    with open(args.out, "w", encoding="utf-8") as out:
        out.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .service import DEFAULT_ADDR, serve

    addr = args.addr or os.environ.get("PLSEARCH_ADDR", DEFAULT_ADDR)
    max_batch = args.max_batch
    if max_batch is None:
        max_batch = int(os.environ.get("PLSEARCH_MAX_BATCH", 512))
    config_path = args.config or os.environ.get("PLSEARCH_CONFIG") or None
    if _maybe_print_config(
        args, {"addr": addr, "max_batch": max_batch, "config": config_path}
    ):
        return EXIT_OK
    serve(addr, max_batch=max_batch, config_path=config_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plsearch",
        description="Score, filter, and export plan-structured retrieval rollouts.",
    )
    parser.add_argument("--version", action="version", version=f"plsearch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_print_config(p):
        p.add_argument(
            "--print-config",
            action="store_true",
            help="print the merged effective configuration and exit",
        )

    p = sub.add_parser("parse", help="validate rollout structure, dump diagnostics")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--mode", choices=["strict", "lenient"], default="strict")
    p.add_argument("--out", required=True)
    add_print_config(p)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("score", help="compute reward breakdowns per rollout")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--config", help="reward config JSON file")
    p.add_argument("--out", required=True)
    add_print_config(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("filter", help="run the curation pipeline")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--weights", help="quality weights JSON file")
    p.add_argument("--sampler", help="sampler config JSON file")
    p.add_argument("--out", required=True, help="selected records JSONL")
    p.add_argument("--report", required=True, help="curation report JSON")
    add_print_config(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("export-sft", help="export selected records as SFT data")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    add_print_config(p)
    p.set_defaults(func=cmd_export_sft)

    p = sub.add_parser("eval", help="EM/F1/cover-EM over prediction files")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--metrics", default="em,f1,cem")
    p.add_argument("--out", required=True)
    add_print_config(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="run the scripted-policy reward-hacking demo")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--items", type=int, default=8)
    p.add_argument("--corpus-size", type=int, default=48)
    p.add_argument("--demo", choices=["hacking"], default="hacking")
    p.add_argument("--config", help="reward config JSON file")
    p.add_argument("--corpus", help="load corpus docs from JSONL instead of generating")
    p.add_argument("--qa-items", dest="qa_items", help="load QA items from JSONL instead of generating")
    p.add_argument("--dump-corpus", help="write the corpus docs as JSONL")
    p.add_argument("--dump-items", help="write the QA items as JSONL")
    p.add_argument("--out", required=True)
    add_print_config(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("stats", help="token budget fractions per component")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    add_print_config(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve", help="run the HTTP scoring service")
    p.add_argument("--addr", help="host:port (default PLSEARCH_ADDR or 127.0.0.1:8080)")
    p.add_argument("--max-batch", type=int, help="max rollouts per request")
    p.add_argument("--config", help="combined config JSON file")
    add_print_config(p)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
