"""Command line entry points.

Subcommands:

    score     score a JSONL file of rollouts against a JSONL file of keys
    serve     run the HTTP scoring service
    simulate  train the toy policy and emit a JSONL learning curve
    clean     run the dataset cleaning pipeline over a raw JSONL corpus
    distill   run key-information distillation over a question corpus

Exit codes: 0 success, 2 configuration error, 3 input error, 4 runtime
abort (fully filtered training batch, port already bound). One --seed
drives every random draw of a subcommand.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import signal
import sys
from typing import Optional, Sequence

from . import __version__
from .config import EngineConfig, canonical_dumps, load_engine_config
from .pipeline.cleaning import (
    CleaningConfig,
    RawRecord,
    clean_dataset,
    records_to_jsonl,
)
from .pipeline.clients import ExternalClients
from .pipeline.distill import DistillConfig, DistillItem, distill
from .rewards import ConfigError
from .service import RewardService, score_batch
from .simulate import (
    KeyFactWorld,
    SimulationConfig,
    simulate_training,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INPUT = 3
EXIT_RUNTIME = 4


class InputError(Exception):
    """Unreadable or structurally broken input file."""


def _read_jsonl(path: str) -> list[tuple[int, Optional[dict], Optional[str]]]:
    """Lines as (line_number, record, error); bad lines carry the error."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw_lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    out = []
    for number, line in enumerate(raw_lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if not isinstance(record, dict):
                raise ValueError("line is not a JSON object")
            out.append((number, record, None))
        except ValueError as exc:
            out.append((number, None, str(exc)))
    return out


def _write_text(path: Optional[str], text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _parse_listen(listen: str) -> tuple[str, int]:
    host, sep, port = listen.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"--listen must be HOST:PORT, got {listen!r}")
    return host or "127.0.0.1", int(port)


def _cmd_score(args: argparse.Namespace) -> int:
    config = load_engine_config(args.config)
    keys_by_id: dict[str, dict] = {}
    if args.keys:
        for number, record, err in _read_jsonl(args.keys):
            if err is not None:
                raise InputError(f"{args.keys}:{number}: {err}")
            rid = record.get("id")
            if not isinstance(rid, str):
                raise InputError(f"{args.keys}:{number}: key record needs a string id")
            keys_by_id[rid] = record

    items = []
    quarantine_reasons: dict[int, str] = {}  # position -> reason
    for number, record, err in _read_jsonl(args.input):
        if err is not None:
            quarantine_reasons[len(items)] = f"line {number}: {err}"
            items.append(None)
            continue
        item = dict(record)
        ref = item.pop("item_id", None)
        if ref is not None:
            base = keys_by_id.get(ref)
            if base is None:
                quarantine_reasons[len(items)] = f"line {number}: unknown item_id {ref!r}"
                items.append(None)
                continue
            merged = {
                "gold_answer": base.get("gold_answer", base.get("answer")),
                "match_policy": base.get("match_policy", "normalized-exact"),
                "visual_keys": base.get("visual_keys", []),
                "textual_keys": base.get("textual_keys", []),
                "question": base.get("question", ""),
            }
            merged.update(item)
            item = merged
        items.append(item)

    live = [it for it in items if it is not None]
    results = score_batch(live, config)
    results_iter = iter(results)
    lines = []
    totals = []
    errors = 0
    for index, item in enumerate(items):
        if item is None:
            entry = {"index": index, "breakdown": None, "diagnostics": None,
                     "error": f"quarantined: {quarantine_reasons[index]}"}
        else:
            entry = dict(next(results_iter))
            entry["index"] = index
        if entry["error"] is not None:
            errors += 1
        else:
            totals.append(entry["breakdown"]["total"])
        lines.append(canonical_dumps(entry) + "\n")
    _write_text(args.output, "".join(lines))
    summary = {
        "items": len(items),
        "errors": errors,
        "mean_total": (sum(totals) / len(totals)) if totals else None,
        "config_hash": config.config_hash(),
    }
    if args.output not in (None, "-"):
        sys.stdout.write(canonical_dumps(summary) + "\n")
    return EXIT_OK


def _cmd_serve(args: argparse.Namespace) -> int:
    config = load_engine_config(args.config)
    host, port = _parse_listen(args.listen)
    try:
        service = RewardService(config, host=host, port=port)
    except OSError as exc:
        print(f"cannot bind {host}:{port}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    def _shutdown(signum, frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _shutdown)
    actual_host, actual_port = service.address
    print(
        f"scoring service v{__version__} on http://{actual_host}:{actual_port} "
        f"(config {service.config_hash[:12]})",
        file=sys.stderr,
    )
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        counters = service.counters
        service.shutdown()
        print(f"served {counters['batches']} batches, {counters['items']} items, "
              f"{counters['errors']} item errors", file=sys.stderr)
    return EXIT_OK


def _simulation_config(args: argparse.Namespace, engine: EngineConfig) -> SimulationConfig:
    cfg = SimulationConfig(seed=args.seed, updates=args.updates, reward=engine.reward)
    return cfg.ablated(no_vkey=args.no_vkey, no_tkey=args.no_tkey, no_cons=args.no_cons)


def _cmd_simulate(args: argparse.Namespace) -> int:
    engine = load_engine_config(args.config)
    cfg = _simulation_config(args, engine)
    env = KeyFactWorld.default()
    result = simulate_training(env, cfg)
    lines = [canonical_dumps(rec.to_dict()) + "\n" for rec in result.records]
    _write_text(args.output, "".join(lines))
    summary = {
        "updates": len(result.records),
        "final_accuracy": result.final_accuracy,
        "final_coverage": result.final_coverage,
        "final_consistency": result.final_consistency,
        "seed": args.seed,
    }
    if args.output not in (None, "-"):
        sys.stdout.write(canonical_dumps(summary) + "\n")
    if result.stopped_early:
        # The partial curve is still written; the exit code flags the stop.
        print(f"stopped early: {result.stop_reason}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_clean(args: argparse.Namespace) -> int:
    raw_records = []
    for number, record, err in _read_jsonl(args.input):
        if err is not None:
            raise InputError(f"{args.input}:{number}: {err}")
        try:
            raw_records.append(
                RawRecord(
                    record_id=str(record["id"]),
                    image_path=str(record.get("image_path", "")),
                    question=str(record["question"]),
                    original_cot=str(record.get("original_cot", "")),
                    original_answer=str(record.get("original_answer", "")),
                )
            )
        except KeyError as exc:
            raise InputError(f"{args.input}:{number}: missing field {exc}") from exc
    cfg = CleaningConfig(min_score=args.min_score, seed=args.seed,
                         sample_size=args.sample_size)
    clients = ExternalClients.mocks(seed=args.seed)
    passed, failed = clean_dataset(raw_records, clients, cfg)
    _write_text(args.output, records_to_jsonl(passed))
    if args.failed_output:
        _write_text(args.failed_output, records_to_jsonl(failed))
    summary = {"records": len(raw_records), "passed": len(passed), "failed": len(failed),
               "min_score": cfg.min_score}
    if args.output not in (None, "-"):
        sys.stdout.write(canonical_dumps(summary) + "\n")
    return EXIT_OK


def _cmd_distill(args: argparse.Namespace) -> int:
    items = []
    for number, record, err in _read_jsonl(args.input):
        if err is not None:
            raise InputError(f"{args.input}:{number}: {err}")
        try:
            items.append(
                DistillItem(
                    item_id=str(record["id"]),
                    question=str(record["question"]),
                    gold_answer=(
                        str(record["gold_answer"])
                        if record.get("gold_answer") is not None
                        else None
                    ),
                )
            )
        except KeyError as exc:
            raise InputError(f"{args.input}:{number}: missing field {exc}") from exc
    cfg = DistillConfig(seed=args.seed, n_per_teacher=args.samples_per_teacher,
                        budget=args.budget)
    clients = ExternalClients.mocks(seed=args.seed, teacher_count=args.teachers)
    records, summary = distill(items, clients, cfg)
    text = "".join(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n" for rec in records)
    _write_text(args.output, text)
    if args.output not in (None, "-"):
        sys.stdout.write(canonical_dumps(summary.to_dict()) + "\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perceptrl",
        description="Perception-grounded reward scoring, serving, and toy training.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_score = sub.add_parser("score", help="score rollouts from a JSONL file")
    p_score.add_argument("--config", default=None, help="engine config JSON")
    p_score.add_argument("--input", required=True, help="rollout JSONL")
    p_score.add_argument("--keys", default=None, help="key-set JSONL joined on item_id")
    p_score.add_argument("--output", default=None, help="per-item JSONL (default stdout)")
    p_score.set_defaults(func=_cmd_score)

    p_serve = sub.add_parser("serve", help="run the HTTP scoring service")
    p_serve.add_argument("--config", default=None, help="engine config JSON")
    p_serve.add_argument("--listen", default="127.0.0.1:8731", help="HOST:PORT")
    p_serve.set_defaults(func=_cmd_serve)

    p_sim = sub.add_parser("simulate", help="train the toy policy")
    p_sim.add_argument("--config", default=None, help="engine config JSON")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--updates", type=int, default=500)
    p_sim.add_argument("--output", default=None, help="learning-curve JSONL (default stdout)")
    p_sim.add_argument("--no-vkey", action="store_true", help="zero the visual key reward")
    p_sim.add_argument("--no-tkey", action="store_true", help="zero the textual key reward")
    p_sim.add_argument("--no-cons", action="store_true", help="zero the consistency reward")
    p_sim.set_defaults(func=_cmd_simulate)

    p_clean = sub.add_parser("clean", help="clean a raw JSONL corpus")
    p_clean.add_argument("--config", default=None, help="unused; kept for symmetry")
    p_clean.add_argument("--input", required=True, help="raw records JSONL")
    p_clean.add_argument("--output", default=None, help="passed records JSONL (default stdout)")
    p_clean.add_argument("--failed-output", default=None, help="failed records JSONL")
    p_clean.add_argument("--seed", type=int, default=0)
    p_clean.add_argument("--min-score", type=float, default=0.9)
    p_clean.add_argument("--sample-size", type=int, default=None)
    p_clean.set_defaults(func=_cmd_clean)

    p_dist = sub.add_parser("distill", help="distill key info from teachers")
    p_dist.add_argument("--config", default=None, help="unused; kept for symmetry")
    p_dist.add_argument("--input", required=True, help="question corpus JSONL")
    p_dist.add_argument("--output", default=None, help="distilled JSONL (default stdout)")
    p_dist.add_argument("--seed", type=int, default=0)
    p_dist.add_argument("--teachers", type=int, default=2)
    p_dist.add_argument("--samples-per-teacher", type=int, default=4)
    p_dist.add_argument("--budget", type=int, default=6)
    p_dist.set_defaults(func=_cmd_distill)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
