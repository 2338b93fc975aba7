"""Experiment runner CLI: `run`, `bounds`, and `replay` subcommands.

Exit codes are the machine contract: 0 clean, 1 configuration/parse error,
2 protocol or transcript violation, 3 equilibrium verdict failure on at
least one run.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

from . import analysis
from .accounting import u_min_max
from .adversary import is_otx_respecting
from .config import load_params_file, load_spec
from .engine import Engine, ExecutionConfig, measure_statistics
from .errors import ConfigError, ProtocolViolation
from .transcript import ExecutionTranscript, validate_transcript

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_VIOLATION = 2
EXIT_VERDICT = 3

CSV_COLUMNS = [
    "strategy", "seed", "u_min", "u_max", "fruits_mined", "block_rounds",
    "payment_rounds", "otx_respecting", "evp_verdict", "transcript_digest",
]


def _run_one(args: tuple) -> dict:
    spec, strategy_idx, seed, dump_dir = args
    strategy = spec.strategies[strategy_idx]
    cfg = ExecutionConfig(
        params=spec.base.params,
        mode=spec.base.mode,
        seed=seed,
        strategy=strategy if (strategy.corrupted or strategy.deviations) else None,
        leader=spec.base.leader,
        activation=spec.base.activation,
        tx_rate=spec.base.tx_rate,
        payment_only_records=spec.base.payment_only_records,
    )
    transcript = Engine(cfg).run()
    stats = measure_statistics(transcript)
    report = u_min_max(transcript, crediting=spec.crediting)
    row = {
        "strategy": strategy.name,
        "seed": seed,
        "u_min": str(report.u_min),
        "u_max": str(report.u_max),
        "fruits_mined": stats.fruits_mined,
        "block_rounds": stats.block_rounds,
        "payment_rounds": stats.payment_rounds,
        "otx_respecting": is_otx_respecting(transcript),
        "transcript_digest": transcript.digest(),
    }
    if dump_dir is not None:
        stem = Path(dump_dir) / f"{strategy.name}_seed{seed}"
        stem.with_suffix(".bin").write_bytes(transcript.to_bytes())
        some_view = min(report.per_view)
        summary = {
            "seed": seed,
            "strategy": strategy.name,
            "u_min": str(report.u_min),
            "u_max": str(report.u_max),
            "fruits_mined": stats.fruits_mined,
            "block_rounds": stats.block_rounds,
            "payment_rounds": stats.payment_rounds,
            "per_party": {
                str(p): {
                    "rewards": str(vals[0]),
                    "cost": str(vals[1]),
                    "profit": str(vals[2]),
                }
                for p, vals in sorted(report.per_view[some_view].items())
            },
        }
        stem.with_suffix(".json").write_text(
            json.dumps(summary, indent=2, sort_keys=True)
        )
        row["transcript_path"] = str(stem.with_suffix(".bin"))
    return row


def cmd_run(spec_path: str, workers: int = 1,
            seeds_override: list[int] | None = None,
            out_dir_override: str | None = None) -> int:
    try:
        spec = load_spec(Path(spec_path))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    seeds = tuple(seeds_override) if seeds_override else spec.seeds
    if out_dir_override:
        base = Path(out_dir_override)
        spec = replace(
            spec,
            transcript_dir=base / "transcripts",
            summary_csv=base / "summary.csv",
            verdict_json=base / "verdict.json",
        )
    dump_dir = spec.transcript_dir
    if dump_dir is not None:
        dump_dir.mkdir(parents=True, exist_ok=True)

    jobs = [
        (spec, i, seed, str(dump_dir) if dump_dir else None)
        for i in range(len(spec.strategies))
        for seed in seeds
    ]
    try:
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                rows = list(pool.map(_run_one, jobs))
        else:
            rows = [_run_one(job) for job in jobs]
    except ProtocolViolation as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION

    eps_prime = analysis.equilibrium_slack(
        spec.base.params, log_base=spec.log_base
    )
    honest_like = [r for r in rows if r["strategy"] == "reorder_only"]
    if not honest_like:
        honest_like = [r for r in rows if r["strategy"] == "honest"] or rows
    baseline_by_seed = {r["seed"]: Fraction(r["u_min"]) for r in honest_like}
    fallback_baseline = min(baseline_by_seed.values())

    all_verdicts_hold = True
    for r in rows:
        baseline = baseline_by_seed.get(r["seed"], fallback_baseline)
        verdict = analysis.evp_verdict(
            Fraction(r["u_max"]), baseline, spec.epsilon, eps_prime
        )
        r["evp_verdict"] = verdict
        all_verdicts_hold = all_verdicts_hold and verdict

    rows.sort(key=lambda r: (r["strategy"], r["seed"]))
    if spec.summary_csv is not None:
        spec.summary_csv.parent.mkdir(parents=True, exist_ok=True)
        with spec.summary_csv.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, extrasaction="ignore")
            writer.writeheader()
            writer.writerows(rows)

    verdict_doc = {
        "epsilon": str(spec.epsilon),
        "equilibrium_slack": float(eps_prime),
        "baseline_u_min": {str(s): str(v) for s, v in sorted(baseline_by_seed.items())},
        "max_u_max": str(max(Fraction(r["u_max"]) for r in rows)),
        "all_verdicts_hold": all_verdicts_hold,
        "runs": len(rows),
    }
    if spec.verdict_json is not None:
        spec.verdict_json.parent.mkdir(parents=True, exist_ok=True)
        spec.verdict_json.write_text(json.dumps(verdict_doc, indent=2, sort_keys=True))

    for r in rows:
        print(
            f"{r['strategy']:>24} seed={r['seed']:<6} "
            f"u_min={r['u_min']:>16} u_max={r['u_max']:>16} "
            f"evp={'ok' if r['evp_verdict'] else 'FAIL'}"
        )
    print(f"equilibrium verdict: {'holds' if all_verdicts_hold else 'VIOLATED'} "
          f"over {len(rows)} runs")
    return EXIT_OK if all_verdicts_hold else EXIT_VERDICT


def cmd_bounds(params_path: str, delta: float | None, log_base: float) -> int:
    try:
        params, analysis_table = load_params_file(Path(params_path))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    base = log_base if log_base else float(analysis_table.get("log_base", 2))
    report = analysis.bound_report(params, delta=delta, log_base=base)
    doc = report.as_dict()
    other_base = 2.718281828459045 if base == 2 else 2.0
    doc["alternate_log_base"] = analysis.bound_report(
        params, delta=delta, log_base=other_base
    ).as_dict()
    print(json.dumps(doc, indent=2, sort_keys=True))
    width = max(len(k) for k in ("compliant_profit_floor", "deviation_profit_ceiling",
                                 "equilibrium_slack"))
    for key in ("compliant_profit_floor", "deviation_profit_ceiling", "equilibrium_slack"):
        print(f"{key:<{width}}  {doc[key]: .6f}", file=sys.stderr)
    return EXIT_OK


def cmd_replay(transcript_path: str) -> int:
    try:
        data = Path(transcript_path).read_bytes()
        transcript = ExecutionTranscript.from_bytes(data)
    except (OSError, ValueError) as exc:
        print(f"transcript rejected: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    problems = validate_transcript(transcript)
    for p in problems:
        print(f"violation: {p}")
    if problems:
        return EXIT_VIOLATION
    print(f"transcript clean: {transcript.strategy_name} seed={transcript.seed} "
          f"digest={transcript.digest()[:16]}…")
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fruitpool",
        description="Two-tier PoW pool simulator and equilibrium analysis",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a strategy/seed batch from a spec file")
    p_run.add_argument("--spec", required=True, help="TOML experiment spec")
    p_run.add_argument("--seeds", type=int, nargs="+", default=None,
                       help="override the spec's seed list")
    p_run.add_argument("--out-dir", default=None,
                       help="redirect all outputs under this directory")

    p_bounds = sub.add_parser("bounds", help="print the closed-form bound report")
    p_bounds.add_argument("--params", required=True, help="TOML params file")
    p_bounds.add_argument("--delta", type=float, default=None)
    p_bounds.add_argument("--log-base", type=float, default=0.0,
                          help="0 = take from file (default base 2)")

    p_replay = sub.add_parser("replay", help="re-validate a stored transcript")
    p_replay.add_argument("--transcript", required=True)

    args = parser.parse_args(argv)
    if args.command == "run":
        workers = int(os.environ.get("FRUITPOOL_WORKERS", "1"))
        return cmd_run(args.spec, workers=workers, seeds_override=args.seeds,
                       out_dir_override=args.out_dir)
    if args.command == "bounds":
        return cmd_bounds(args.params, args.delta, args.log_base)
    if args.command == "replay":
        return cmd_replay(args.transcript)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
