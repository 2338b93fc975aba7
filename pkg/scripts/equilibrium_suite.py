#!/usr/bin/env python3
"""Run the full deviation suite and compare utilities against the bound.

Writes a TOML spec covering the reordering baseline and the catalogued
deviations, executes it through the CLI runner, and leaves the summary CSV,
verdict JSON, and per-run transcripts in the output directory.
"""

import argparse
import sys
import textwrap
from pathlib import Path

from fruitpool.cli import cmd_run


def write_spec(out_dir: Path, seeds: int, rounds: int) -> Path:
    half = rounds // 2
    spec = textwrap.dedent(f"""
        [params]
        kappa_sim = 16
        n = 5
        q = 10
        big_n = {rounds}
        r = 4
        p_f = "1/20"
        p_b = "1/500"
        reward_f = "6/25"
        c_lc = "1/20"
        c_fs = "1/20"
        c_tx = "1/20"
        c_ro = "1/100"
        c_ltx = "1/1000"
        delta = "1/2"

        [execution]
        mode = "strategy_run"
        seed_start = 1
        seed_count = {seeds}

        [[strategies]]
        name = "reorder_only"
        corrupted = [1, 2, 3, 4]

        [[strategies]]
        name = "budget_zero"
        corrupted = [1, 2, 3, 4]
          [[strategies.deviations]]
          tag = "query_budget"
          budget = 0

        [[strategies]]
        name = "budget_half"
        corrupted = [1, 2, 3, 4]
          [[strategies.deviations]]
          tag = "query_budget"
          budget = 5

        [[strategies]]
        name = "withhold_all"
        corrupted = [1, 2, 3, 4]
          [[strategies.deviations]]
          tag = "withhold"

        [[strategies]]
        name = "skip_verify"
        corrupted = [1, 2, 3, 4]
          [[strategies.deviations]]
          tag = "skip_payment_check"

        [[strategies]]
        name = "abandon_mid"
        corrupted = [1, 2, 3, 4]
          [[strategies.deviations]]
          tag = "abandon"
          r_star = {half}

        [[strategies]]
        name = "underquery_then_exit"
        corrupted = [1, 2, 3, 4]
          [[strategies.deviations]]
          tag = "skip_payment_check"
          [[strategies.deviations]]
          tag = "abandon"
          r_star = {half}

        [[strategies]]
        name = "tamper_record"
        corrupted = [1, 2, 3, 4]
          [[strategies.deviations]]
          tag = "tamper_instance"
          subcase = "record"
          rounds = [2]
          parties = [1]

        [[strategies]]
        name = "underpay_half"
        corrupted = [0, 1, 2, 3]
          [[strategies.deviations]]
          tag = "underpay"
          fraction = "1/2"

        [outputs]
        transcripts = "{out_dir}/transcripts"
        summary_csv = "{out_dir}/summary.csv"
        verdict_json = "{out_dir}/verdict.json"

        [analysis]
        epsilon = 0
        log_base = 2
    """)
    path = out_dir / "suite.toml"
    path.write_text(spec)
    return path


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out-dir", default="out/suite")
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--rounds", type=int, default=2000)
    args = parser.parse_args()
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    spec = write_spec(out_dir, args.seeds, args.rounds)
    print(f"spec written to {spec}")
    return cmd_run(str(spec))


if __name__ == "__main__":
    sys.exit(main())
