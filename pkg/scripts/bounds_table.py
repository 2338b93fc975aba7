#!/usr/bin/env python3
"""Tabulate the equilibrium bounds over a sweep of the slack parameter."""

import argparse
from fractions import Fraction

from fruitpool import analysis
from fruitpool.params import ProtocolParams


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kappa", type=int, default=16)
    parser.add_argument("--n", type=int, default=5)
    parser.add_argument("--q", type=int, default=10)
    parser.add_argument("--rounds", type=int, default=2000)
    parser.add_argument("--log-base", type=float, default=2.0)
    args = parser.parse_args()

    params = ProtocolParams(
        kappa_sim=args.kappa, n=args.n, q=args.q, big_n=args.rounds,
        p_f=Fraction(1, 20), p_b=Fraction(1, 500),
        reward_f=Fraction(6, 25),
        c_lc=Fraction(1, 20), c_fs=Fraction(1, 20), c_tx=Fraction(1, 20),
        c_ro=Fraction(1, 100), c_ltx=Fraction(1, 1000),
    )
    b1 = float(analysis.compliant_profit_floor(params, args.log_base))
    print(f"honest-coalition profit floor: {b1:12.3f}")
    print(f"{'delta':>8} {'ceiling':>14} {'slack':>14} {'in_range':>9}")
    for i in range(5, 100, 5):
        delta = Fraction(i, 100)
        report = analysis.bound_report(params, delta=delta,
                                       log_base=args.log_base)
        print(f"{float(delta):8.2f} {report.profit_ceiling:14.3f} "
              f"{report.slack:14.3f} "
              f"{str(report.condition_flags['delta_in_range']):>9}")


if __name__ == "__main__":
    main()
