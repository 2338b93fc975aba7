"""Closed-form equilibrium bound evaluators and tail-probability helpers.

All evaluations run in extended-precision arithmetic (50 decimal digits by
default) so the algebraic identity between the coalition's upper bound, the
honest-play lower bound, and the additive slack can be checked to tight
relative tolerances.  The logarithm base over the security parameter is
base 2 by default and configurable to natural log; the tail helpers are
always base-e exponentials.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import mpmath
from mpmath import mp

from .errors import DomainError
from .params import ProtocolParams

DPS = 50

Number = Union[int, float, Fraction]


def _mpf(x: Number) -> mpmath.mpf:
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / mpmath.mpf(x.denominator)
    return mpmath.mpf(x)


def _log_kappa(params: ProtocolParams, log_base: Number) -> mpmath.mpf:
    return mpmath.log(params.kappa_sim) / mpmath.log(_mpf(log_base))


def chernoff_upper(mean: Number, delta: Number):
    """Tail bound for exceeding (1+delta) times the mean: exp(-delta^2 mean / 3)."""
    with mp.workdps(DPS):
        m, d = _mpf(mean), _mpf(delta)
        if m <= 0 or not (0 < d < 1):
            raise DomainError("need mean > 0 and 0 < delta < 1")
        return mpmath.e ** (-(d**2) * m / 3)


def chernoff_lower(mean: Number, delta: Number):
    """Tail bound for falling below (1-delta) times the mean: exp(-delta^2 mean / 2)."""
    with mp.workdps(DPS):
        m, d = _mpf(mean), _mpf(delta)
        if m <= 0 or not (0 < d < 1):
            raise DomainError("need mean > 0 and 0 < delta < 1")
        return mpmath.e ** (-(d**2) * m / 2)


def _unpack(params: ProtocolParams, log_base: Number):
    return (
        _log_kappa(params, log_base),
        _mpf(params.n),
        _mpf(params.q),
        _mpf(params.big_n),
        _mpf(params.p_f),
        _mpf(params.p_b),
        _mpf(params.reward_f),
        _mpf(params.c_lc),
        _mpf(params.c_fs),
        _mpf(params.c_tx),
        _mpf(params.c_ro),
        _mpf(params.c_ltx),
    )


def profitability_condition(params: ProtocolParams, regime: str,
                            log_base: Number = 2) -> bool:
    """Reward-per-query floor for the named regime ('claim1' inclusive,
    'claim2' strict with the solo-floor max)."""
    with mp.workdps(DPS):
        L, n, q, N, p_f, p_b, R_f, c_lc, c_fs, c_tx, c_ro, c_ltx = _unpack(
            params, log_base
        )
        lhs = p_f * R_f
        instance_cost = c_lc + c_fs + c_tx
        if regime == "floor":
            rhs = instance_cost / ((1 - L / mpmath.sqrt(n)) * n * q)
            return bool(lhs >= rhs)
        if regime == "ceiling":
            first = instance_cost / ((1 - L / n ** mpmath.mpf("0.25")) * mpmath.sqrt(n) * q)
            second = 3 * (instance_cost / ((n - 1) * q) + c_ro)
            return bool(lhs > max(first, second))
        raise DomainError(f"unknown regime {regime!r}")


def equilibrium_conditions(params: ProtocolParams, delta: Number,
                       log_base: Number = 2,
                       pb_constant: Number = 1) -> dict[str, bool]:
    with mp.workdps(DPS):
        L, n, q, N, p_f, p_b, R_f, c_lc, c_fs, c_tx, c_ro, c_ltx = _unpack(
            params, log_base
        )
        d = _mpf(delta)
        instance_cost = c_lc + c_fs + c_tx
        cond_i = p_f * R_f > instance_cost / (
            (1 - L / n ** mpmath.mpf("0.25")) * mpmath.sqrt(n) * q
        ) + c_ro
        cond_ii = p_b >= _mpf(pb_constant) / (n * q)
        cond_iii = p_f < mpmath.mpf("0.5")
        delta_ok = (L / (N * n) ** mpmath.mpf("0.25")) <= d < 1
        return {
            "main_i": bool(cond_i),
            "main_ii": bool(cond_ii),
            "main_iii": bool(cond_iii),
            "floor_i": profitability_condition(params, "floor", log_base),
            "floor_ii": bool(cond_ii),
            "ceiling_i": profitability_condition(params, "ceiling", log_base),
            "ceiling_ii": bool(cond_iii),
            "delta_in_range": bool(delta_ok),
        }


def compliant_profit_floor(params: ProtocolParams, log_base: Number = 2):
    """Honest-coalition profit floor (holds with overwhelming probability at
    scale); evaluated unconditionally, condition flags live in the report."""
    with mp.workdps(DPS):
        L, n, q, N, p_f, p_b, R_f, c_lc, c_fs, c_tx, c_ro, c_ltx = _unpack(
            params, log_base
        )
        block_round_p = 1 - (1 - p_b) ** (n * q)
        return (
            (1 - L / mpmath.sqrt(N * n)) * (N - L**2) * (n - 1) * q * p_f * R_f
            - ((n - 1) / n) * (1 + L / mpmath.sqrt(N)) * N * block_round_p
            * (c_lc + n * c_ltx)
            - (((n - 1) / n) * N + L**2 / n) * (c_fs + c_tx)
            - N * (n - 1) * q * c_ro
        )


def deviation_profit_ceiling(params: ProtocolParams, delta: Optional[Number] = None,
                       log_base: Number = 2):
    """Deviating-coalition profit ceiling dominating all switch-round cases."""
    with mp.workdps(DPS):
        L, n, q, N, p_f, p_b, R_f, c_lc, c_fs, c_tx, c_ro, c_ltx = _unpack(
            params, log_base
        )
        d = _mpf(params.delta if delta is None else delta)
        block_round_p = 1 - (1 - p_b) ** (n * q)
        return (
            (1 + d) * (N - 1) * (n - 1) * q * p_f * R_f
            + L**2 * (n - 1) * q * R_f
            - ((n - 1) / n) * (1 - L / mpmath.sqrt(N)) * (N - 1) * block_round_p * c_lc
            - ((n - 1) / n) * N * (c_fs + c_tx)
            - N * (n - 1) * q * c_ro
        )


def equilibrium_slack(params: ProtocolParams, delta: Optional[Number] = None,
                          log_base: Number = 2):
    """The additive equilibrium slack, term by term; algebraically equal to
    deviation_profit_ceiling - compliant_profit_floor."""
    with mp.workdps(DPS):
        L, n, q, N, p_f, p_b, R_f, c_lc, c_fs, c_tx, c_ro, c_ltx = _unpack(
            params, log_base
        )
        d = _mpf(params.delta if delta is None else delta)
        block_round_p = 1 - (1 - p_b) ** (n * q)
        term_rf = (
            (L / mpmath.sqrt(N * n) + d) * N
            + L**2 * (1 + 1 / p_f)
            - (L**3 / mpmath.sqrt(N * n) + 1 + d)
        ) * (n - 1) * q * p_f * R_f
        term_lc = ((n - 1) / n) * (
            2 * L * mpmath.sqrt(N) + 1 - L / mpmath.sqrt(N)
        ) * block_round_p * c_lc
        term_ltx = (1 + L / mpmath.sqrt(N)) * N * block_round_p * (n - 1) * c_ltx
        term_fstx = (L**2 / n) * (c_fs + c_tx)
        return term_rf + term_lc + term_ltx + term_fstx


def case_coefficients(params: ProtocolParams, regime: str, r_star: int,
                      log_base: Number = 2):
    """(a, b, c, x) of the per-case profit envelope a*x**Q + b*Q + c over the
    coalition's per-round query count Q."""
    with mp.workdps(DPS):
        L, n, q, N, p_f, p_b, R_f, c_lc, c_fs, c_tx, c_ro, c_ltx = _unpack(
            params, log_base
        )
        d = _mpf(params.delta)
        rs = _mpf(r_star)
        x = 1 - p_b
        a = ((n - 1) / n) * (1 - L / mpmath.sqrt(N)) * (N - 1) * x**q * c_lc
        bump = 1 + L / (N * n) ** mpmath.mpf("0.25")
        c_shared = (
            -((n - 1) / n) * (1 - L / mpmath.sqrt(N)) * (N - 1) * c_lc
            - ((n - 1) / n) * N * (c_fs + c_tx)
        )
        if regime == "f":
            b = bump * (N - rs) * p_f * R_f + ((n - 1) / n) * (rs - 1) * R_f - N * c_ro
            c = ((n - 1) / n) * (rs - 1) * q * R_f + c_shared
        elif regime == "g":
            b = ((n - 1) / n) * bump * (rs - 1) * p_f * R_f + (N - rs) * R_f - N * c_ro
            c = ((n - 1) / n) * bump * (rs - 1) * q * p_f * R_f + c_shared
        elif regime == "h":
            b = (1 + d) * ((n - 1) / n) * (N - 1) * p_f * R_f - N * c_ro
            c = (1 + d) * ((n - 1) / n) * (N - 1) * q * p_f * R_f + c_shared
        else:
            raise DomainError(f"unknown case regime {regime!r}")
        return a, b, c, x


def case_functions(params: ProtocolParams, regime: str, r_star: int, big_q: int,
                   log_base: Number = 2):
    """Value of the named case envelope at integer query count Q."""
    with mp.workdps(DPS):
        a, b, c, x = case_coefficients(params, regime, r_star, log_base)
        return a * x ** _mpf(big_q) + b * _mpf(big_q) + c


def evp_verdict(u_max: Number, u_min: Number, epsilon: Number,
                slack) -> bool:
    """The equilibrium inequality: u_max <= u_min + epsilon*|u_min| + slack."""
    with mp.workdps(DPS):
        lhs = _mpf(u_max)
        um = _mpf(u_min)
        rhs = um + _mpf(epsilon) * abs(um) + _mpf(slack)
        return bool(lhs <= rhs)


@dataclass(frozen=True)
class BoundReport:
    profit_floor: float
    profit_ceiling: float
    slack: float
    condition_flags: dict[str, bool]
    delta_used: float
    log_base: float

    def as_dict(self) -> dict:
        return {
            "compliant_profit_floor": self.profit_floor,
            "deviation_profit_ceiling": self.profit_ceiling,
            "equilibrium_slack": self.slack,
            "condition_flags": dict(self.condition_flags),
            "delta": self.delta_used,
            "log_base": self.log_base,
        }


def bound_report(params: ProtocolParams, delta: Optional[Number] = None,
                 log_base: Number = 2,
                 pb_constant: Number = 1) -> BoundReport:
    d = params.delta if delta is None else delta
    flags = equilibrium_conditions(params, d, log_base, pb_constant)
    return BoundReport(
        profit_floor=float(compliant_profit_floor(params, log_base)),
        profit_ceiling=float(deviation_profit_ceiling(params, d, log_base)),
        slack=float(equilibrium_slack(params, d, log_base)),
        condition_flags=flags,
        delta_used=float(_mpf(d)),
        log_base=float(log_base),
    )
