"""Protocol parameters and their validation.

All probabilities, rewards and costs are exact `Fraction`s so that threshold
arithmetic and the conservation invariants hold with zero tolerance.  Digest
width is 2*kappa_sim bits; kappa_sim is a desk-scale stand-in for the security
parameter and must be a multiple of 8 so digest halves stay byte aligned.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from functools import cached_property
from typing import Union

Currency = Fraction
Prob = Fraction

ORACLE_LC = "lc"
ORACLE_FS = "fs"
ORACLE_TX = "tx"
ORACLE_RO = "ro"
ORACLE_LTX = "ltx"
ORACLES = (ORACLE_LC, ORACLE_FS, ORACLE_TX, ORACLE_RO, ORACLE_LTX)


def as_fraction(value: Union[int, float, str, Fraction]) -> Fraction:
    """Accepts ints, floats, Fractions and strings like '13/256'."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value)
    return Fraction(value)


@dataclass(frozen=True)
class ProtocolParams:
    """All protocol-level knobs for one execution."""

    kappa_sim: int = 32
    n: int = 5
    q: int = 10
    big_n: int = 2000
    p_f: Prob = Fraction(1, 20)
    p_b: Prob = Fraction(1, 500)
    r: int = 4
    reward_f: Currency = Fraction(1)
    c_lc: Currency = Fraction(0)
    c_fs: Currency = Fraction(0)
    c_tx: Currency = Fraction(0)
    c_ro: Currency = Fraction(0)
    c_ltx: Currency = Fraction(0)
    delta: Fraction = Fraction(1, 2)

    def __post_init__(self) -> None:
        if self.kappa_sim <= 0 or self.kappa_sim % 8 != 0:
            raise ValueError("kappa_sim must be a positive multiple of 8")
        if self.n < 2:
            raise ValueError("need at least two parties")
        if self.q < 1:
            raise ValueError("per-round mining quota must be at least 1")
        if self.big_n < 1:
            raise ValueError("round count must be at least 1")
        if not (0 < self.p_b < self.p_f < Fraction(1, 2)):
            raise ValueError("hardness must satisfy 0 < p_b < p_f < 1/2")
        if self.r < 1:
            raise ValueError("recency parameter must be at least 1")
        for name in ("reward_f", "c_lc", "c_fs", "c_tx", "c_ro", "c_ltx"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.threshold_fruit < 1 or self.threshold_block < 1:
            raise ValueError("hardness too small for this digest width")

    @property
    def digest_bytes(self) -> int:
        return 2 * self.kappa_sim // 8

    @property
    def half_bytes(self) -> int:
        return self.kappa_sim // 8

    @property
    def nonce_bytes(self) -> int:
        return self.kappa_sim // 8

    @cached_property
    def threshold_fruit(self) -> int:
        """Integer cutoff for the trailing digest half."""
        return (self.p_f * 2**self.kappa_sim).__floor__()

    @cached_property
    def threshold_block(self) -> int:
        """Integer cutoff for the leading digest half."""
        return (self.p_b * 2**self.kappa_sim).__floor__()

    @property
    def recency_window(self) -> int:
        return self.r * self.kappa_sim

    def cost_of(self, oracle: str) -> Currency:
        return {
            ORACLE_LC: self.c_lc,
            ORACLE_FS: self.c_fs,
            ORACLE_TX: self.c_tx,
            ORACLE_RO: self.c_ro,
            ORACLE_LTX: self.c_ltx,
        }[oracle]

    def quota_of(self, oracle: str) -> int:
        return self.q if oracle == ORACLE_RO else 1

    def warnings(self) -> list[str]:
        """Soft checks that flag without aborting."""
        notes = []
        if self.big_n <= self.kappa_sim:
            notes.append(
                f"round count {self.big_n} does not exceed kappa_sim "
                f"{self.kappa_sim}; admissible environments run longer"
            )
        return notes

    def with_updates(self, **kwargs) -> "ProtocolParams":
        return replace(self, **kwargs)
