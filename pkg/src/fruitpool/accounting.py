"""Rewards, costs, and coalition utilities per honest view.

Minting credits one fruit reward to the coinbase party of each distinct fruit
in a view chain; pool payment transactions then transfer member shares from
the paying leader.  All arithmetic is exact.  By default payments are
credited in the round their transaction is created; `crediting='ledger'`
defers each transfer until the payment transaction shows up inside some fruit
record of the view chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .core import Chain
from .errors import NoHonestParty, ViewNotHonest
from .params import ORACLES, ProtocolParams
from .transcript import ExecutionTranscript, PaymentEvent

CREDIT_ON_CREATION = "creation"
CREDIT_IN_LEDGER = "ledger"


@dataclass(frozen=True)
class CostLedger:
    """Per-party query counts and exact totals."""

    entries: dict[int, dict[str, tuple[int, Fraction]]]

    @classmethod
    def from_transcript(cls, t: ExecutionTranscript) -> "CostLedger":
        entries = {}
        for party, per in t.counts.items():
            entries[party] = {
                o: (per.get(o, 0), per.get(o, 0) * t.params.cost_of(o))
                for o in ORACLES
            }
        return cls(entries)

    def total(self, party: int) -> Fraction:
        per = self.entries.get(party)
        if per is None:
            return Fraction(0)
        return sum((total for _, total in per.values()), Fraction(0))


def _view_tx_ids(view: Chain) -> frozenset[int]:
    return frozenset(
        tx.id for b in view.blocks for f in b.fruit_set for tx in f.record.txs
    )


def _distinct_records(view: Chain):
    seen: set[bytes] = set()
    for b in view.blocks:
        for f in b.fruit_set:
            if f.key not in seen:
                seen.add(f.key)
                yield f.record


def rewards_in_view(
    view: Chain,
    payments: list[PaymentEvent],
    params: ProtocolParams,
    crediting: str = CREDIT_ON_CREATION,
    truncate_last: int = 0,
) -> dict[int, Fraction]:
    """Minted fruit rewards plus pool transfers, as seen from one chain.
    `truncate_last` drops that many tip blocks before counting (sensitivity
    mode); the default counts the whole chain."""
    if truncate_last:
        view = Chain(view.blocks[: max(1, len(view.blocks) - truncate_last)])
    rewards: dict[int, Fraction] = {p: Fraction(0) for p in range(params.n)}
    for record in _distinct_records(view):
        if 0 <= record.coinbase < params.n:
            rewards[record.coinbase] += params.reward_f
    ledger_ids = _view_tx_ids(view) if crediting == CREDIT_IN_LEDGER else None
    for ev in payments:
        tx = ev.computation.tx
        if tx is None or not tx.payments:
            continue
        if ledger_ids is not None and tx.id not in ledger_ids:
            continue
        for party, amount in tx.payments:
            rewards[party] += amount
            rewards[ev.leader] -= amount
    return rewards


def coalition_utility(
    transcript: ExecutionTranscript,
    coalition,
    view_party: int,
    crediting: str = CREDIT_ON_CREATION,
) -> Fraction:
    """Coalition rewards in `view_party`'s chain minus the coalition's exact
    incurred cost."""
    if view_party in transcript.corrupted:
        raise ViewNotHonest(f"party {view_party} is corrupted")
    view = transcript.final_views[view_party]
    rewards = rewards_in_view(view, transcript.payments, transcript.params,
                              crediting)
    total = Fraction(0)
    for p in coalition:
        total += rewards.get(p, Fraction(0)) - transcript.cost_of(p)
    return total


@dataclass(frozen=True)
class UtilityReport:
    per_view: dict[int, dict[int, tuple[Fraction, Fraction, Fraction]]]
    u_min: Fraction
    u_max: Fraction


def u_min_max(
    transcript: ExecutionTranscript,
    coalition=None,
    crediting: str = CREDIT_ON_CREATION,
) -> UtilityReport:
    """Coalition utility extremes over all honest final views, with the full
    per-view per-party (rewards, cost, profit) breakdown."""
    params = transcript.params
    if coalition is None:
        coalition = transcript.corrupted
    honest = [p for p in range(params.n) if p not in transcript.corrupted]
    if not honest:
        raise NoHonestParty("utility extremes need at least one honest view")
    per_view = {}
    utilities = []
    for v in honest:
        view = transcript.final_views[v]
        rewards = rewards_in_view(view, transcript.payments, params, crediting)
        breakdown = {}
        for p in range(params.n):
            cost = transcript.cost_of(p)
            breakdown[p] = (rewards[p], cost, rewards[p] - cost)
        per_view[v] = breakdown
        utilities.append(
            sum((breakdown[p][2] for p in coalition), Fraction(0))
        )
    return UtilityReport(per_view, min(utilities), max(utilities))
