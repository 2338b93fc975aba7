"""Strategy framework: corrupted sets, the deviation catalogue, composition.

A strategy names the corrupted coalition, a message-ordering policy, and a
list of deviations.  Deviations are declarative; party programs consult the
compiled per-round directives while running.  Contradictory compositions are
rejected up front rather than silently prioritized.

Deviation tags (members unless noted):
  tamper_instance        mine on an altered instance; the sub-case names the
                         field replaced (record, prev_ref, anchor_ref,
                         fruit_digest) or freezes chosen slots
  skip_payment_check     skip the light payment-verification query
  query_budget           mine with a reduced per-round query budget
  withhold               never diffuse own mined fruits/blocks
  delay                  diffuse own mined objects a fixed number of rounds late
  breakaway              leave and form a separate pool with its own leader
  ignore_exits           stay in the pool despite dissolve/leave triggers
  abandon                leave the pool at a given round, mine solo afterwards
  skip_fruit_query       leader skips the fruit-set oracle
  skip_record_query      leader skips the transaction oracle
  skip_chain_query       leader skips the longest-chain query on payment rounds
  underpay               leader shorts honest members by a fraction
  skip_instance_message  leader withholds the per-round instance message
                         (scripting hook for the missing-message exit)
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import InvalidComposition
from .network import ORDER_ADVERSARY_FIRST, ORDER_CANONICAL

LEADER_TAGS = {"skip_fruit_query", "skip_record_query", "skip_chain_query",
               "underpay", "skip_instance_message"}
NONLEADER_TAGS = {"tamper_instance", "skip_payment_check"}
ALL_TAGS = NONLEADER_TAGS | LEADER_TAGS | {
    "query_budget", "withhold", "delay", "breakaway", "ignore_exits", "abandon",
}

_TAMPER_SLOT = {"record": 4, "prev_ref": 1, "anchor_ref": 2, "fruit_digest": 3}


@dataclass(frozen=True)
class BreakawaySpec:
    members: tuple[int, ...]
    leader: int
    start_round: int
    member_share_scale: Fraction = Fraction(1)


@dataclass(frozen=True)
class Deviation:
    tag: str
    rounds: Optional[tuple[int, ...]] = None  # None = every round
    parties: Optional[tuple[int, ...]] = None  # None = every corrupted party
    subcase: Optional[str] = None  # tamper_instance: field name or 'freeze'
    freeze: tuple[int, ...] = ()  # tamper_instance freeze: slots 1..4 kept stale
    budget: Optional[int] = None  # query_budget
    delay: Optional[int] = None  # delay, in rounds
    breakaway: Optional[BreakawaySpec] = None
    r_star: Optional[int] = None  # abandon: switch round
    fraction: Optional[Fraction] = None  # underpay

    def round_set(self, big_n: int) -> frozenset[int]:
        if self.tag == "abandon":
            return frozenset(range(self.r_star, big_n + 1))
        if self.tag == "breakaway":
            return frozenset(range(self.breakaway.start_round, big_n + 1))
        if self.rounds is None:
            return frozenset(range(1, big_n + 1))
        return frozenset(self.rounds)

    def slots(self) -> tuple[str, ...]:
        if self.tag == "tamper_instance":
            if self.subcase == "freeze":
                return tuple(f"inst{i}" for i in self.freeze)
            return (f"inst{_TAMPER_SLOT[self.subcase]}",)
        return {
            "skip_payment_check": ("ltx",),
            "query_budget": ("budget",),
            "withhold": ("diffusion",),
            "delay": ("diffusion",),
            "breakaway": ("exit",),
            "ignore_exits": ("checks",),
            "abandon": ("exit",),
            "skip_fruit_query": ("fs",),
            "skip_record_query": ("tx",),
            "skip_chain_query": ("lc",),
            "underpay": ("pay",),
            "skip_instance_message": ("auth",),
        }[self.tag]

    def effect_key(self) -> tuple:
        return (self.tag, self.subcase, self.freeze, self.budget, self.delay,
                self.breakaway, self.r_star, self.fraction)


@dataclass(frozen=True)
class RoundDirectives:
    """What a corrupted party actually does differently in one round."""

    instance_overrides: tuple[str, ...] = ()
    freeze_fields: tuple[int, ...] = ()
    skip_ltx: bool = False
    ro_budget: Optional[int] = None
    withhold: bool = False
    delay: Optional[int] = None
    ignore_checks: bool = False
    leave_now: bool = False
    breakaway_now: Optional[BreakawaySpec] = None
    skip_fs: bool = False
    skip_tx: bool = False
    skip_lc: bool = False
    underpay: Optional[Fraction] = None
    skip_auth: bool = False

    @property
    def deviates_instance(self) -> bool:
        return bool(self.instance_overrides) or bool(self.freeze_fields)


HONEST_DIRECTIVES = RoundDirectives()


@dataclass(frozen=True)
class Strategy:
    name: str
    corrupted: frozenset[int]
    deviations: tuple[Deviation, ...] = ()
    ordering: str = ORDER_ADVERSARY_FIRST

    def validate(self, n: int, q: int, big_n: int, leader: int) -> None:
        if len(self.corrupted) > n - 1:
            raise InvalidComposition("coalition must leave one honest party")
        for p in self.corrupted:
            if not 0 <= p < n:
                raise InvalidComposition(f"unknown party {p}")
        if self.ordering not in (ORDER_CANONICAL, ORDER_ADVERSARY_FIRST):
            raise InvalidComposition(f"unknown ordering {self.ordering!r}")
        includes_leader = leader in self.corrupted
        for dev in self.deviations:
            self._validate_one(dev, n, q, big_n, leader, includes_leader)
        self._check_conflicts(big_n, leader)

    def _validate_one(self, dev: Deviation, n: int, q: int, big_n: int,
                      leader: int, includes_leader: bool) -> None:
        if dev.tag not in ALL_TAGS:
            raise InvalidComposition(f"unknown deviation {dev.tag!r}")
        targets = self.targets_of(dev, leader)
        if not targets:
            raise InvalidComposition(f"{dev.tag} targets no corrupted party")
        if dev.tag in LEADER_TAGS:
            if not includes_leader:
                raise InvalidComposition(f"{dev.tag} requires a corrupted leader")
            if targets != {leader}:
                raise InvalidComposition(f"{dev.tag} applies to the leader only")
        if dev.tag in NONLEADER_TAGS and leader in targets:
            raise InvalidComposition(f"{dev.tag} applies to non-leader parties only")
        if dev.tag == "tamper_instance":
            if dev.subcase not in ("record", "prev_ref", "anchor_ref", "fruit_digest", "freeze"):
                raise InvalidComposition("tamper_instance needs a sub-case naming the field")
            if dev.subcase == "freeze" and not all(1 <= i <= 4 for i in dev.freeze):
                raise InvalidComposition("freeze slots must be in 1..4")
        if dev.tag == "query_budget" and not (dev.budget is not None and 0 <= dev.budget <= q):
            raise InvalidComposition("query budget must lie in [0, q]")
        if dev.tag == "delay" and not (dev.delay is not None and dev.delay >= 1):
            raise InvalidComposition("delay must be at least one round")
        if dev.tag == "abandon" and not (dev.r_star is not None and 1 <= dev.r_star <= big_n):
            raise InvalidComposition("abandon switch round must lie in [1, N]")
        if dev.tag == "breakaway":
            spec = dev.breakaway
            if spec is None or not spec.members:
                raise InvalidComposition("breakaway needs a member list")
            if spec.leader not in spec.members:
                raise InvalidComposition("breakaway leader must belong to the subset")
            if not set(spec.members) <= self.corrupted:
                raise InvalidComposition("breakaway subset must be corrupted")
            if not 1 <= spec.start_round <= big_n:
                raise InvalidComposition("breakaway start round must lie in [1, N]")
        if dev.tag == "underpay" and not (
            dev.fraction is not None and 0 <= dev.fraction <= 1
        ):
            raise InvalidComposition("underpay fraction must lie in [0, 1]")

    def targets_of(self, dev: Deviation, leader: int) -> set[int]:
        if dev.tag == "breakaway":
            return set(dev.breakaway.members)
        if dev.parties is not None:
            return set(dev.parties) & self.corrupted
        if dev.tag in LEADER_TAGS:
            return {leader} & self.corrupted
        if dev.tag in NONLEADER_TAGS:
            return self.corrupted - {leader}
        return set(self.corrupted)

    def _check_conflicts(self, big_n: int, leader: int) -> None:
        items = []
        for dev in self.deviations:
            items.append(
                (dev, self.targets_of(dev, leader), dev.round_set(big_n),
                 set(dev.slots()), dev.effect_key())
            )
        for i in range(len(items)):
            for j in range(i + 1, len(items)):
                a, b = items[i], items[j]
                if a[4] == b[4]:
                    continue  # identical effects may overlap freely
                if (a[3] & b[3]) and (a[1] & b[1]) and (a[2] & b[2]):
                    raise InvalidComposition(
                        f"{a[0].tag} and {b[0].tag} contradict each other on "
                        f"shared rounds/parties"
                    )

    def compile(self, big_n: int, leader: int) -> "CompiledStrategy":
        return CompiledStrategy(self, big_n, leader)


class CompiledStrategy:
    """Resolved lookup from (party, round) to directives."""

    def __init__(self, strategy: Strategy, big_n: int, leader: int):
        self.strategy = strategy
        self._per_party: dict[int, list[tuple[frozenset[int], Deviation]]] = {}
        for dev in strategy.deviations:
            rounds = dev.round_set(big_n)
            for p in strategy.targets_of(dev, leader):
                self._per_party.setdefault(p, []).append((rounds, dev))

    def directives(self, party: int, rnd: int) -> RoundDirectives:
        entries = self._per_party.get(party)
        if not entries:
            return HONEST_DIRECTIVES
        overrides: list[str] = []
        freeze: list[int] = []
        kw: dict = {}
        for rounds, dev in entries:
            if rnd not in rounds:
                continue
            tag = dev.tag
            if tag == "tamper_instance":
                if dev.subcase == "freeze":
                    freeze.extend(dev.freeze)
                else:
                    overrides.append(dev.subcase)
            elif tag == "skip_payment_check":
                kw["skip_ltx"] = True
            elif tag == "query_budget":
                kw["ro_budget"] = dev.budget
            elif tag == "withhold":
                kw["withhold"] = True
            elif tag == "delay":
                kw["delay"] = dev.delay
            elif tag == "breakaway":
                if rnd == dev.breakaway.start_round:
                    kw["breakaway_now"] = dev.breakaway
            elif tag == "ignore_exits":
                kw["ignore_checks"] = True
            elif tag == "abandon":
                if rnd == dev.r_star:
                    kw["leave_now"] = True
            elif tag == "skip_fruit_query":
                kw["skip_fs"] = True
            elif tag == "skip_record_query":
                kw["skip_tx"] = True
            elif tag == "skip_chain_query":
                kw["skip_lc"] = True
            elif tag == "underpay":
                kw["underpay"] = dev.fraction
            elif tag == "skip_instance_message":
                kw["skip_auth"] = True
        if not overrides and not freeze and not kw:
            return HONEST_DIRECTIVES
        return RoundDirectives(
            instance_overrides=tuple(overrides),
            freeze_fields=tuple(freeze),
            **kw,
        )


def reordering_adversary(corrupted, name: str = "reorder_only") -> Strategy:
    """Protocol-following coalition whose messages are delivered first."""
    return Strategy(
        name=name,
        corrupted=frozenset(corrupted),
        deviations=(),
        ordering=ORDER_ADVERSARY_FIRST,
    )


def underquery_then_exit_strategy(
    corrupted,
    r_star: int,
    budget: Optional[int] = None,
    name: str = "underquery_then_exit",
) -> Strategy:
    """The canonical composite: stay pooled with a reduced budget and no
    payment verification until r_star, then abandon and mine solo with the
    same budget."""
    devs = [
        Deviation(tag="skip_payment_check"),
        Deviation(tag="abandon", r_star=r_star),
    ]
    if budget is not None:
        devs.insert(1, Deviation(tag="query_budget", budget=budget))
    return Strategy(
        name=name,
        corrupted=frozenset(corrupted),
        deviations=tuple(devs),
        ordering=ORDER_ADVERSARY_FIRST,
    )


# Backwards-friendly alias matching the bound evaluators' naming.
underquery_then_exit_strategy = underquery_then_exit_strategy


def is_otx_respecting(transcript) -> bool:
    """True iff in every round, every pool or solo party queried the
    transaction oracle at least once (per group)."""
    n = transcript.params.n
    big_n = transcript.params.big_n
    pooled_modes = ("honest_pool", "strategy_run")
    tx_rounds: set[tuple[int, int]] = {
        (rnd, party)
        for rnd, party, oracle, _ in transcript.query_log
        if oracle == "tx"
    }
    exit_round: dict[int, int] = {}
    breakaway_at: dict[int, tuple[int, object]] = {}
    for ev in transcript.exits:
        if ev.reason == "breakaway":
            breakaway_at[ev.party] = (ev.round, ev.group)
        else:
            exit_round.setdefault(ev.party, ev.round)
    for rnd in range(1, big_n + 1):
        groups: dict[object, set[int]] = {}
        for p in range(n):
            if transcript.mode not in pooled_modes:
                key: object = ("solo", p)
            elif p in breakaway_at and rnd >= breakaway_at[p][0]:
                key = ("breakaway", breakaway_at[p][1])
            elif p in exit_round and exit_round[p] <= rnd:
                key = ("solo", p)
            else:
                key = "pool"
            groups.setdefault(key, set()).add(p)
        for members in groups.values():
            if not any((rnd, p) in tx_rounds for p in members):
                return False
    return True
