"""The round loop: environment, activation, delivery, transcript assembly.

One execution is bit-exact reproducible from its configuration: all coin
flips come from keyed streams over (seed, party, round), the delivery order
is a pure function of send order and the adversary's ordering policy, and no
container with nondeterministic iteration order ever reaches an output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .adversary import HONEST_DIRECTIVES, RoundDirectives, Strategy
from .chain import Validator
from .core import Block, Chain, Fruit, Transaction
from .errors import ConfigError
from .hashing import RandomOracle, SeedStreams, genesis_block
from .network import (
    AuthChannel,
    DiffuseBuffer,
    KIND_BLOCK,
    KIND_FRUIT,
    ORDER_CANONICAL,
)
from .oracles import OracleHub, PartyChainMemory
from .params import ProtocolParams
from .protocols import (
    EXIT_BREAKAWAY,
    HonestFruitParty,
    PaymentComputation,
    PoolLeaderParty,
    PoolMemberParty,
)
from .transcript import (
    AuthEvent,
    DiffuseEvent,
    ExecutionTranscript,
    ExitEvent,
    FinalState,
    MinedEvent,
    PaymentEvent,
)

MODE_HONEST_POOL = "honest_pool"
MODE_HONEST_FRUIT = "honest_fruit"
MODE_STRATEGY = "strategy_run"
MODES = (MODE_HONEST_POOL, MODE_HONEST_FRUIT, MODE_STRATEGY)

ACTIVATION_LEADER_FIRST = "leader_first"
ACTIVATION_ROUND_ROBIN = "round_robin"


@dataclass(frozen=True)
class ExecutionConfig:
    params: ProtocolParams
    mode: str = MODE_HONEST_POOL
    seed: int = 0
    strategy: Optional[Strategy] = None
    leader: int = 0
    activation: Optional[str] = None  # default: leader_first for pool modes
    tx_rate: float = 2.0
    payment_only_records: bool = False

    def resolved_activation(self) -> str:
        if self.activation is not None:
            return self.activation
        if self.mode == MODE_HONEST_FRUIT:
            return ACTIVATION_ROUND_ROBIN
        return ACTIVATION_LEADER_FIRST

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not 0 <= self.leader < self.params.n:
            raise ConfigError("leader id out of range")
        act = self.resolved_activation()
        if act not in (ACTIVATION_LEADER_FIRST, ACTIVATION_ROUND_ROBIN):
            raise ConfigError(f"unknown activation {act!r}")
        if self.mode in (MODE_HONEST_POOL, MODE_STRATEGY) and act != ACTIVATION_LEADER_FIRST:
            raise ConfigError("pool modes require leader-first activation")
        if self.strategy is not None:
            self.strategy.validate(
                self.params.n, self.params.q, self.params.big_n, self.leader
            )
        if self.seed < 0 or self.seed >= 2**64:
            raise ConfigError("seed must fit in 64 bits")


@dataclass
class RoundContext:
    round: int
    env_txs: tuple[Transaction, ...]
    fruits_in: list[Fruit]
    blocks_in: list[Block]
    auth_in: list


def _poisson(u: float, lam: float) -> int:
    """Inverse-CDF Poisson draw from one uniform."""
    p = math.exp(-lam)
    cdf = p
    k = 0
    while u >= cdf and k < 1000:
        k += 1
        p *= lam / k
        cdf += p
    return k


class Engine:
    """Runs one configured execution and materializes its transcript."""

    def __init__(self, config: ExecutionConfig):
        config.validate()
        self.config = config
        self.params = config.params
        self.oracle = RandomOracle(config.seed, self.params)
        self.streams = SeedStreams(config.seed, self.params)
        self.genesis = genesis_block(self.oracle, self.params)
        self.genesis_chain = Chain((self.genesis,))
        self.validator = Validator(self.oracle, self.params, self.genesis)
        self.hub = OracleHub(self.oracle, self.validator, self.params, self.genesis)
        self.payment_only_records = config.payment_only_records

        strategy = config.strategy
        self.corrupted = strategy.corrupted if strategy else frozenset()
        ordering = strategy.ordering if strategy else ORDER_CANONICAL
        self.net = DiffuseBuffer(self.params.n, self.corrupted, ordering)
        self._compiled = (
            strategy.compile(self.params.big_n, config.leader) if strategy else None
        )

        self.auth = AuthChannel.star(
            config.leader, range(self.params.n)
        ) if config.mode != MODE_HONEST_FRUIT else AuthChannel(())

        self.transcript = ExecutionTranscript(
            params=self.params,
            seed=config.seed,
            mode=config.mode,
            strategy_name=strategy.name if strategy else "honest",
            leader=config.leader,
            corrupted=self.corrupted,
            payment_only_records=config.payment_only_records,
            warnings=self.params.warnings(),
        )
        # Oracle state is shared with the transcript by reference.
        self.transcript.query_log = self.hub.query_log
        self.transcript.counts = self.hub.counts

        self._tx_counter = 0
        self._delayed: dict[int, list[tuple[int, str, object]]] = {}
        self._history: dict[int, list[tuple[int, Block]]] = {
            p: [] for p in range(self.params.n)
        }
        self._seen_fruit: list[set[bytes]] = [set() for _ in range(self.params.n)]
        self._seen_block: list[set[bytes]] = [set() for _ in range(self.params.n)]
        self._pending = []  # deliveries awaiting the next round's inboxes

        n = self.params.n
        leader = config.leader
        if config.mode == MODE_HONEST_FRUIT:
            self.programs = {p: HonestFruitParty(self, p) for p in range(n)}
        else:
            members = tuple(p for p in range(n) if p != leader)
            self.programs = {leader: PoolLeaderParty(self, leader, tuple(range(n)))}
            for p in members:
                self.programs[p] = PoolMemberParty(self, p, leader, n)
        order = list(range(n))
        if config.resolved_activation() == ACTIVATION_LEADER_FIRST:
            order.remove(leader)
            order.insert(0, leader)
        self.activation_order = order

    # -- runtime facade used by party programs --------------------------------

    def directives(self, party: int, rnd: int) -> RoundDirectives:
        if self._compiled is None or party not in self.corrupted:
            return HONEST_DIRECTIVES
        return self._compiled.directives(party, rnd)

    def next_tx_id(self) -> int:
        self._tx_counter += 1
        return self._tx_counter

    def log_mined(self, rnd: int, party: int, kind: str, obj,
                  withheld: bool = False, delay: int = 0) -> None:
        self.transcript.mined.append(
            MinedEvent(rnd, party, kind, obj, withheld, delay)
        )

    def log_exit(self, rnd: int, party: int, reason: str,
                 group: Optional[int] = None) -> None:
        self.transcript.exits.append(ExitEvent(rnd, party, reason, group))

    def log_payment(self, rnd: int, leader: int, comp: PaymentComputation,
                    pool_size: Optional[int] = None) -> None:
        size = pool_size if pool_size is not None else self.params.n
        self.transcript.payments.append(PaymentEvent(rnd, leader, comp, size))

    def auth_send(self, rnd: int, sender: int, recipient: int, payload) -> None:
        delivered = self.auth.send(sender, recipient, payload)
        self.transcript.auth_log.append(
            AuthEvent(rnd, sender, recipient,
                      getattr(payload, "tx_payment", None) is not None,
                      delivered)
        )

    def schedule_delayed(self, party: int, release_round: int, kind: str,
                         obj) -> None:
        self._delayed.setdefault(party, []).append((release_round, kind, obj))

    def history_blocks(self, party: int) -> tuple[Block, ...]:
        return tuple(b for _, b in self._history[party])

    # -- the loop ---------------------------------------------------------------

    def run(self) -> ExecutionTranscript:
        params = self.params
        for rnd in range(1, params.big_n + 1):
            self.net.begin_round(rnd)
            self.hub.begin_round(rnd)
            inboxes = self._materialize_inboxes(rnd)
            self._apply_breakaways(rnd)
            env = {
                p: self._environment_txs(p, rnd)
                for p in range(params.n)
            }
            for p in self.activation_order:
                self._release_delayed(p, rnd)
                ctx = RoundContext(
                    round=rnd,
                    env_txs=env[p],
                    fruits_in=inboxes[p][0],
                    blocks_in=inboxes[p][1],
                    auth_in=self.auth.drain(p),
                )
                self.programs[p].run_round(ctx)
            self._pending = self.net.deliver_round()
            for d in self._pending:
                refs = self._payload_refs(d)
                recipients = (
                    None if d.recipients is None else tuple(sorted(d.recipients))
                )
                self.transcript.diffuse_log.append(
                    DiffuseEvent(d.round_sent, d.arrival_index, d.sender,
                                 d.kind, refs, recipients)
                )
        self._finalize_views()
        return self.transcript

    @staticmethod
    def _payload_refs(delivery) -> tuple[bytes, ...]:
        if delivery.kind == KIND_FRUIT:
            return (delivery.payload.h,)
        if delivery.kind == KIND_BLOCK:
            return (delivery.payload.ref,)
        return tuple(b.ref for b in delivery.payload)

    def _materialize_inboxes(self, rnd: int):
        n = self.params.n
        inboxes = {p: ([], []) for p in range(n)}
        for d in self._pending:
            for p in range(n):
                if not d.reaches(p):
                    continue
                fruits, blocks = inboxes[p]
                if d.kind == KIND_FRUIT:
                    f = d.payload
                    if f.key not in self._seen_fruit[p]:
                        self._seen_fruit[p].add(f.key)
                        fruits.append(f)
                elif d.kind == KIND_BLOCK:
                    self._ingest_block(p, rnd, d.payload, blocks)
                else:
                    for b in d.payload:
                        self._ingest_block(p, rnd, b, blocks)
        self._pending = []
        return inboxes

    def _ingest_block(self, party: int, rnd: int, block: Block, out: list) -> None:
        if block.ref in self._seen_block[party]:
            return
        self._seen_block[party].add(block.ref)
        self._history[party].append((rnd, block))
        out.append(block)

    def _release_delayed(self, party: int, rnd: int) -> None:
        queue = self._delayed.get(party)
        if not queue:
            return
        due = [(r, k, o) for (r, k, o) in queue if r <= rnd]
        if not due:
            return
        self._delayed[party] = [(r, k, o) for (r, k, o) in queue if r > rnd]
        for _, kind, obj in due:
            self.net.diffuse(party, kind, obj)

    def _environment_txs(self, party: int, rnd: int) -> tuple[Transaction, ...]:
        rate = self.config.tx_rate
        if rate <= 0:
            return ()
        count = _poisson(self.streams.env_uniform(party, rnd), rate)
        txs = []
        for i in range(count):
            payload = self.streams.env_bytes(party, rnd) + i.to_bytes(4, "little")
            txs.append(Transaction(id=self.next_tx_id(), payload=payload))
        return tuple(txs)

    def _apply_breakaways(self, rnd: int) -> None:
        if self._compiled is None:
            return
        for p in list(self.programs):
            if p not in self.corrupted:
                continue
            d = self._compiled.directives(p, rnd)
            spec = d.breakaway_now
            if spec is None:
                continue
            prog = self.programs[p]
            if not isinstance(prog, PoolMemberParty) or prog.left:
                continue
            self.log_exit(rnd, p, EXIT_BREAKAWAY, group=spec.leader)
            if p == spec.leader:
                self.programs[p] = PoolLeaderParty(
                    self, p, spec.members, breakaway=True,
                    member_share_scale=spec.member_share_scale,
                    bootstrap_blocks=self.history_blocks(p),
                )
            else:
                self.programs[p] = PoolMemberParty(
                    self, p, spec.leader, len(spec.members), trusting=True
                )
        # Wire the breakaway star so the new leader can reach its members.
        for p in list(self.programs):
            prog = self.programs[p]
            if isinstance(prog, PoolLeaderParty) and prog.breakaway:
                self.auth.add_edges(
                    [(prog.pid, m) for m in prog.members]
                    + [(m, prog.pid) for m in prog.members]
                )

    # -- final views ---------------------------------------------------------------

    def _finalize_views(self) -> None:
        for p in range(self.params.n):
            prog = self.programs[p]
            chain = prog.current_chain()
            if chain is None:
                chain = self._reconstruct_view(p)
            self.transcript.final_views[p] = chain
            if isinstance(prog, PoolLeaderParty):
                active = not prog.dissolved
                role = "pool_leader" if active else "fallback"
                mirrored = prog.cost if active else Fraction(0)
            elif isinstance(prog, PoolMemberParty):
                active = not prog.left
                role = "pool_member" if active else "fallback"
                mirrored = prog.cost if active else Fraction(0)
            else:
                active = False
                role = "honest_fruit"
                mirrored = Fraction(0)
            self.transcript.final_states[p] = FinalState(p, role, active, mirrored)

    def _reconstruct_view(self, party: int) -> Chain:
        """Longest-chain view for a party that tracks no chain of its own:
        replay its received blocks round by round through the adoption rule."""
        mem = PartyChainMemory(self.hub.forest)
        chain = self.genesis_chain
        history = self._history[party]
        i = 0
        while i < len(history):
            rnd = history[i][0]
            batch = []
            while i < len(history) and history[i][0] == rnd:
                batch.append(history[i][1])
                i += 1
            for b in batch:
                mem.add(b)
            node = mem.select_tip([b.ref for b in batch])
            if node.depth + 1 > len(chain):
                chain = node.chain
        return chain


def run(config: ExecutionConfig) -> ExecutionTranscript:
    return Engine(config).run()


@dataclass(frozen=True)
class RunStatistics:
    fruits_mined: int
    block_rounds: int
    payment_rounds: int
    last_block_round: int
    per_party_queries: dict[int, dict[str, int]]


def measure_statistics(transcript: ExecutionTranscript) -> RunStatistics:
    return RunStatistics(
        fruits_mined=transcript.fruits_mined(),
        block_rounds=transcript.block_rounds(),
        payment_rounds=len(transcript.payments),
        last_block_round=transcript.last_block_round(),
        per_party_queries={
            p: dict(v) for p, v in sorted(transcript.counts.items())
        },
    )
