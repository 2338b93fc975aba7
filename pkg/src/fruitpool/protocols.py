"""Party programs: the solo mining protocol, pool leader, and pool member.

Programs are deterministic state machines driven once per round by the engine
through a runtime facade (oracles, network, nonce streams, event logging).
A leader that dissolves or a member that leaves switches to an embedded solo
program for the rest of the run, seeding its first longest-chain query with
the block history it retained while pooled.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .adversary import RoundDirectives
from .core import (
    Block,
    EMPTY_RECORD,
    Fruit,
    Record,
    Transaction,
    mining_query_parts,
)
from .network import KIND_BLOCK, KIND_BLOCK_ARRAY, KIND_FRUIT
from .oracles import FruitPool

EXIT_DISSOLVED = "dissolved"
EXIT_MISMATCH = "leave_mismatch"
EXIT_NO_MESSAGE = "leave_no_message"
EXIT_NO_PAYMENT_TX = "leave_no_payment_tx"
EXIT_BAD_AMOUNT = "leave_bad_amount"
EXIT_FAILED_LTX = "leave_failed_ltx"
EXIT_STRATEGY = "leave_strategy"
EXIT_BREAKAWAY = "breakaway"


@dataclass(frozen=True)
class Instance:
    """The four header fields every pool query hashes with a nonce."""

    inst1: bytes
    inst2: bytes
    inst3: bytes
    inst4: Record

    def as_tuple(self) -> tuple[bytes, bytes, bytes, Record]:
        return (self.inst1, self.inst2, self.inst3, self.inst4)


@dataclass(frozen=True)
class InstanceMessage:
    """Authenticated per-round message from the leader to each member."""

    instance: Instance
    f_rec: tuple[Fruit, ...]
    round: int
    tx_payment: Optional[Transaction] = None


@dataclass(frozen=True)
class PaymentComputation:
    rew: Fraction
    cost: Fraction
    w_leader: Fraction
    w_member: Fraction
    tx: Optional[Transaction] = None


def compute_payment(rew: Fraction, cost: Fraction, n: int,
                    tx: Optional[Transaction] = None) -> PaymentComputation:
    """Leader keeps min(cost, rew) plus an equal share of any surplus; every
    other party gets the surplus share.  Conserves rew exactly."""
    if rew < 0 or cost < 0 or n < 2:
        raise ValueError("payment needs rew, cost >= 0 and n >= 2")
    surplus_share = max(Fraction(rew - cost, n), Fraction(0))
    w_leader = min(cost, rew) + surplus_share
    return PaymentComputation(rew, cost, w_leader, surplus_share, tx)


def is_payment_round(blocks_in, fruits_in, instance: Instance) -> bool:
    """A round pays out iff the previous round diffused at least one block and
    nothing diffused then contradicts the pool's instance."""
    if not blocks_in:
        return False
    expected = instance.as_tuple()
    for b in blocks_in:
        if b.instance_tuple() != expected:
            return False
    for f in fruits_in:
        if f.instance_tuple() != expected:
            return False
    return True


def _mismatch(blocks_in, fruits_in, instance: Instance) -> bool:
    expected = instance.as_tuple()
    return any(b.instance_tuple() != expected for b in blocks_in) or any(
        f.instance_tuple() != expected for f in fruits_in
    )


class _Miner:
    """Shared mining loop: q nonce draws against one instance, at most one
    block per round, diffusion honoring withhold/delay directives."""

    def mine(self, rt, pid: int, rnd: int, instance: Instance,
             f_rec: tuple[Fruit, ...], d: RoundDirectives,
             on_fruit=None, on_block=None) -> None:
        params = rt.params
        budget = params.q if d.ro_budget is None else d.ro_budget
        if budget <= 0:
            return
        head, tail = mining_query_parts(
            instance.inst1, instance.inst2, instance.inst3,
            instance.inst4.key, params.nonce_bytes,
        )
        success = False
        query_ro = rt.hub.query_ro
        streams = rt.streams
        nl = params.nonce_bytes
        per_chunk = streams.per_chunk
        chunk = b""
        for k in range(budget):
            off = (k % per_chunk) * nl
            if off == 0:
                chunk = streams.nonce_chunk(pid, rnd, k // per_chunk)
            eta = chunk[off : off + nl]
            digest, fruit_ok, block_ok = query_ro(pid, head + eta + tail)
            if fruit_ok:
                fruit = Fruit(instance.inst1, instance.inst2, eta,
                              instance.inst3, instance.inst4, digest)
                if on_fruit is not None:
                    on_fruit(fruit)
                self._send(rt, pid, rnd, KIND_FRUIT, fruit, d)
            if block_ok and not success:
                header = Fruit(instance.inst1, instance.inst2, eta,
                               instance.inst3, instance.inst4, digest)
                block = Block(header, f_rec)
                success = True
                if on_block is not None:
                    on_block(block)
                self._send(rt, pid, rnd, KIND_BLOCK, block, d)

    def _send(self, rt, pid: int, rnd: int, kind: str, obj, d: RoundDirectives) -> None:
        if d.withhold:
            rt.log_mined(rnd, pid, kind, obj, withheld=True)
            return
        if d.delay:
            rt.log_mined(rnd, pid, kind, obj, delay=d.delay)
            rt.schedule_delayed(pid, rnd + d.delay, kind, obj)
            return
        rt.log_mined(rnd, pid, kind, obj)
        rt.net.diffuse(pid, kind, obj)


class HonestFruitParty(_Miner):
    """The plain per-round protocol: refresh the chain, fold in fruits, build
    a record, then mine.  Also used as the fallback after leaving a pool."""

    def __init__(self, rt, pid: int, bootstrap_blocks: tuple[Block, ...] = (),
                 chain=None, pool: Optional[FruitPool] = None):
        self.rt = rt
        self.pid = pid
        self.chain = chain if chain is not None else rt.genesis_chain
        self.pool = pool if pool is not None else FruitPool()
        self._bootstrap = tuple(bootstrap_blocks)

    def current_chain(self):
        return self.chain

    def run_round(self, ctx) -> None:
        rt, pid = self.rt, self.pid
        rnd = ctx.round
        d = rt.directives(pid, rnd)

        new_blocks = ctx.blocks_in
        if self._bootstrap:
            merged = list(self._bootstrap)
            seen = {b.ref for b in merged}
            merged.extend(b for b in ctx.blocks_in if b.ref not in seen)
            new_blocks = merged
            self._bootstrap = ()
        res = rt.hub.query_lc(pid, self.chain, new_blocks)
        self.chain = res.chain

        _, f_rec, dig = rt.hub.query_fs(pid, self.chain, self.pool, ctx.fruits_in)
        record = rt.hub.query_tx(pid, ctx.env_txs, res.records)
        instance = Instance(res.h_prev, res.h_f, dig, record)

        def on_fruit(fruit: Fruit) -> None:
            self.pool.add(fruit)

        def on_block(block: Block) -> None:
            self.chain = self.chain.extended(block)

        self.mine(rt, pid, rnd, instance, f_rec, d, on_fruit, on_block)
        if ctx.blocks_in:
            rt.net.diffuse(pid, KIND_BLOCK_ARRAY, tuple(ctx.blocks_in))


class PoolLeaderParty(_Miner):
    """Pool leader: computes payments, refreshes the instance through the
    three state oracles, hands it to every member, then mines like anyone."""

    def __init__(self, rt, pid: int, members: tuple[int, ...],
                 breakaway: bool = False,
                 member_share_scale: Fraction = Fraction(1),
                 bootstrap_blocks: tuple[Block, ...] = ()):
        self.rt = rt
        self.pid = pid
        self.members = tuple(m for m in members if m != pid)
        self.pool_size = len(self.members) + 1
        self.breakaway = breakaway
        self.member_share_scale = member_share_scale
        self.chain = rt.genesis_chain
        self.pool = FruitPool()
        self.records: tuple[Record, ...] = ()
        self.instance = Instance(
            self.chain.mining_prev_ref(),
            self.chain.mining_fruit_anchor(rt.params.kappa_sim),
            rt.oracle.zero_digest(),
            EMPTY_RECORD,
        )
        self.f_rec: tuple[Fruit, ...] = ()
        self.cost = Fraction(0)
        self.dissolved = False
        self.fallback: Optional[HonestFruitParty] = None
        self._bootstrap = tuple(bootstrap_blocks)
        self._forced_lc = breakaway  # align with the longest chain on entry

    def current_chain(self):
        if self.dissolved:
            return self.fallback.current_chain()
        return self.chain

    def _dissolve(self, ctx) -> None:
        rt = self.rt
        rt.log_exit(ctx.round, self.pid, EXIT_DISSOLVED)
        self.dissolved = True
        self.fallback = HonestFruitParty(
            rt, self.pid, bootstrap_blocks=rt.history_blocks(self.pid),
            chain=self.chain, pool=self.pool,
        )

    def run_round(self, ctx) -> None:
        if self.dissolved:
            self.fallback.run_round(ctx)
            return
        rt, pid = self.rt, self.pid
        rnd = ctx.round
        d = rt.directives(pid, rnd)
        params = rt.params

        if not self.breakaway and not d.ignore_checks and _mismatch(
            ctx.blocks_in, ctx.fruits_in, self.instance
        ):
            self._dissolve(ctx)
            self.fallback.run_round(ctx)
            return

        payment_block = self._payment_block(ctx)
        tx_payment = None
        if payment_block is not None:
            rew = Fraction(len(payment_block.fruit_set)) * params.reward_f
            pay = compute_payment(rew, self.cost, self.pool_size)
            tx_payment = self._payment_tx(pay, d)
            rt.log_payment(
                rnd, pid,
                PaymentComputation(pay.rew, pay.cost, pay.w_leader,
                                   pay.w_member, tx_payment),
                pool_size=self.pool_size,
            )

        run_lc = bool(ctx.blocks_in) or self._forced_lc
        if run_lc and not d.skip_lc:
            self._forced_lc = False
            new_blocks = list(ctx.blocks_in)
            if self._bootstrap:
                merged = list(self._bootstrap)
                seen = {b.ref for b in merged}
                merged.extend(b for b in new_blocks if b.ref not in seen)
                new_blocks = merged
                self._bootstrap = ()
            res = rt.hub.query_lc(pid, self.chain, new_blocks)
            self.chain = res.chain
            self.records = res.records
            inst1, inst2 = res.h_prev, res.h_f
            self.cost = params.c_lc
        elif run_lc and d.skip_lc:
            inst1, inst2 = self.instance.inst1, self.instance.inst2
            self.cost = Fraction(0)
        else:
            inst1, inst2 = self.instance.inst1, self.instance.inst2

        if d.skip_fs:
            inst3 = self.instance.inst3
        else:
            _, self.f_rec, inst3 = rt.hub.query_fs(
                pid, self.chain, self.pool, ctx.fruits_in
            )
            self.cost += params.c_fs

        if rt.payment_only_records:
            if tx_payment is not None:
                inst4 = Record(coinbase=pid, txs=(tx_payment,))
            else:
                inst4 = self.instance.inst4
        elif d.skip_tx:
            inst4 = self.instance.inst4
        else:
            txs = ctx.env_txs
            # A breakaway pool settles its internal shares off-chain, so its
            # record stays independent of the internal transfer parameters.
            if tx_payment is not None and not self.breakaway:
                txs = tuple(txs) + (tx_payment,)
            inst4 = rt.hub.query_tx(pid, txs, self.records)
            self.cost += params.c_tx

        self.instance = Instance(inst1, inst2, inst3, inst4)

        if not d.skip_auth:
            msg = InstanceMessage(self.instance, self.f_rec, rnd, tx_payment)
            for m in self.members:
                rt.auth_send(rnd, pid, m, msg)

        self.mine(rt, pid, rnd, self.instance, self.f_rec, d)
        if ctx.blocks_in:
            rt.net.diffuse(pid, KIND_BLOCK_ARRAY, tuple(ctx.blocks_in))

    def _payment_block(self, ctx) -> Optional[Block]:
        if not ctx.blocks_in:
            return None
        if not self.breakaway:
            return ctx.blocks_in[0]
        expected = self.instance.as_tuple()
        for b in ctx.blocks_in:
            if b.instance_tuple() == expected:
                return b
        return None

    def _payment_tx(self, pay: PaymentComputation, d: RoundDirectives) -> Transaction:
        entries = []
        for m in self.members:
            amount = pay.w_member * self.member_share_scale
            if d.underpay is not None and m not in self.rt.corrupted:
                amount = amount * (1 - d.underpay)
            entries.append((m, amount))
        return Transaction(id=self.rt.next_tx_id(), payments=tuple(entries))


class PoolMemberParty(_Miner):
    """Pool member: verify the leader round by round, mirror its instance
    cost, and mine on the received instance."""

    def __init__(self, rt, pid: int, leader: int, pool_size: int,
                 trusting: bool = False):
        self.rt = rt
        self.pid = pid
        self.leader = leader
        self.pool_size = pool_size
        self.trusting = trusting  # breakaway members skip the exit checks
        self.instance = Instance(
            rt.oracle.zero_digest(),
            rt.oracle.zero_digest(),
            rt.oracle.zero_digest(),
            EMPTY_RECORD,
        )
        self.f_rec: tuple[Fruit, ...] = ()
        self.cost = Fraction(0)
        self.left = False
        self.fallback: Optional[HonestFruitParty] = None

    def current_chain(self):
        if self.left:
            return self.fallback.current_chain()
        return None

    def _leave(self, rnd: int, reason: str) -> None:
        rt = self.rt
        rt.log_exit(rnd, self.pid, reason)
        self.left = True
        self.fallback = HonestFruitParty(
            rt, self.pid, bootstrap_blocks=rt.history_blocks(self.pid)
        )

    def run_round(self, ctx) -> None:
        if self.left:
            self.fallback.run_round(ctx)
            return
        rt, pid = self.rt, self.pid
        rnd = ctx.round
        d = rt.directives(pid, rnd)
        params = rt.params

        if d.leave_now:
            self._leave(rnd, EXIT_STRATEGY)
            self.fallback.run_round(ctx)
            return

        msg = None
        for auth in ctx.auth_in:
            if auth.sender == self.leader and auth.payload.round == rnd:
                msg = auth.payload
                break

        run_checks = not (self.trusting or d.ignore_checks or d.deviates_instance)
        if run_checks:
            if _mismatch(ctx.blocks_in, ctx.fruits_in, self.instance):
                self._leave(rnd, EXIT_MISMATCH)
                self.fallback.run_round(ctx)
                return
            if ctx.blocks_in and msg is not None:
                if self._payment_check_fails(ctx, msg, d):
                    self.fallback.run_round(ctx)
                    return
            if msg is None:
                self._leave(rnd, EXIT_NO_MESSAGE)
                self.fallback.run_round(ctx)
                return

        if ctx.blocks_in:
            self.cost = params.c_lc + params.c_fs
        else:
            self.cost = self.cost + params.c_fs
        if not rt.payment_only_records:
            self.cost += params.c_tx

        if msg is not None:
            instance = msg.instance
            f_rec = msg.f_rec
        else:
            instance = self.instance
            f_rec = self.f_rec
        if d.deviates_instance:
            instance = self._deviant_instance(instance, d)

        self.instance = instance
        self.f_rec = f_rec
        self.mine(rt, pid, rnd, instance, f_rec, d)
        if ctx.blocks_in:
            rt.net.diffuse(pid, KIND_BLOCK_ARRAY, tuple(ctx.blocks_in))

    def _payment_check_fails(self, ctx, msg, d: RoundDirectives) -> bool:
        rt, params = self.rt, self.rt.params
        rnd = ctx.round
        if msg.tx_payment is None:
            self._leave(rnd, EXIT_NO_PAYMENT_TX)
            return True
        first = ctx.blocks_in[0]
        expected = max(
            Fraction(
                Fraction(len(first.fruit_set)) * params.reward_f - self.cost,
                self.pool_size,
            ),
            Fraction(0),
        )
        amount = None
        for party, value in msg.tx_payment.payments or ():
            if party == self.pid:
                amount = value
                break
        if amount is None or amount != expected:
            self._leave(rnd, EXIT_BAD_AMOUNT)
            return True
        if not d.skip_ltx:
            bit = rt.hub.query_ltx(self.pid, msg.instance.inst4, msg.tx_payment)
            if bit == 0:
                self._leave(rnd, EXIT_FAILED_LTX)
                return True
        return False

    def _deviant_instance(self, instance: Instance, d: RoundDirectives) -> Instance:
        rt = self.rt
        inst1, inst2, inst3, inst4 = instance.as_tuple()
        prev = self.instance
        for sub in d.instance_overrides:
            if sub == "record":
                inst4 = Record(coinbase=self.pid, txs=())
            elif sub == "prev_ref":
                inst1 = _different_ref(inst1, prev.inst1, rt)
            elif sub == "anchor_ref":
                inst2 = _different_ref(inst2, prev.inst2, rt)
            elif sub == "fruit_digest":
                inst3 = _flip_low_bit(inst3)
        for slot in d.freeze_fields:
            if slot == 1:
                inst1 = prev.inst1
            elif slot == 2:
                inst2 = prev.inst2
            elif slot == 3:
                inst3 = prev.inst3
            elif slot == 4:
                inst4 = prev.inst4
        return Instance(inst1, inst2, inst3, inst4)


def _different_ref(current: bytes, previous: bytes, rt) -> bytes:
    """Some block reference other than `current`: the previous one, else the
    genesis reference, else the zero digest."""
    for candidate in (previous, rt.genesis_chain.tip_ref, rt.oracle.zero_digest()):
        if candidate != current:
            return candidate
    return current

def _flip_low_bit(digest: bytes) -> bytes:
    return digest[:-1] + bytes([digest[-1] ^ 1])
