"""Execution transcripts: the full deterministic record of one run.

Transcripts serialize to a tagged length-prefixed binary format (the same
codec the ledger objects use) with a trailing keyed checksum, so byte
corruption is always detected.  `validate_transcript` re-checks every suite
invariant a finished run must satisfy: object validity, per-round quotas, the
exact cost meter, payment conservation, synchrony, and arrival monotonicity.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from .chain import Validator
from .core import Chain, deserialize, serialize
from .hashing import RandomOracle, genesis_block
from .params import ORACLES, ProtocolParams
from .protocols import PaymentComputation

_MAGIC = b"FPTR1\n"
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_I64 = struct.Struct("<q")

_KINDS = ("fruit", "block", "blocks")


@dataclass(frozen=True)
class DiffuseEvent:
    round: int
    arrival: int
    sender: int
    kind: str
    refs: tuple[bytes, ...]
    recipients: Optional[tuple[int, ...]]  # None = delivered to everyone


@dataclass(frozen=True)
class AuthEvent:
    round: int
    sender: int
    recipient: int
    has_payment: bool
    delivered: bool


@dataclass(frozen=True)
class MinedEvent:
    round: int
    party: int
    kind: str
    obj: object
    withheld: bool = False
    delay: int = 0


@dataclass(frozen=True)
class PaymentEvent:
    round: int
    leader: int
    computation: PaymentComputation
    pool_size: int


@dataclass(frozen=True)
class ExitEvent:
    round: int
    party: int
    reason: str
    group: Optional[int] = None  # breakaway leader id when applicable


@dataclass(frozen=True)
class FinalState:
    party: int
    role: str
    pool_active: bool
    mirrored_cost: Fraction


@dataclass
class ExecutionTranscript:
    params: ProtocolParams
    seed: int
    mode: str
    strategy_name: str
    leader: int
    corrupted: frozenset[int]
    payment_only_records: bool
    query_log: list[tuple[int, int, str, int]] = field(default_factory=list)
    counts: dict[int, dict[str, int]] = field(default_factory=dict)
    diffuse_log: list[DiffuseEvent] = field(default_factory=list)
    auth_log: list[AuthEvent] = field(default_factory=list)
    mined: list[MinedEvent] = field(default_factory=list)
    payments: list[PaymentEvent] = field(default_factory=list)
    exits: list[ExitEvent] = field(default_factory=list)
    final_views: dict[int, Chain] = field(default_factory=dict)
    final_states: dict[int, FinalState] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    # -- statistics ---------------------------------------------------------

    def fruits_mined(self) -> int:
        return sum(1 for ev in self.mined if ev.kind == "fruit")

    def block_rounds(self) -> int:
        return len({ev.round for ev in self.mined if ev.kind == "block"})

    def last_block_round(self) -> int:
        rounds = [ev.round for ev in self.mined if ev.kind == "block"]
        return max(rounds) if rounds else 0

    def cost_of(self, party: int) -> Fraction:
        per_party = self.counts.get(party, {})
        return sum(
            (count * self.params.cost_of(o) for o, count in per_party.items()),
            Fraction(0),
        )

    # -- serialization --------------------------------------------------------

    def to_bytes(self) -> bytes:
        out = bytearray(_MAGIC)
        w = _Writer(out)
        w.u64(self.seed)
        w.text(self.mode)
        w.text(self.strategy_name)
        w.i64(self.leader)
        w.u8(1 if self.payment_only_records else 0)
        w.int_list(sorted(self.corrupted))
        w.text_list(self.warnings)
        self._write_params(w)

        w.u64(len(self.query_log))
        for rnd, party, oracle, outcome in self.query_log:
            out += _U32.pack(rnd)
            out += _U16.pack(party)
            w.u8(ORACLES.index(oracle))
            w.u8(outcome)

        parties = sorted(self.counts)
        w.u64(len(parties))
        for p in parties:
            out += _U16.pack(p)
            for o in ORACLES:
                w.u64(self.counts[p].get(o, 0))

        w.u64(len(self.diffuse_log))
        for ev in self.diffuse_log:
            out += _U32.pack(ev.round)
            w.u64(ev.arrival)
            out += _U16.pack(ev.sender)
            w.u8(_KINDS.index(ev.kind))
            w.u64(len(ev.refs))
            for ref in ev.refs:
                w.blob(ref)
            if ev.recipients is None:
                w.u8(0)
            else:
                w.u8(1)
                w.int_list(sorted(ev.recipients))

        w.u64(len(self.auth_log))
        for ev in self.auth_log:
            out += _U32.pack(ev.round)
            out += _U16.pack(ev.sender)
            out += _U16.pack(ev.recipient)
            w.u8(1 if ev.has_payment else 0)
            w.u8(1 if ev.delivered else 0)

        w.u64(len(self.mined))
        for ev in self.mined:
            out += _U32.pack(ev.round)
            out += _U16.pack(ev.party)
            w.u8(_KINDS.index(ev.kind))
            w.u8(1 if ev.withheld else 0)
            out += _U16.pack(ev.delay)
            w.blob(serialize(ev.obj))

        w.u64(len(self.payments))
        for ev in self.payments:
            out += _U32.pack(ev.round)
            out += _U16.pack(ev.leader)
            out += _U16.pack(ev.pool_size)
            comp = ev.computation
            w.fraction(comp.rew)
            w.fraction(comp.cost)
            w.fraction(comp.w_leader)
            w.fraction(comp.w_member)
            w.blob(serialize(comp.tx) if comp.tx is not None else b"")

        w.u64(len(self.exits))
        for ev in self.exits:
            out += _U32.pack(ev.round)
            out += _U16.pack(ev.party)
            w.text(ev.reason)
            w.i64(-1 if ev.group is None else ev.group)

        views = sorted(self.final_views)
        w.u64(len(views))
        for p in views:
            out += _U16.pack(p)
            w.blob(serialize(self.final_views[p]))

        states = sorted(self.final_states)
        w.u64(len(states))
        for p in states:
            st = self.final_states[p]
            out += _U16.pack(p)
            w.text(st.role)
            w.u8(1 if st.pool_active else 0)
            w.fraction(st.mirrored_cost)

        out += hashlib.blake2b(bytes(out), digest_size=16).digest()
        return bytes(out)

    def _write_params(self, w: "_Writer") -> None:
        p = self.params
        w.u64(p.kappa_sim)
        w.u64(p.n)
        w.u64(p.q)
        w.u64(p.big_n)
        w.u64(p.r)
        for f in (p.p_f, p.p_b, p.reward_f, p.c_lc, p.c_fs, p.c_tx, p.c_ro,
                  p.c_ltx, p.delta):
            w.fraction(f)

    def digest(self) -> str:
        return hashlib.blake2b(self.to_bytes(), digest_size=32).hexdigest()

    @classmethod
    def from_bytes(cls, data: bytes) -> "ExecutionTranscript":
        if len(data) < len(_MAGIC) + 16 or not data.startswith(_MAGIC):
            raise ValueError("not a transcript file")
        body, checksum = data[:-16], data[-16:]
        if hashlib.blake2b(body, digest_size=16).digest() != checksum:
            raise ValueError("transcript checksum mismatch")
        r = _ReaderT(body[len(_MAGIC):])
        seed = r.u64()
        mode = r.text()
        strategy_name = r.text()
        leader = r.i64()
        payment_only_records = bool(r.u8())
        corrupted = frozenset(r.int_list())
        warnings = r.text_list()
        params = _read_params(r)

        t = cls(params, seed, mode, strategy_name, leader, corrupted, payment_only_records,
                warnings=warnings)
        for _ in range(r.u64()):
            rnd = r.u32()
            party = r.u16()
            oracle = ORACLES[r.u8()]
            outcome = r.u8()
            t.query_log.append((rnd, party, oracle, outcome))
        for _ in range(r.u64()):
            p = r.u16()
            t.counts[p] = {o: r.u64() for o in ORACLES}
        for _ in range(r.u64()):
            rnd = r.u32()
            arrival = r.u64()
            sender = r.u16()
            kind = _KINDS[r.u8()]
            refs = tuple(r.blob() for _ in range(r.u64()))
            recipients = tuple(r.int_list()) if r.u8() else None
            t.diffuse_log.append(
                DiffuseEvent(rnd, arrival, sender, kind, refs, recipients)
            )
        for _ in range(r.u64()):
            t.auth_log.append(
                AuthEvent(r.u32(), r.u16(), r.u16(), bool(r.u8()), bool(r.u8()))
            )
        for _ in range(r.u64()):
            rnd = r.u32()
            party = r.u16()
            kind = _KINDS[r.u8()]
            withheld = bool(r.u8())
            delay = r.u16()
            obj = deserialize(r.blob())
            t.mined.append(MinedEvent(rnd, party, kind, obj, withheld, delay))
        for _ in range(r.u64()):
            rnd = r.u32()
            leader_p = r.u16()
            pool_size = r.u16()
            rew = r.fraction()
            cost = r.fraction()
            w_leader = r.fraction()
            w_member = r.fraction()
            raw = r.blob()
            tx = deserialize(raw) if raw else None
            t.payments.append(PaymentEvent(
                rnd, leader_p,
                PaymentComputation(rew, cost, w_leader, w_member, tx),
                pool_size,
            ))
        for _ in range(r.u64()):
            rnd = r.u32()
            party = r.u16()
            reason = r.text()
            group = r.i64()
            t.exits.append(
                ExitEvent(rnd, party, reason, None if group < 0 else group)
            )
        for _ in range(r.u64()):
            p = r.u16()
            t.final_views[p] = deserialize(r.blob())
        for _ in range(r.u64()):
            p = r.u16()
            t.final_states[p] = FinalState(p, r.text(), bool(r.u8()),
                                           r.fraction())
        return t


class _Writer:
    __slots__ = ("out",)

    def __init__(self, out: bytearray):
        self.out = out

    def u8(self, v: int) -> None:
        self.out.append(v)

    def u64(self, v: int) -> None:
        self.out += _U64.pack(v)

    def i64(self, v: int) -> None:
        self.out += _I64.pack(v)

    def blob(self, b: bytes) -> None:
        self.out += _U32.pack(len(b))
        self.out += b

    def text(self, s: str) -> None:
        self.blob(s.encode())

    def int_list(self, xs) -> None:
        self.u64(len(xs))
        for x in xs:
            self.i64(x)

    def text_list(self, xs) -> None:
        self.u64(len(xs))
        for x in xs:
            self.text(x)

    def fraction(self, f: Fraction) -> None:
        self.u8(1 if f < 0 else 0)
        num = abs(f.numerator)
        self.blob(num.to_bytes((num.bit_length() + 7) // 8 or 1, "big"))
        den = f.denominator
        self.blob(den.to_bytes((den.bit_length() + 7) // 8 or 1, "big"))


class _ReaderT:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise ValueError("truncated transcript")
        b = self.data[self.pos : self.pos + k]
        self.pos += k
        return b

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return _U16.unpack(self.take(2))[0]

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def u64(self) -> int:
        return _U64.unpack(self.take(8))[0]

    def i64(self) -> int:
        return _I64.unpack(self.take(8))[0]

    def blob(self) -> bytes:
        return self.take(self.u32())

    def text(self) -> str:
        return self.blob().decode()

    def int_list(self) -> list[int]:
        return [self.i64() for _ in range(self.u64())]

    def text_list(self) -> list[str]:
        return [self.text() for _ in range(self.u64())]

    def fraction(self) -> Fraction:
        sign = self.u8()
        num = int.from_bytes(self.blob(), "big")
        den = int.from_bytes(self.blob(), "big")
        return Fraction(-num if sign else num, den)


def _read_params(r: _ReaderT) -> ProtocolParams:
    kappa_sim = r.u64()
    n = r.u64()
    q = r.u64()
    big_n = r.u64()
    rr = r.u64()
    fracs = [r.fraction() for _ in range(9)]
    return ProtocolParams(
        kappa_sim=kappa_sim, n=n, q=q, big_n=big_n, r=rr,
        p_f=fracs[0], p_b=fracs[1], reward_f=fracs[2], c_lc=fracs[3],
        c_fs=fracs[4], c_tx=fracs[5], c_ro=fracs[6], c_ltx=fracs[7],
        delta=fracs[8],
    )


def validate_transcript(t: ExecutionTranscript) -> list[str]:
    """Re-run every invariant suite over a stored transcript; returns the
    list of violations (empty = clean)."""
    problems: list[str] = []
    params = t.params

    # Per-round quotas.
    used: dict[tuple[int, int, str], int] = {}
    for rnd, party, oracle, _ in t.query_log:
        key = (rnd, party, oracle)
        used[key] = used.get(key, 0) + 1
    for (rnd, party, oracle), count in used.items():
        if count > params.quota_of(oracle):
            problems.append(
                f"quota: party {party} made {count} {oracle} queries in round {rnd}"
            )

    # Cost meter: per-party counts must equal the query log exactly.
    recount: dict[int, dict[str, int]] = {}
    for _, party, oracle, _ in t.query_log:
        per = recount.setdefault(party, {o: 0 for o in ORACLES})
        per[oracle] += 1
    for party, per in t.counts.items():
        expect = recount.get(party, {o: 0 for o in ORACLES})
        for o in ORACLES:
            if per.get(o, 0) != expect[o]:
                problems.append(
                    f"cost meter: party {party} oracle {o} count "
                    f"{per.get(o, 0)} != logged {expect[o]}"
                )

    # Payment conservation.
    for ev in t.payments:
        comp = ev.computation
        if comp.w_leader + (ev.pool_size - 1) * comp.w_member != comp.rew:
            problems.append(
                f"payment conservation violated in round {ev.round}"
            )

    # Synchrony and arrival monotonicity.
    last_arrival = -1
    for ev in t.diffuse_log:
        if ev.arrival <= last_arrival:
            problems.append(f"arrival index not increasing at {ev.arrival}")
        last_arrival = ev.arrival
        if ev.sender not in t.corrupted and ev.recipients is not None:
            problems.append(
                f"synchrony: honest sender {ev.sender} used selective delivery"
            )

    # Object validity: honest miners' objects and all final views.
    oracle = RandomOracle(t.seed, params)
    genesis = genesis_block(oracle, params)
    validator = Validator(oracle, params, genesis)
    for ev in t.mined:
        if ev.party in t.corrupted:
            continue
        if ev.kind == "fruit" and not validator.is_fruit_valid(ev.obj).valid:
            problems.append(f"invalid honest fruit mined in round {ev.round}")
        if ev.kind == "block" and not validator.is_block_valid(ev.obj).valid:
            problems.append(f"invalid honest block mined in round {ev.round}")
    for party, view in t.final_views.items():
        verdict = validator.is_chain_valid(view)
        if not verdict.valid:
            problems.append(
                f"final view of party {party} invalid "
                f"(condition {verdict.failed_condition})"
            )
    return problems
