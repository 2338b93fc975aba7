"""Ledger value types and their canonical byte serialization.

Every object serializes to a tagged, length-prefixed binary form (little-endian
lengths).  The encoding is injective and deterministic, doubles as the on-disk
transcript format, and supplies the preimages for both hash domains: mining
queries and fruit-set digests carry distinct leading tag bytes so the two can
never collide on preimages.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Optional, Union

TAG_TX = 1
TAG_RECORD = 2
TAG_FRUIT = 3
TAG_BLOCK = 4
TAG_CHAIN = 5

# Leading bytes of hash preimages; mining queries and fruit-set digests live
# in disjoint domains.
DOMAIN_MINING = b"\x00"
DOMAIN_FRUIT_SET = b"\x01"

_U32 = struct.Struct("<I")
_I64 = struct.Struct("<q")
_U64 = struct.Struct("<Q")


def _w_bytes(out: bytearray, b: bytes) -> None:
    out += _U32.pack(len(b))
    out += b


def _w_int_signed(out: bytearray, v: int) -> None:
    out += _I64.pack(v)


def _w_u64(out: bytearray, v: int) -> None:
    out += _U64.pack(v)


def _w_fraction(out: bytearray, f: Fraction) -> None:
    num, den = f.numerator, f.denominator
    sign = 1 if num < 0 else 0
    out.append(sign)
    _w_bytes(out, abs(num).to_bytes((abs(num).bit_length() + 7) // 8 or 1, "big"))
    _w_bytes(out, den.to_bytes((den.bit_length() + 7) // 8 or 1, "big"))


class _Reader:
    __slots__ = ("data", "pos")

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, k: int) -> bytes:
        if self.pos + k > len(self.data):
            raise ValueError("truncated serialization")
        b = self.data[self.pos : self.pos + k]
        self.pos += k
        return b

    def r_bytes(self) -> bytes:
        (k,) = _U32.unpack(self.take(4))
        return self.take(k)

    def r_int_signed(self) -> int:
        (v,) = _I64.unpack(self.take(8))
        return v

    def r_u64(self) -> int:
        (v,) = _U64.unpack(self.take(8))
        return v

    def r_fraction(self) -> Fraction:
        sign = self.take(1)[0]
        num = int.from_bytes(self.r_bytes(), "big")
        den = int.from_bytes(self.r_bytes(), "big")
        return Fraction(-num if sign else num, den)

    def done(self) -> bool:
        return self.pos == len(self.data)


@dataclass(frozen=True)
class Transaction:
    """An abstract ledger entry.  `payments` is used only by the pool's
    special payment transaction; ordinary environment transactions carry an
    opaque payload."""

    id: int
    payload: bytes = b""
    payments: Optional[tuple[tuple[int, Fraction], ...]] = None


@dataclass(frozen=True)
class Record:
    """A record of transactions plus the reward recipient."""

    coinbase: int
    txs: tuple[Transaction, ...] = ()

    def __post_init__(self) -> None:
        ids = [t.id for t in self.txs]
        if len(ids) != len(set(ids)):
            raise ValueError("duplicate transaction id within a record")

    @cached_property
    def key(self) -> bytes:
        return serialize(self)


SENTINEL_COINBASE = -1
EMPTY_RECORD = Record(coinbase=SENTINEL_COINBASE, txs=())


@dataclass(frozen=True, eq=False)
class Fruit:
    """Low-difficulty PoW object carrying a record; lives inside blocks."""

    h_prev: bytes
    h_f: bytes
    eta: bytes
    dig: bytes
    record: Record
    h: bytes

    @cached_property
    def key(self) -> bytes:
        return serialize(self)

    @cached_property
    def _hash(self) -> int:
        return hash(self.key)

    def __eq__(self, other) -> bool:
        return isinstance(other, Fruit) and self.key == other.key

    def __hash__(self) -> int:
        return self._hash

    def instance_tuple(self) -> tuple[bytes, bytes, bytes, Record]:
        return (self.h_prev, self.h_f, self.dig, self.record)


@dataclass(frozen=True, eq=False)
class Block:
    """High-difficulty PoW object: a fruit-shaped header plus the embedded
    fruit set, in mined order."""

    header: Fruit
    fruit_set: tuple[Fruit, ...] = ()

    @cached_property
    def key(self) -> bytes:
        return serialize(self)

    @cached_property
    def _hash(self) -> int:
        return hash(self.key)

    def __eq__(self, other) -> bool:
        return isinstance(other, Block) and self.key == other.key

    def __hash__(self) -> int:
        return self._hash

    @property
    def ref(self) -> bytes:
        return self.header.h

    @property
    def prev_ref(self) -> bytes:
        return self.header.h_prev

    def instance_tuple(self) -> tuple[bytes, bytes, bytes, Record]:
        return self.header.instance_tuple()


@dataclass(frozen=True, eq=False)
class Chain:
    """Ordered blocks, index 0 = genesis."""

    blocks: tuple[Block, ...]

    def __len__(self) -> int:
        return len(self.blocks)

    def __eq__(self, other) -> bool:
        return isinstance(other, Chain) and self.blocks == other.blocks

    def __hash__(self) -> int:
        return hash(self.tip_ref)

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    @property
    def tip_ref(self) -> bytes:
        return self.blocks[-1].ref

    def extended(self, block: Block) -> "Chain":
        return Chain(self.blocks + (block,))

    def mining_prev_ref(self) -> bytes:
        """Reference a newly mined block must point at: the tip."""
        return self.blocks[-1].ref

    def mining_fruit_anchor(self, kappa_sim: int) -> bytes:
        """Reference new fruits hang from: kappa_sim blocks below the tip,
        clamped to the lowest non-genesis block (genesis for the bare chain)."""
        top = len(self.blocks) - 1
        floor_idx = 0 if top == 0 else 1
        return self.blocks[max(floor_idx, top - kappa_sim)].ref

    def recent_refs(self, window: int) -> frozenset[bytes]:
        """References of the last `window` blocks."""
        return frozenset(b.ref for b in self.blocks[-window:])


Serializable = Union[Transaction, Record, Fruit, Block, Chain]


def _write_tx(out: bytearray, tx: Transaction) -> None:
    out.append(TAG_TX)
    _w_u64(out, tx.id)
    _w_bytes(out, tx.payload)
    if tx.payments is None:
        out.append(0)
    else:
        out.append(1)
        _w_u64(out, len(tx.payments))
        for party, amount in tx.payments:
            _w_int_signed(out, party)
            _w_fraction(out, amount)


def _write_record(out: bytearray, rec: Record) -> None:
    out.append(TAG_RECORD)
    _w_int_signed(out, rec.coinbase)
    _w_u64(out, len(rec.txs))
    for tx in rec.txs:
        _write_tx(out, tx)


def _write_fruit(out: bytearray, f: Fruit) -> None:
    out.append(TAG_FRUIT)
    _w_bytes(out, f.h_prev)
    _w_bytes(out, f.h_f)
    _w_bytes(out, f.eta)
    _w_bytes(out, f.dig)
    _write_record(out, f.record)
    _w_bytes(out, f.h)


def _write_block(out: bytearray, b: Block) -> None:
    out.append(TAG_BLOCK)
    _write_fruit(out, b.header)
    _w_u64(out, len(b.fruit_set))
    for f in b.fruit_set:
        _write_fruit(out, f)


def _write_chain(out: bytearray, c: Chain) -> None:
    out.append(TAG_CHAIN)
    _w_u64(out, len(c.blocks))
    for b in c.blocks:
        _write_block(out, b)


def serialize(obj: Serializable) -> bytes:
    out = bytearray()
    if isinstance(obj, Transaction):
        _write_tx(out, obj)
    elif isinstance(obj, Record):
        _write_record(out, obj)
    elif isinstance(obj, Fruit):
        _write_fruit(out, obj)
    elif isinstance(obj, Block):
        _write_block(out, obj)
    elif isinstance(obj, Chain):
        _write_chain(out, obj)
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")
    return bytes(out)


def _read_obj(r: _Reader):
    tag = r.take(1)[0]
    if tag == TAG_TX:
        tx_id = r.r_u64()
        payload = r.r_bytes()
        payments = None
        if r.take(1)[0] == 1:
            count = r.r_u64()
            payments = tuple(
                (r.r_int_signed(), r.r_fraction()) for _ in range(count)
            )
        return Transaction(tx_id, payload, payments)
    if tag == TAG_RECORD:
        coinbase = r.r_int_signed()
        count = r.r_u64()
        return Record(coinbase, tuple(_read_obj(r) for _ in range(count)))
    if tag == TAG_FRUIT:
        h_prev = r.r_bytes()
        h_f = r.r_bytes()
        eta = r.r_bytes()
        dig = r.r_bytes()
        record = _read_obj(r)
        h = r.r_bytes()
        return Fruit(h_prev, h_f, eta, dig, record, h)
    if tag == TAG_BLOCK:
        header = _read_obj(r)
        count = r.r_u64()
        return Block(header, tuple(_read_obj(r) for _ in range(count)))
    if tag == TAG_CHAIN:
        count = r.r_u64()
        return Chain(tuple(_read_obj(r) for _ in range(count)))
    raise ValueError(f"unknown tag {tag}")


def deserialize(data: bytes) -> Serializable:
    r = _Reader(data)
    obj = _read_obj(r)
    if not r.done():
        raise ValueError("trailing bytes after object")
    return obj


def mining_query(
    h_prev: bytes, h_f: bytes, eta: bytes, dig: bytes, record_bytes: bytes
) -> bytes:
    """Preimage of one mining query.  `record_bytes` must be the canonical
    serialization of the record so the whole preimage stays injective."""
    out = bytearray()
    _w_bytes(out, h_prev)
    _w_bytes(out, h_f)
    _w_bytes(out, eta)
    _w_bytes(out, dig)
    out += record_bytes
    return bytes(out)


def mining_query_parts(
    h_prev: bytes, h_f: bytes, dig: bytes, record_bytes: bytes,
    nonce_len: int,
) -> tuple[bytes, bytes]:
    """(head, tail) such that head + nonce + tail == mining_query(..nonce..)
    for any nonce of the given length; hoists per-round constants out of the
    mining loop."""
    head = bytearray()
    _w_bytes(head, h_prev)
    _w_bytes(head, h_f)
    head += _U32.pack(nonce_len)
    tail = bytearray()
    _w_bytes(tail, dig)
    tail += record_bytes
    return bytes(head), bytes(tail)


def fruit_sequence_bytes(fruits: Iterable[Fruit]) -> bytes:
    """Canonical serialization of an ordered fruit list (digest preimage)."""
    out = bytearray()
    count = 0
    for f in fruits:
        out += f.key
        count += 1
    return _U64.pack(count) + bytes(out)
