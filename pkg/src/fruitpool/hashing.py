"""Hash abstractions: the memoizing random oracle and the fruit-set digest.

The oracle is a keyed PRF (blake2b keyed by the run seed) truncated to
2*kappa_sim bits, which yields exact success probabilities and bit-exact
replay.  All other deterministic randomness (nonces, environment draws) is
derived from the same seed through disjoint domain tags.
"""

from __future__ import annotations

import hashlib
import struct
from fractions import Fraction

from .core import DOMAIN_FRUIT_SET, DOMAIN_MINING, Fruit, fruit_sequence_bytes
from .params import ProtocolParams

_DOMAIN_NONCE = b"\x02"
_DOMAIN_ENV = b"\x03"
_PACK3 = struct.Struct("<III")
_PACK2 = struct.Struct("<II")


class RandomOracle:
    """Memoized uniform digests over mining queries, plus the collision
    resistant digest of ordered fruit sets (disjoint preimage domain)."""

    def __init__(self, seed: int, params: ProtocolParams):
        self.params = params
        self._key = seed.to_bytes(8, "little", signed=False)
        self._size = params.digest_bytes
        self.memo: dict[bytes, bytes] = {}

    def digest(self, query: bytes) -> bytes:
        h = self.memo.get(query)
        if h is None:
            h = hashlib.blake2b(
                DOMAIN_MINING + query, key=self._key, digest_size=self._size
            ).digest()
            self.memo[query] = h
        return h

    def fruit_set_digest(self, fruits) -> bytes:
        return hashlib.blake2b(
            DOMAIN_FRUIT_SET + fruit_sequence_bytes(fruits),
            key=self._key,
            digest_size=self._size,
        ).digest()

    def zero_digest(self) -> bytes:
        return bytes(self._size)


def classify_digest(h: bytes, params: ProtocolParams) -> tuple[bool, bool]:
    """(fruit_success, block_success): trailing half below the fruit cutoff,
    leading half below the block cutoff.  The two halves are independent."""
    half = params.half_bytes
    fruit_ok = int.from_bytes(h[half:], "big") < params.threshold_fruit
    block_ok = int.from_bytes(h[:half], "big") < params.threshold_block
    return fruit_ok, block_ok


class SeedStreams:
    """Per-party per-round randomness, keyed so that one party's draws do not
    depend on any other party's behaviour (enables paired-seed comparisons).
    Nonces are sliced out of 64-byte expansion chunks."""

    def __init__(self, seed: int, params: ProtocolParams):
        self._key = seed.to_bytes(8, "little", signed=False)
        self._nonce_len = params.nonce_bytes
        self.per_chunk = 64 // self._nonce_len

    def nonce_chunk(self, party: int, rnd: int, chunk: int) -> bytes:
        return hashlib.blake2b(
            _DOMAIN_NONCE + _PACK3.pack(party, rnd, chunk),
            key=self._key,
            digest_size=64,
        ).digest()

    def nonce(self, party: int, rnd: int, k: int) -> bytes:
        nl = self._nonce_len
        chunk = self.nonce_chunk(party, rnd, k // self.per_chunk)
        off = (k % self.per_chunk) * nl
        return chunk[off : off + nl]

    def env_bytes(self, party: int, rnd: int, length: int = 16) -> bytes:
        return hashlib.blake2b(
            _DOMAIN_ENV + _PACK2.pack(party, rnd),
            key=self._key,
            digest_size=length,
        ).digest()

    def env_uniform(self, party: int, rnd: int) -> float:
        raw = int.from_bytes(self.env_bytes(party, rnd, 8), "big")
        return raw / 2**64


def genesis_block(oracle: RandomOracle, params: ProtocolParams):
    """The constant root block: all-zero header fields, empty fruit set, with
    its reference drawn through the oracle at initialization."""
    from .core import Block, EMPTY_RECORD, mining_query, serialize

    zero = oracle.zero_digest()
    eta = bytes(params.nonce_bytes)
    query = mining_query(zero, zero, eta, zero, serialize(EMPTY_RECORD))
    h = oracle.digest(query)
    header = Fruit(zero, zero, eta, zero, EMPTY_RECORD, h)
    return Block(header, ())


def effective_probabilities(params: ProtocolParams) -> tuple[Fraction, Fraction]:
    """Exact success probabilities induced by the integer cutoffs."""
    scale = 2**params.kappa_sim
    return (
        Fraction(params.threshold_fruit, scale),
        Fraction(params.threshold_block, scale),
    )
