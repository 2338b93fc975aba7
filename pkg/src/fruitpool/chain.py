"""Pure ledger predicates: fruit/block/chain validity, recency, extraction.

Verdicts carry the number of the first violated condition so tests and the
replay checker can pinpoint failures.  Fruit conditions: 1 hash equation,
2 trailing-half cutoff.  Block conditions: 1 digest of the fruit set,
2 fruit-set validity, 3 hash equation, 4 leading-half cutoff.  Chain
conditions: 1 genesis constant, 2 per-block validity and linkage, 3 fruit
recency inside the chain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .core import Block, Chain, Fruit, Record, mining_query, serialize
from .errors import InvalidChain
from .hashing import RandomOracle, classify_digest
from .params import ProtocolParams


@dataclass(frozen=True)
class ValidityVerdict:
    valid: bool
    failed_condition: Optional[int] = None

    def __bool__(self) -> bool:
        return self.valid


_OK = ValidityVerdict(True)


class Validator:
    """Validity engine bound to one oracle instance.

    Verdicts are memoized per object; they are pure functions of the object
    given a fixed oracle, so sharing the cache across callers is safe.
    """

    def __init__(self, oracle: RandomOracle, params: ProtocolParams, genesis: Block):
        self.oracle = oracle
        self.params = params
        self.genesis = genesis
        self._fruit_cache: dict[bytes, ValidityVerdict] = {}
        self._block_cache: dict[bytes, ValidityVerdict] = {}

    # -- fruits ------------------------------------------------------------

    def is_fruit_valid(self, f: Fruit) -> ValidityVerdict:
        cached = self._fruit_cache.get(f.key)
        if cached is not None:
            return cached
        verdict = self._fruit_verdict(f)
        self._fruit_cache[f.key] = verdict
        return verdict

    def _fruit_verdict(self, f: Fruit) -> ValidityVerdict:
        query = mining_query(f.h_prev, f.h_f, f.eta, f.dig, serialize(f.record))
        if self.oracle.digest(query) != f.h:
            return ValidityVerdict(False, 1)
        fruit_ok, _ = classify_digest(f.h, self.params)
        if not fruit_ok:
            return ValidityVerdict(False, 2)
        return _OK

    # -- blocks ------------------------------------------------------------

    def is_block_valid(self, b: Block) -> ValidityVerdict:
        cached = self._block_cache.get(b.key)
        if cached is not None:
            return cached
        verdict = self._block_verdict(b)
        self._block_cache[b.key] = verdict
        return verdict

    def _block_verdict(self, b: Block) -> ValidityVerdict:
        hdr = b.header
        if hdr.dig != self.oracle.fruit_set_digest(b.fruit_set):
            return ValidityVerdict(False, 1)
        for f in b.fruit_set:
            if not self.is_fruit_valid(f):
                return ValidityVerdict(False, 2)
        query = mining_query(hdr.h_prev, hdr.h_f, hdr.eta, hdr.dig, serialize(hdr.record))
        if self.oracle.digest(query) != hdr.h:
            return ValidityVerdict(False, 3)
        _, block_ok = classify_digest(hdr.h, self.params)
        if not block_ok:
            return ValidityVerdict(False, 4)
        return _OK

    # -- recency -----------------------------------------------------------

    def is_recent(self, f: Fruit, chain: Chain) -> bool:
        return f.h_f in chain.recent_refs(self.params.recency_window)

    # -- chains ------------------------------------------------------------

    def is_chain_valid(self, chain: Chain) -> ValidityVerdict:
        blocks = chain.blocks
        if not blocks or blocks[0] != self.genesis:
            return ValidityVerdict(False, 1)
        for j in range(1, len(blocks)):
            if not self.is_block_valid(blocks[j]):
                return ValidityVerdict(False, 2)
            if blocks[j].prev_ref != blocks[j - 1].ref:
                return ValidityVerdict(False, 2)
        # Window aligned with the mining-side recency rule: a fruit recent
        # w.r.t. a chain of length L may enter the block at index L, so the
        # embedded fruit may point as deep as index j - window.
        window = self.params.recency_window
        ref_index = {b.ref: i for i, b in enumerate(blocks)}
        for j in range(1, len(blocks)):
            for f in blocks[j].fruit_set:
                k = ref_index.get(f.h_f)
                if k is None or k < j - window:
                    return ValidityVerdict(False, 3)
        return _OK

    # -- extraction ----------------------------------------------------------

    def extract_fruit(self, chain: Chain, validate: bool = True) -> tuple[Record, ...]:
        """Records of the chain's distinct fruits, ordered by first containing
        block and within-block serialization order.  The oracle wrapper calls
        this with validate=False since it filtered chains already."""
        if validate and not self.is_chain_valid(chain):
            raise InvalidChain("record extraction requires a valid chain")
        seen: set[bytes] = set()
        records = []
        for b in chain.blocks:
            for f in b.fruit_set:
                if f.key not in seen:
                    seen.add(f.key)
                    records.append(f.record)
        return tuple(records)

    def distinct_fruits(self, chain: Chain) -> tuple[Fruit, ...]:
        seen: set[bytes] = set()
        fruits = []
        for b in chain.blocks:
            for f in b.fruit_set:
                if f.key not in seen:
                    seen.add(f.key)
                    fruits.append(f)
        return tuple(fruits)

    def chain_fruit_keys(self, chain: Chain) -> frozenset[bytes]:
        return frozenset(f.key for b in chain.blocks for f in b.fruit_set)
