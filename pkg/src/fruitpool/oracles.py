"""The five cost-metered, quota-limited oracles behind one hub.

Per party and round, the random oracle answers up to q mining queries and each
of the other four oracles up to one query; every answered query charges its
cost constant and lands in the query log.  Longest-chain state is per party:
each party's oracle memory holds every block that party ever submitted, and
chain selection works on an incrementally maintained block forest whose
validity labels are shared across parties (they are party-independent).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional

from .chain import Validator
from .core import Block, Chain, Fruit, Record, Transaction
from .errors import QuotaExceeded
from .hashing import RandomOracle
from .params import (
    ORACLE_FS,
    ORACLE_LC,
    ORACLE_LTX,
    ORACLE_RO,
    ORACLE_TX,
    ORACLES,
    ProtocolParams,
)

RO_OUTCOME_FRUIT = 1
RO_OUTCOME_BLOCK = 2


@dataclass(frozen=True)
class OracleConfig:
    d_pf: int
    d_pb: int
    quotas: dict[str, int]
    costs: dict[str, Fraction]

    @classmethod
    def from_params(cls, params: ProtocolParams) -> "OracleConfig":
        return cls(
            d_pf=params.threshold_fruit,
            d_pb=params.threshold_block,
            quotas={o: params.quota_of(o) for o in ORACLES},
            costs={o: params.cost_of(o) for o in ORACLES},
        )


class _Node:
    """One block in the shared forest.  The path from genesis to any node is
    unique, so per-node validity and cumulative extraction caches are sound."""

    __slots__ = (
        "block",
        "parent",
        "depth",
        "path_valid",
        "window_refs",
        "_chain",
        "_records",
        "_fruit_keys",
        "_tx_ids",
    )

    def __init__(self, block: Block, parent: Optional["_Node"], window: int,
                 intrinsic_valid: bool):
        self.block = block
        self.parent = parent
        if parent is None:
            self.depth = 0
            self.path_valid = True
            self.window_refs = (block.ref,)
        else:
            self.depth = parent.depth + 1
            allowed = parent.window_refs
            anchors_ok = all(f.h_f in allowed for f in block.fruit_set)
            self.path_valid = parent.path_valid and intrinsic_valid and anchors_ok
            self.window_refs = (parent.window_refs + (block.ref,))[-window:]
        self._chain: Optional[Chain] = None
        self._records = None
        self._fruit_keys = None
        self._tx_ids = None

    @property
    def chain(self) -> Chain:
        if self._chain is None:
            if self.parent is None:
                self._chain = Chain((self.block,))
            else:
                self._chain = self.parent.chain.extended(self.block)
        return self._chain

    @property
    def fruit_keys(self) -> frozenset[bytes]:
        if self._fruit_keys is None:
            base = frozenset() if self.parent is None else self.parent.fruit_keys
            own = frozenset(f.key for f in self.block.fruit_set)
            self._fruit_keys = base | own
        return self._fruit_keys

    @property
    def records(self) -> tuple[Record, ...]:
        if self._records is None:
            if self.parent is None:
                self._records = ()
            else:
                prev = self.parent.records
                seen = self.parent.fruit_keys
                fresh = []
                local: set[bytes] = set()
                for f in self.block.fruit_set:
                    if f.key not in seen and f.key not in local:
                        local.add(f.key)
                        fresh.append(f.record)
                self._records = prev + tuple(fresh)
        return self._records

    @property
    def tx_ids(self) -> frozenset[int]:
        if self._tx_ids is None:
            base = frozenset() if self.parent is None else self.parent.tx_ids
            own = frozenset(
                tx.id for f in self.block.fruit_set for tx in f.record.txs
            )
            self._tx_ids = base | own
        return self._tx_ids


class BlockForest:
    """Shared tree of all blocks seen by anyone, keyed by reference."""

    def __init__(self, validator: Validator, genesis: Block):
        self.validator = validator
        self.window = validator.params.recency_window
        self.genesis = genesis
        self.root = _Node(genesis, None, self.window, True)
        self.nodes: dict[bytes, _Node] = {genesis.ref: self.root}
        self._orphans: dict[bytes, list[Block]] = {}

    def add(self, block: Block) -> Optional[_Node]:
        node = self.nodes.get(block.ref)
        if node is not None:
            return node
        parent = self.nodes.get(block.prev_ref)
        if parent is None:
            self._orphans.setdefault(block.prev_ref, []).append(block)
            return None
        return self._attach(block, parent)

    def _attach(self, block: Block, parent: _Node) -> _Node:
        intrinsic = self.validator.is_block_valid(block).valid
        node = _Node(block, parent, self.window, intrinsic)
        self.nodes[block.ref] = node
        for child in self._orphans.pop(block.ref, ()):  # now placeable
            if child.ref not in self.nodes:
                self._attach(child, node)
        return node


class PartyChainMemory:
    """One party's longest-chain oracle memory and selection state."""

    __slots__ = ("forest", "known", "arrival", "_seq", "avail", "waiting",
                 "best_depth", "best_tips")

    def __init__(self, forest: BlockForest):
        self.forest = forest
        g = forest.genesis.ref
        self.known: set[bytes] = {g}
        self.arrival: dict[bytes, int] = {g: 0}
        self._seq = 1
        self.avail: set[bytes] = {g}
        self.waiting: dict[bytes, list[bytes]] = {}
        self.best_depth = 0
        self.best_tips: list[bytes] = [g]

    def add(self, block: Block) -> None:
        ref = block.ref
        if ref in self.known:
            return
        self.known.add(ref)
        self.arrival[ref] = self._seq
        self._seq += 1
        self.forest.add(block)
        if block.prev_ref in self.avail:
            self._make_available(ref)
        else:
            self.waiting.setdefault(block.prev_ref, []).append(ref)

    def _make_available(self, ref: bytes) -> None:
        stack = [ref]
        while stack:
            cur = stack.pop()
            if cur in self.avail:
                continue
            node = self.forest.nodes.get(cur)
            if node is None:
                continue
            self.avail.add(cur)
            if node.path_valid:
                if node.depth > self.best_depth:
                    self.best_depth = node.depth
                    self.best_tips = [cur]
                elif node.depth == self.best_depth:
                    self.best_tips.append(cur)
            stack.extend(self.waiting.pop(cur, ()))

    def select_tip(self, array_refs: list[bytes]) -> _Node:
        """Deepest valid available node; ties go to the tip appearing first in
        the submitted array, then earliest local arrival, then low reference."""
        tips = self.best_tips
        if len(tips) == 1:
            return self.forest.nodes[tips[0]]
        tip_set = set(tips)
        for ref in array_refs:
            if ref in tip_set:
                return self.forest.nodes[ref]
        best = min(tips, key=lambda t: (self.arrival[t], t))
        return self.forest.nodes[best]


@dataclass
class LcResult:
    chain: Chain
    h_prev: bytes
    h_f: bytes
    records: tuple[Record, ...]


class OracleHub:
    """Quota enforcement, cost metering, and the five query entry points."""

    def __init__(self, oracle: RandomOracle, validator: Validator,
                 params: ProtocolParams, genesis: Block):
        self.oracle = oracle
        self.validator = validator
        self.params = params
        self.config = OracleConfig.from_params(params)
        self.genesis = genesis
        self.forest = BlockForest(validator, genesis)
        self.memories: dict[int, PartyChainMemory] = {}
        self.counts: dict[int, dict[str, int]] = {}
        self.query_log: list[tuple[int, int, str, int]] = []
        self._round = 0
        self._used: dict[tuple[int, str], int] = {}
        self._records_origin: dict[int, _Node] = {}
        self._fs_cache: dict[int, tuple[bytes, int, int, list[Fruit]]] = {}
        self._recent_cache: dict[tuple[bytes, int], frozenset[bytes]] = {}
        self._chain_keys_cache: dict[tuple[bytes, int], frozenset[bytes]] = {}
        # Hot-path constants for the mining loop.
        self._half = params.half_bytes
        self._d_pf = params.threshold_fruit
        self._d_pb = params.threshold_block

    # -- bookkeeping ---------------------------------------------------------

    def begin_round(self, rnd: int) -> None:
        self._round = rnd
        self._used.clear()

    def memory_of(self, party: int) -> PartyChainMemory:
        mem = self.memories.get(party)
        if mem is None:
            mem = PartyChainMemory(self.forest)
            self.memories[party] = mem
        return mem

    def _charge(self, party: int, oracle: str, outcome: int = 0) -> None:
        key = (party, oracle)
        used = self._used.get(key, 0)
        if used >= self.config.quotas[oracle]:
            raise QuotaExceeded(
                f"party {party} exceeded {oracle} quota in round {self._round}"
            )
        self._used[key] = used + 1
        per_party = self.counts.get(party)
        if per_party is None:
            per_party = {o: 0 for o in ORACLES}
            self.counts[party] = per_party
        per_party[oracle] += 1
        self.query_log.append((self._round, party, oracle, outcome))

    def total_cost(self, party: int) -> Fraction:
        per_party = self.counts.get(party)
        if per_party is None:
            return Fraction(0)
        return sum(
            (count * self.config.costs[o] for o, count in per_party.items()),
            Fraction(0),
        )

    # -- random oracle -------------------------------------------------------

    def query_ro(self, party: int, instance_bytes: bytes) -> tuple[bytes, bool, bool]:
        key = (party, ORACLE_RO)
        used = self._used.get(key, 0)
        if used >= self.config.quotas[ORACLE_RO]:
            raise QuotaExceeded(
                f"party {party} exceeded ro quota in round {self._round}"
            )
        self._used[key] = used + 1
        digest = self.oracle.digest(instance_bytes)
        half = self._half
        fruit_ok = int.from_bytes(digest[half:], "big") < self._d_pf
        block_ok = int.from_bytes(digest[:half], "big") < self._d_pb
        outcome = (RO_OUTCOME_FRUIT if fruit_ok else 0) | (
            RO_OUTCOME_BLOCK if block_ok else 0
        )
        per_party = self.counts.get(party)
        if per_party is None:
            per_party = {o: 0 for o in ORACLES}
            self.counts[party] = per_party
        per_party[ORACLE_RO] += 1
        self.query_log.append((self._round, party, ORACLE_RO, outcome))
        return digest, fruit_ok, block_ok

    # -- longest chain -------------------------------------------------------

    def query_lc(self, party: int, chain: Chain, new_blocks: Iterable[Block]) -> LcResult:
        self._charge(party, ORACLE_LC)
        mem = self.memory_of(party)
        for b in chain.blocks[1:]:
            mem.add(b)
        array_refs = []
        for b in new_blocks:
            mem.add(b)
            array_refs.append(b.ref)

        node = mem.select_tip(array_refs)
        if node.depth + 1 > len(chain):
            chosen = node.chain
            records = node.records
            self._records_origin[id(records)] = node
        else:
            chosen = chain
            tip_node = self.forest.nodes.get(chosen.tip_ref)
            if tip_node is not None and tip_node.depth == len(chosen) - 1:
                records = tip_node.records
                self._records_origin[id(records)] = tip_node
            else:
                records = self.validator.extract_fruit(chosen, validate=False)
        return LcResult(
            chain=chosen,
            h_prev=chosen.mining_prev_ref(),
            h_f=chosen.mining_fruit_anchor(self.params.kappa_sim),
            records=records,
        )

    # -- fruit set -------------------------------------------------------------

    def _recent_refs(self, chain: Chain) -> frozenset[bytes]:
        key = (chain.tip_ref, len(chain))
        refs = self._recent_cache.get(key)
        if refs is None:
            refs = chain.recent_refs(self.params.recency_window)
            self._recent_cache[key] = refs
        return refs

    def _chain_fruit_keys(self, chain: Chain) -> frozenset[bytes]:
        key = (chain.tip_ref, len(chain))
        keys = self._chain_keys_cache.get(key)
        if keys is None:
            node = self.forest.nodes.get(chain.tip_ref)
            if node is not None and node.depth == len(chain) - 1:
                keys = node.fruit_keys
            else:
                keys = self.validator.chain_fruit_keys(chain)
            self._chain_keys_cache[key] = keys
        return keys

    def query_fs(
        self,
        party: int,
        chain: Chain,
        pool: "FruitPool",
        received: Iterable[Fruit],
    ) -> tuple["FruitPool", tuple[Fruit, ...], bytes]:
        """Folds valid received fruits into the pool (the returned updated
        set) and returns the recent, not-yet-included fruits with their
        digest.  The pool object is mutated in place; callers own it."""
        self._charge(party, ORACLE_FS)
        for f in received:
            if not pool.contains(f) and self.validator.is_fruit_valid(f).valid:
                pool.add(f)
        recent = self._recent_refs(chain)
        in_chain = self._chain_fruit_keys(chain)

        cache = self._fs_cache.get(party)
        tip, length = chain.tip_ref, len(chain)
        if cache is not None and cache[0] == tip and cache[1] == length:
            _, _, idx, rec_list = cache
        else:
            idx, rec_list = 0, []
        for f in pool.fruits[idx:]:
            if f.h_f in recent and f.key not in in_chain:
                rec_list.append(f)
        self._fs_cache[party] = (tip, length, len(pool.fruits), rec_list)
        f_rec = tuple(rec_list)
        return pool, f_rec, self.oracle.fruit_set_digest(f_rec)

    # -- transactions ----------------------------------------------------------

    def query_tx(
        self,
        party: int,
        txs: Iterable[Transaction],
        records: tuple[Record, ...],
    ) -> Record:
        self._charge(party, ORACLE_TX)
        origin = self._records_origin.get(id(records))
        if origin is not None and origin.records is records:
            ledger_ids = origin.tx_ids
        else:
            ledger_ids = {tx.id for rec in records for tx in rec.txs}
        fresh = []
        seen: set[int] = set()
        for tx in txs:
            if tx.id not in ledger_ids and tx.id not in seen:
                seen.add(tx.id)
                fresh.append(tx)
        return Record(coinbase=party, txs=tuple(fresh))

    # -- light verification ------------------------------------------------------

    def query_ltx(self, party: int, record: Record, tx: Transaction) -> int:
        self._charge(party, ORACLE_LTX)
        return 1 if tx in record.txs else 0


class FruitPool:
    """Append-only ordered set of fruits a party retains (arrival order)."""

    __slots__ = ("fruits", "_keys")

    def __init__(self):
        self.fruits: list[Fruit] = []
        self._keys: set[bytes] = set()

    def add(self, fruit: Fruit) -> bool:
        if fruit.key in self._keys:
            return False
        self._keys.add(fruit.key)
        self.fruits.append(fruit)
        return True

    def contains(self, fruit: Fruit) -> bool:
        return fruit.key in self._keys

    def __len__(self) -> int:
        return len(self.fruits)

    def __iter__(self):
        return iter(self.fruits)
