"""Shared fixtures and small builders for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction

import pytest
from hypothesis import settings

# Property tests draw from a fixed corpus so the suite itself replays
# bit-identically.
settings.register_profile("deterministic", derandomize=True)
settings.load_profile("deterministic")

from fruitpool.chain import Validator
from fruitpool.core import (
    Block,
    Chain,
    Fruit,
    Record,
    Transaction,
    mining_query,
    serialize,
)
from fruitpool.hashing import RandomOracle, classify_digest, genesis_block
from fruitpool.params import ProtocolParams

FAST_PARAMS = ProtocolParams(
    kappa_sim=8,
    n=3,
    q=8,
    big_n=30,
    p_f=Fraction(45, 100),
    p_b=Fraction(6, 100),
    r=4,
    reward_f=Fraction(1),
    c_lc=Fraction(1, 100),
    c_fs=Fraction(1, 100),
    c_tx=Fraction(1, 100),
    c_ro=Fraction(1, 1000),
    c_ltx=Fraction(1, 10000),
)


@pytest.fixture
def params():
    return FAST_PARAMS


@pytest.fixture
def oracle(params):
    return RandomOracle(seed=42, params=params)


@pytest.fixture
def genesis(oracle, params):
    return genesis_block(oracle, params)


@pytest.fixture
def validator(oracle, params, genesis):
    return Validator(oracle, params, genesis)


def random_tx(rng: random.Random, with_payments: bool = False) -> Transaction:
    payments = None
    if with_payments:
        payments = tuple(
            (rng.randrange(0, 8), Fraction(rng.randrange(-50, 50), rng.randrange(1, 9)))
            for _ in range(rng.randrange(0, 3))
        )
    return Transaction(
        id=rng.randrange(0, 2**63),
        payload=rng.randbytes(rng.randrange(0, 12)),
        payments=payments,
    )


def random_record(rng: random.Random, n_parties: int = 8) -> Record:
    txs = []
    seen = set()
    for _ in range(rng.randrange(0, 4)):
        tx = random_tx(rng, with_payments=rng.random() < 0.2)
        if tx.id not in seen:
            seen.add(tx.id)
            txs.append(tx)
    return Record(coinbase=rng.randrange(0, n_parties), txs=tuple(txs))


def random_fruit(rng: random.Random, digest_bytes: int = 8,
                 nonce_bytes: int = 4) -> Fruit:
    return Fruit(
        h_prev=rng.randbytes(digest_bytes),
        h_f=rng.randbytes(digest_bytes),
        eta=rng.randbytes(nonce_bytes),
        dig=rng.randbytes(digest_bytes),
        record=random_record(rng),
        h=rng.randbytes(digest_bytes),
    )


def mine_fruit(oracle: RandomOracle, params: ProtocolParams, h_prev: bytes,
               h_f: bytes, dig: bytes, record: Record, start: int = 0) -> Fruit:
    """Brute-force a nonce until the trailing digest half clears the cutoff."""
    record_bytes = serialize(record)
    k = start
    while True:
        eta = k.to_bytes(8, "big")
        h = oracle.digest(mining_query(h_prev, h_f, eta, dig, record_bytes))
        fruit_ok, _ = classify_digest(h, params)
        if fruit_ok:
            return Fruit(h_prev, h_f, eta, dig, record, h)
        k += 1


def mine_block(oracle: RandomOracle, params: ProtocolParams, parent: Block,
               h_f: bytes, fruits: tuple[Fruit, ...], record: Record,
               start: int = 0) -> Block:
    """Brute-force a nonce until the leading digest half clears the cutoff."""
    dig = oracle.fruit_set_digest(fruits)
    record_bytes = serialize(record)
    k = start
    while True:
        eta = k.to_bytes(8, "big")
        h = oracle.digest(mining_query(parent.ref, h_f, eta, dig, record_bytes))
        _, block_ok = classify_digest(h, params)
        if block_ok:
            header = Fruit(parent.ref, h_f, eta, dig, record, h)
            return Block(header, fruits)
        k += 1


def build_chain(oracle: RandomOracle, params: ProtocolParams, genesis: Block,
                n_blocks: int, rng: random.Random,
                fruits_per_block: int = 2) -> Chain:
    """A valid chain with mined fruits hanging off recent blocks."""
    chain = Chain((genesis,))
    nonce_start = rng.randrange(0, 10**6)
    for _ in range(n_blocks):
        anchor = chain.mining_fruit_anchor(params.kappa_sim)
        fruits = []
        for _ in range(fruits_per_block):
            nonce_start += 10_000
            fruits.append(
                mine_fruit(
                    oracle, params, chain.tip_ref, anchor,
                    oracle.zero_digest(), random_record(rng),
                    start=nonce_start,
                )
            )
        nonce_start += 10_000
        block = mine_block(
            oracle, params, chain.tip, anchor, tuple(fruits),
            random_record(rng), start=nonce_start,
        )
        chain = chain.extended(block)
    return chain
