"""Serialization: determinism, injectivity, round trips, hash domains."""

import hashlib
import random

from hypothesis import given, settings, strategies as st

from fruitpool.core import (
    Chain,
    DOMAIN_FRUIT_SET,
    DOMAIN_MINING,
    Fruit,
    Record,
    Transaction,
    deserialize,
    fruit_sequence_bytes,
    mining_query,
    mining_query_parts,
    serialize,
)
from fruitpool.hashing import RandomOracle

from conftest import random_fruit, random_record, random_tx


def test_serialize_is_deterministic():
    rng = random.Random(1)
    f = random_fruit(rng)
    assert serialize(f) == serialize(f)


def test_distinct_fields_give_distinct_bytes():
    rng = random.Random(2)
    f1 = random_fruit(rng)
    f2 = Fruit(f1.h_prev, f1.h_f, f1.eta, f1.dig, f1.record,
               bytes([f1.h[0] ^ 1]) + f1.h[1:])
    assert serialize(f1) != serialize(f2)


def test_roundtrip_random_fruits():
    rng = random.Random(3)
    for _ in range(10_000):
        f = random_fruit(rng)
        assert deserialize(serialize(f)) == f


def test_roundtrip_records_blocks_chains(validator, oracle, params, genesis):
    from conftest import build_chain

    rng = random.Random(4)
    for _ in range(50):
        rec = random_record(rng)
        assert deserialize(serialize(rec)) == rec
        tx = random_tx(rng, with_payments=True)
        assert deserialize(serialize(tx)) == tx
    chain = build_chain(oracle, params, genesis, 3, rng)
    assert deserialize(serialize(chain)) == chain
    for b in chain.blocks:
        assert deserialize(serialize(b)) == b


@given(st.binary(min_size=8, max_size=8), st.binary(min_size=8, max_size=8),
       st.binary(min_size=4, max_size=4), st.binary(min_size=8, max_size=8),
       st.integers(min_value=0, max_value=2**32))
@settings(max_examples=200)
def test_mining_query_parts_matches_full_form(h_prev, h_f, eta, dig, tx_id):
    record_bytes = serialize(Record(coinbase=1, txs=(Transaction(id=tx_id),)))
    head, tail = mining_query_parts(h_prev, h_f, dig, record_bytes, len(eta))
    assert head + eta + tail == mining_query(h_prev, h_f, eta, dig, record_bytes)


def test_injectivity_scan_one_million_objects():
    # Hash of the serialization stands in for the bytes to keep memory flat;
    # any serialization collision would collide here too.
    rng = random.Random(5)
    seen = set()
    count = 0
    for _ in range(700_000):
        obj = Transaction(id=count, payload=rng.randbytes(4))
        seen.add(hashlib.blake2b(serialize(obj), digest_size=16).digest())
        count += 1
    for _ in range(300_000):
        f = random_fruit(rng)
        seen.add(hashlib.blake2b(serialize(f), digest_size=16).digest())
        count += 1
    assert len(seen) == count


def test_fruit_set_digest_constant_and_order_sensitive(oracle):
    rng = random.Random(6)
    assert oracle.fruit_set_digest(()) == oracle.fruit_set_digest(())
    f1, f2 = random_fruit(rng), random_fruit(rng)
    assert oracle.fruit_set_digest((f1, f2)) != oracle.fruit_set_digest((f2, f1))


def test_fruit_set_digest_same_constant_across_runs(params):
    a = RandomOracle(seed=9, params=params)
    b = RandomOracle(seed=9, params=params)
    assert a.fruit_set_digest(()) == b.fruit_set_digest(())


def test_fruit_set_digest_collision_scan_kappa32():
    from fruitpool.params import ProtocolParams

    params32 = ProtocolParams(kappa_sim=32, n=2, q=1, big_n=64)
    oracle = RandomOracle(seed=7, params=params32)
    rng = random.Random(7)
    digests = set()
    for i in range(100_000):
        f = random_fruit(rng, digest_bytes=8, nonce_bytes=4)
        digests.add(oracle.fruit_set_digest((f,)))
    assert len(digests) == 100_000


def test_hash_domain_tags_differ():
    assert DOMAIN_MINING != DOMAIN_FRUIT_SET
    assert len(DOMAIN_MINING) == len(DOMAIN_FRUIT_SET) == 1


def test_fruit_sequence_bytes_length_prefixed():
    rng = random.Random(8)
    f = random_fruit(rng)
    empty = fruit_sequence_bytes(())
    single = fruit_sequence_bytes((f,))
    assert empty != single
    assert single.startswith((1).to_bytes(8, "little"))


def test_record_rejects_duplicate_tx_ids():
    import pytest

    tx = Transaction(id=5)
    with pytest.raises(ValueError):
        Record(coinbase=0, txs=(tx, Transaction(id=5, payload=b"x")))


def test_chain_helpers(genesis, oracle, params):
    from conftest import build_chain

    rng = random.Random(9)
    chain = build_chain(oracle, params, genesis, 4, rng)
    assert chain.mining_prev_ref() == chain.blocks[-1].ref
    # Anchor sits kappa_sim blocks under the tip, floored above genesis.
    assert chain.mining_fruit_anchor(2) == chain.blocks[len(chain) - 3].ref
    assert chain.mining_fruit_anchor(100) == chain.blocks[1].ref
    assert Chain((genesis,)).mining_fruit_anchor(params.kappa_sim) == genesis.ref
    refs = chain.recent_refs(2)
    assert chain.tip_ref in refs and len(refs) == 2
