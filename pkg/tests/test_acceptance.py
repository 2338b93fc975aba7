"""Acceptance suite: every exit criterion at its stated tolerance.

Each test prints one ``ACCEPTANCE <name>: PASS/FAIL`` line.  The heavy run
batches execute once in a session fixture; the determinism criterion then
re-executes every one of those configurations a second time.
"""

import random
import time
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import pytest

from fruitpool import analysis
from fruitpool.accounting import u_min_max
from fruitpool.adversary import (
    Deviation,
    Strategy,
    underquery_then_exit_strategy,
    reordering_adversary,
)
from fruitpool.chain import Validator
from fruitpool.core import Chain, Record, Transaction
from fruitpool.engine import Engine, ExecutionConfig
from fruitpool.hashing import RandomOracle, genesis_block
from fruitpool.oracles import FruitPool, OracleHub
from fruitpool.params import ProtocolParams
from fruitpool.protocols import compute_payment

from conftest import build_chain, mine_block, mine_fruit, random_record

ACCEPT_PARAMS = ProtocolParams(
    kappa_sim=16, n=5, q=10, big_n=2000,
    p_f=Fraction(1, 20), p_b=Fraction(1, 500), r=4,
    reward_f=Fraction(6, 25),
    c_lc=Fraction(1, 20), c_fs=Fraction(1, 20), c_tx=Fraction(1, 20),
    c_ro=Fraction(1, 100), c_ltx=Fraction(1, 1000),
    delta=Fraction(1, 2),
)
NONLEADER_COALITION = frozenset({1, 2, 3, 4})
LEADER_COALITION = frozenset({0, 1, 2, 3})
HC_SEEDS = tuple(range(1, 51))
SUITE_SEEDS = tuple(range(1, 26))

SCENARIO_PARAMS = ProtocolParams(
    kappa_sim=8, n=4, q=40, big_n=12,
    p_f=Fraction(45, 100), p_b=Fraction(8, 100), r=4,
    reward_f=Fraction(1),
    c_lc=Fraction(1, 100), c_fs=Fraction(1, 100), c_tx=Fraction(1, 100),
    c_ro=Fraction(1, 1000), c_ltx=Fraction(1, 10000),
)


def check(name: str, ok: bool, detail: str = "") -> None:
    state = "PASS" if ok else "FAIL"
    suffix = f"  ({detail})" if detail else ""
    print(f"ACCEPTANCE {name}: {state}{suffix}", flush=True)
    assert ok, f"{name}: {detail}"


def suite_strategies() -> dict[str, Strategy]:
    c = NONLEADER_COALITION
    q = ACCEPT_PARAMS.q
    big_n = ACCEPT_PARAMS.big_n
    return {
        "reorder_only": reordering_adversary(c, name="reorder_only"),
        "budget_zero": Strategy(name="budget_zero", corrupted=c,
                            deviations=(Deviation(tag="query_budget", budget=0),)),
        "budget_half": Strategy(name="budget_half", corrupted=c,
                            deviations=(Deviation(tag="query_budget", budget=q // 2),)),
        "d4": Strategy(name="d4", corrupted=c, deviations=(Deviation(tag="withhold"),)),
        "d2": Strategy(name="d2", corrupted=c, deviations=(Deviation(tag="skip_payment_check"),)),
        "abandon_start": Strategy(name="abandon_start", corrupted=c,
                             deviations=(Deviation(tag="abandon", r_star=1),)),
        "abandon_mid": Strategy(name="abandon_mid", corrupted=c,
                           deviations=(Deviation(tag="abandon", r_star=big_n // 2),)),
        "abandon_end": Strategy(name="abandon_end", corrupted=c,
                           deviations=(Deviation(tag="abandon", r_star=big_n),)),
        "underquery_mid": underquery_then_exit_strategy(c, r_star=big_n // 2, budget=q,
                                      name="underquery_mid"),
        "tamper_record": Strategy(name="tamper_record", corrupted=c,
                         deviations=(Deviation(tag="tamper_instance", subcase="record",
                                               rounds=(2,), parties=(1,)),)),
        "underpay_half": Strategy(name="underpay_half", corrupted=LEADER_COALITION,
                             deviations=(Deviation(tag="underpay",
                                                   fraction=Fraction(1, 2)),)),
        "reorder_only_leader": reordering_adversary(LEADER_COALITION, name="reorder_only_leader"),
    }


@dataclass(frozen=True)
class RunRow:
    strategy: str
    seed: int
    u_min: Fraction
    u_max: Fraction
    fruits: int
    digest: str


def _execute(strategy: Strategy, seed: int) -> RunRow:
    cfg = ExecutionConfig(params=ACCEPT_PARAMS, mode="strategy_run",
                          seed=seed, strategy=strategy)
    t = Engine(cfg).run()
    rep = u_min_max(t)
    return RunRow(strategy.name, seed, rep.u_min, rep.u_max,
                  t.fruits_mined(), t.digest())


@pytest.fixture(scope="session")
def batch_results() -> dict[tuple[str, int], RunRow]:
    strategies = suite_strategies()
    results: dict[tuple[str, int], RunRow] = {}
    for seed in HC_SEEDS:
        results[("reorder_only", seed)] = _execute(strategies["reorder_only"], seed)
    for name, strategy in strategies.items():
        if name == "reorder_only":
            continue
        for seed in SUITE_SEEDS:
            results[(name, seed)] = _execute(strategy, seed)
    return results


def test_c01_payment_conservation():
    t0 = time.time()
    rng = random.Random(1001)
    ok = True
    for _ in range(10_000):
        rew = Fraction(rng.randrange(0, 10**6), rng.randrange(1, 1000))
        cost = Fraction(rng.randrange(0, 10**6), rng.randrange(1, 1000))
        n = rng.randrange(2, 200)
        pay = compute_payment(rew, cost, n)
        if pay.w_leader + (n - 1) * pay.w_member != rew:
            ok = False
            break
    elapsed = time.time() - t0
    check("payment_conservation", ok and elapsed < 1.0,
          f"{elapsed:.2f}s over 10^4 triples")


def test_c02_mining_statistics():
    t0 = time.time()
    params32 = ProtocolParams(kappa_sim=32, n=2, q=10**7, big_n=64,
                              p_f=Fraction(1, 20), p_b=Fraction(1, 500))
    oracle = RandomOracle(31337, params32)
    genesis = genesis_block(oracle, params32)
    hub = OracleHub(oracle, Validator(oracle, params32, genesis), params32,
                    genesis)
    hub.begin_round(1)
    trials = 1_000_000
    fruit_hits = block_hits = 0
    query_ro = hub.query_ro
    for i in range(trials):
        _, fruit_ok, block_ok = query_ro(0, i.to_bytes(8, "little"))
        fruit_hits += fruit_ok
        block_hits += block_ok
    elapsed = time.time() - t0
    p_f, p_b = 0.05, 0.002
    tol_f = 3 * (p_f * (1 - p_f) / trials) ** 0.5
    tol_b = 3 * (p_b * (1 - p_b) / trials) ** 0.5
    dev_f = abs(fruit_hits / trials - p_f)
    dev_b = abs(block_hits / trials - p_b)
    check("mining_statistics",
          dev_f <= tol_f and dev_b <= tol_b and elapsed < 10.0,
          f"fruit dev {dev_f:.2e} (tol {tol_f:.2e}), "
          f"block dev {dev_b:.2e} (tol {tol_b:.2e}), {elapsed:.1f}s")


def test_c03_determinism(batch_results):
    strategies = suite_strategies()
    mismatches = 0
    for (name, seed), row in batch_results.items():
        again = _execute(strategies[name], seed)
        if again.digest != row.digest:
            mismatches += 1
    check("determinism", mismatches == 0,
          f"{len(batch_results)} configurations re-executed, "
          f"{mismatches} hash mismatches")


def test_c04_honest_pool_lower_bound(batch_results):
    t0 = time.time()
    bound = analysis.compliant_profit_floor(ACCEPT_PARAMS)
    bound_f = float(bound)
    hits = sum(
        1 for seed in HC_SEEDS
        if float(batch_results[("reorder_only", seed)].u_min) >= bound_f
    )
    # Mining-volume cross-check rides on the same batch: the mean fruit
    # count over the 50 runs must sit within three standard errors.
    p_eff = ACCEPT_PARAMS.threshold_fruit / 2**ACCEPT_PARAMS.kappa_sim
    queries = ACCEPT_PARAMS.big_n * ACCEPT_PARAMS.n * ACCEPT_PARAMS.q
    mean_z = sum(batch_results[("reorder_only", s)].fruits for s in HC_SEEDS) / len(HC_SEEDS)
    sigma = (queries * p_eff * (1 - p_eff) / len(HC_SEEDS)) ** 0.5
    z_ok = abs(mean_z - queries * p_eff) <= 3 * sigma
    frac = hits / len(HC_SEEDS)
    check("honest_pool_lower_bound", frac >= 0.95 and z_ok,
          f"{hits}/{len(HC_SEEDS)} seeds above floor={bound_f:.2f}, "
          f"mean fruits {mean_z:.0f}")


def test_c05_equilibrium_inequality(batch_results):
    eps_prime = analysis.equilibrium_slack(ACCEPT_PARAMS)
    baseline = {
        seed: batch_results[("reorder_only", seed)].u_min for seed in SUITE_SEEDS
    }
    leader_baseline = {
        seed: batch_results[("reorder_only_leader", seed)].u_min for seed in SUITE_SEEDS
    }
    failures = []
    total = 0
    worst_margin = None
    for (name, seed), row in batch_results.items():
        if seed not in SUITE_SEEDS and name != "reorder_only":
            continue
        if name == "reorder_only" and seed not in SUITE_SEEDS:
            continue
        total += 1
        base = leader_baseline[seed] if name in ("underpay_half", "reorder_only_leader") \
            else baseline[seed]
        verdict = analysis.evp_verdict(row.u_max, base, 0, eps_prime)
        margin = float(base) + float(eps_prime) - float(row.u_max)
        if worst_margin is None or margin < worst_margin:
            worst_margin = margin
        if not verdict:
            failures.append((name, seed))
    check("equilibrium_inequality", total >= 275 and not failures,
          f"{total} runs, slack={float(eps_prime):.1f}, "
          f"worst margin {worst_margin:.1f}, failures={failures}")


def test_c06_bound_algebra():
    t0 = time.time()
    rng = random.Random(1002)
    worst = 0.0
    for _ in range(1000):
        p = ProtocolParams(
            kappa_sim=rng.choice((16, 32)),
            n=rng.randrange(3, 16),
            q=rng.randrange(5, 30),
            big_n=rng.randrange(600, 4000),
            p_f=Fraction(rng.randrange(2, 40), 100),
            p_b=Fraction(1, rng.randrange(300, 3000)),
            reward_f=Fraction(rng.randrange(1, 60), 10),
            c_lc=Fraction(rng.randrange(0, 30), 100),
            c_fs=Fraction(rng.randrange(0, 30), 100),
            c_tx=Fraction(rng.randrange(0, 30), 100),
            c_ro=Fraction(rng.randrange(0, 10), 1000),
            c_ltx=Fraction(rng.randrange(0, 10), 10000),
            delta=Fraction(rng.randrange(40, 99), 100),
        )
        b1 = analysis.compliant_profit_floor(p)
        b2 = analysis.deviation_profit_ceiling(p)
        ep = analysis.equilibrium_slack(p)
        rel = abs(float(ep + b1 - b2)) / max(1.0, abs(float(b2)))
        worst = max(worst, rel)
    elapsed = time.time() - t0
    check("bound_algebra", worst <= 1e-9 and elapsed < 5.0,
          f"worst residual {worst:.2e} over 1000 grid points, {elapsed:.1f}s")


def test_c07_case_function_maxima():
    t0 = time.time()
    rng = random.Random(1003)
    checked = 0
    failures = 0
    while checked < 200:
        p = ProtocolParams(
            kappa_sim=rng.choice((16, 32)),
            n=rng.randrange(3, 10),
            q=rng.randrange(5, 20),
            big_n=rng.randrange(600, 3000),
            p_f=Fraction(rng.randrange(5, 40), 100),
            p_b=Fraction(1, rng.randrange(400, 3000)),
            reward_f=Fraction(rng.randrange(1, 60), 10),
            c_lc=Fraction(rng.randrange(0, 30), 100),
            c_fs=Fraction(rng.randrange(0, 30), 100),
            c_tx=Fraction(rng.randrange(0, 30), 100),
            c_ro=Fraction(rng.randrange(0, 10), 1000),
            c_ltx=Fraction(rng.randrange(0, 10), 10000),
            delta=Fraction(rng.randrange(40, 99), 100),
        )
        if p.p_f * p.reward_f <= 2 * p.c_ro:
            continue
        checked += 1
        top = (p.n - 1) * p.q
        for regime, r_star in (("f", 2), ("g", p.big_n - 2),
                               ("h", p.big_n // 2)):
            values = [float(analysis.case_functions(p, regime, r_star, Q))
                      for Q in range(top + 1)]
            if max(range(top + 1), key=values.__getitem__) != top:
                failures += 1
    elapsed = time.time() - t0
    check("case_function_maxima", failures == 0 and elapsed < 30.0,
          f"200 parameter sets, 3 envelopes each, {elapsed:.1f}s")


def test_c08_bruteforce_oracle_equivalence():
    t0 = time.time()
    # 32-bit references keep block identities collision-free over the scan.
    params = SCENARIO_PARAMS.with_updates(kappa_sim=16, q=8,
                                          p_b=Fraction(6, 100))
    mismatches = 0

    # Record extraction against the quadratic scan.
    rng = random.Random(1004)
    oracle = RandomOracle(555, params)
    genesis = genesis_block(oracle, params)
    validator = Validator(oracle, params, genesis)
    for _ in range(1000):
        chain = build_chain(oracle, params, genesis, rng.randrange(1, 10), rng,
                            fruits_per_block=rng.randrange(0, 3))
        seen = []
        for b in chain.blocks:
            for f in b.fruit_set:
                if all(f.key != g.key for g in seen):
                    seen.append(f)
        if validator.extract_fruit(chain, validate=False) != tuple(
            f.record for f in seen
        ):
            mismatches += 1

    # Recency filter against a linear scan.
    for trial in range(1000):
        chain = build_chain(oracle, params, genesis, rng.randrange(1, 8), rng,
                            fruits_per_block=0)
        anchor = (rng.choice(chain.blocks).ref if rng.random() < 0.8
                  else rng.randbytes(params.digest_bytes))
        f = mine_fruit(oracle, params, chain.tip_ref, anchor,
                       oracle.zero_digest(), random_record(rng),
                       start=trial * 131_071)
        window = params.recency_window
        expect = any(chain.blocks[k].ref == f.h_f
                     for k in range(len(chain))
                     if k > len(chain) - 1 - window)
        if validator.is_recent(f, chain) != expect:
            mismatches += 1

    # Longest-chain selection against exhaustive enumeration.
    from test_oracles import _brute_force_select, make_hub

    for trial in range(1000):
        hub, oracle2, genesis2 = make_hub(params, seed=3000 + trial)
        tree_blocks = []
        frontier = [Chain((genesis2,))]
        for _ in range(rng.randrange(2, 7)):
            base = rng.choice(frontier)
            anchor2 = base.mining_fruit_anchor(params.kappa_sim)
            fruits = tuple(
                mine_fruit(oracle2, params, base.tip_ref, anchor2,
                           oracle2.zero_digest(), random_record(rng),
                           start=rng.randrange(10**6) * 64)
                for _ in range(rng.randrange(0, 3))
            )
            b = mine_block(oracle2, params, base.tip, anchor2, fruits,
                           random_record(rng), start=rng.randrange(10**6) * 64)
            tree_blocks.append(b)
            frontier.append(base.extended(b))
        array = list(tree_blocks)
        rng.shuffle(array)
        current = Chain((genesis2,))
        res = hub.query_lc(0, current, array)
        arrival = {b.ref: i for i, b in enumerate(array)}
        expect_chain = _brute_force_select(
            hub.validator, array, current, [b.ref for b in array], arrival
        )
        if res.chain != expect_chain:
            mismatches += 1

    elapsed = time.time() - t0
    check("bruteforce_oracle_equivalence",
          mismatches == 0 and elapsed < 30.0,
          f"3x1000 instances, {mismatches} mismatches, {elapsed:.1f}s")


def test_c09_dissolution_and_leave_scenarios():
    outcomes = []

    def pool_run(deviations, corrupted, seed=11):
        st = Strategy(name="scenario", corrupted=frozenset(corrupted),
                      deviations=tuple(deviations))
        cfg = ExecutionConfig(params=SCENARIO_PARAMS, mode="strategy_run",
                              seed=seed, strategy=st)
        return Engine(cfg).run()

    # Instance tampering, each sub-case: deviation in round 3 produces
    # objects honest parties see in round 4, which is when every exit fires.
    tamper_cases = [
        ("i", {}), ("ii", {}), ("iii", {}), ("iv", {}),
        ("v", {"freeze": (3,)}),
    ]
    for sub, extra in tamper_cases:
        t = pool_run(
            [Deviation(tag="tamper_instance", subcase=sub, rounds=(3,), parties=(2,), **extra)],
            corrupted={2, 3},
        )
        exits = {e.party: (e.round, e.reason) for e in t.exits}
        ok = (
            exits.get(0) == (4, "dissolved")
            and exits.get(1) == (4, "leave_mismatch")
            and any(ev.round == 3 and ev.party == 2 for ev in t.mined)
        )
        outcomes.append((f"tamper_{sub}", ok))

    # Leader underpayment: the honest member exits at the first payment
    # round carrying a positive member share.
    t = pool_run([Deviation(tag="underpay", fraction=Fraction(1, 2))],
                 corrupted={0, 1, 2}, seed=5)
    first_positive = min(
        (ev.round for ev in t.payments if ev.computation.w_member > 0),
        default=None,
    )
    exits = {e.party: (e.round, e.reason) for e in t.exits}
    outcomes.append((
        "d12",
        first_positive is not None
        and exits.get(3) == (first_positive, "leave_bad_amount"),
    ))

    # Missing instance message: members exit the same round it fails to
    # arrive (the leader is activated first).
    t = pool_run([Deviation(tag="skip_instance_message", rounds=(4,))],
                 corrupted={0, 1}, seed=5)
    exits = {e.party: (e.round, e.reason) for e in t.exits}
    outcomes.append((
        "missing_message",
        exits.get(2) == (4, "leave_no_message")
        and exits.get(3) == (4, "leave_no_message"),
    ))

    failed = [name for name, ok in outcomes if not ok]
    check("dissolution_and_leave", not failed,
          f"{len(outcomes)} scripted scenarios, failing: {failed or 'none'}")


def test_c10_chernoff_helpers():
    e_inv = mpmath.e ** -1
    upper = analysis.chernoff_upper(300, Fraction(1, 10))
    lower = analysis.chernoff_lower(200, Fraction(1, 10))
    rel_u = abs(float((upper - e_inv) / e_inv))
    rel_l = abs(float((lower - e_inv) / e_inv))
    check("chernoff_helpers", rel_u <= 1e-12 and rel_l <= 1e-12,
          f"relative errors {rel_u:.2e}, {rel_l:.2e}")
