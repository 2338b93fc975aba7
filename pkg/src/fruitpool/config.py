"""TOML experiment configs: parameters, execution settings, strategy suites.

Probabilities, rewards and costs accept exact rationals as strings ("13/256")
as well as ints and floats (floats become their exact binary rational).  See
README for the full schema.
"""

from __future__ import annotations

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Optional

from .adversary import BreakawaySpec, Deviation, Strategy
from .engine import ExecutionConfig, MODE_HONEST_POOL
from .errors import ConfigError
from .network import ORDER_ADVERSARY_FIRST
from .params import ProtocolParams, as_fraction

_PARAM_KEYS = {
    "kappa_sim", "n", "q", "big_n", "r",
    "p_f", "p_b", "reward_f", "c_lc", "c_fs", "c_tx", "c_ro", "c_ltx", "delta",
}
_FRACTION_KEYS = {
    "p_f", "p_b", "reward_f", "c_lc", "c_fs", "c_tx", "c_ro", "c_ltx", "delta",
}


@dataclass(frozen=True)
class ExperimentSpec:
    base: ExecutionConfig
    seeds: tuple[int, ...]
    strategies: tuple[Strategy, ...]
    transcript_dir: Optional[Path]
    summary_csv: Optional[Path]
    verdict_json: Optional[Path]
    epsilon: Fraction = Fraction(0)
    log_base: float = 2.0
    crediting: str = "creation"


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing {key!r} in [{where}]")
    return table[key]


def load_params(table: dict) -> ProtocolParams:
    unknown = set(table) - _PARAM_KEYS
    if unknown:
        raise ConfigError(f"unknown params keys: {sorted(unknown)}")
    try:
        kwargs = {
            key: as_fraction(value) if key in _FRACTION_KEYS else int(value)
            for key, value in table.items()
        }
        return ProtocolParams(**kwargs)
    except (ValueError, TypeError, ZeroDivisionError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_rounds(value) -> Optional[tuple[int, ...]]:
    if value is None or value == "all":
        return None
    if isinstance(value, list):
        return tuple(int(v) for v in value)
    if isinstance(value, dict):
        return tuple(range(int(value["from"]), int(value["to"]) + 1))
    raise ConfigError(f"bad rounds spec {value!r}")


def _load_deviation(table: dict) -> Deviation:
    tag = _require(table, "tag", "strategies.deviations")
    breakaway = None
    if "breakaway" in table:
        b = table["breakaway"]
        breakaway = BreakawaySpec(
            members=tuple(int(m) for m in _require(b, "members", "breakaway")),
            leader=int(_require(b, "leader", "breakaway")),
            start_round=int(_require(b, "start_round", "breakaway")),
            member_share_scale=as_fraction(b.get("member_share_scale", 1)),
        )
    return Deviation(
        tag=str(tag),
        rounds=_load_rounds(table.get("rounds")),
        parties=tuple(int(p) for p in table["parties"]) if "parties" in table else None,
        subcase=table.get("subcase"),
        freeze=tuple(int(i) for i in table.get("freeze", ())),
        budget=int(table["budget"]) if "budget" in table else None,
        delay=int(table["delay"]) if "delay" in table else None,
        breakaway=breakaway,
        r_star=int(table["r_star"]) if "r_star" in table else None,
        fraction=as_fraction(table["fraction"]) if "fraction" in table else None,
    )


def _load_strategy(table: dict) -> Strategy:
    return Strategy(
        name=str(_require(table, "name", "strategies")),
        corrupted=frozenset(int(p) for p in table.get("corrupted", ())),
        deviations=tuple(_load_deviation(d) for d in table.get("deviations", ())),
        ordering=str(table.get("ordering", ORDER_ADVERSARY_FIRST)),
    )


def load_spec(path: Path) -> ExperimentSpec:
    try:
        raw = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    if "params" not in raw:
        raise ConfigError("missing [params] table")
    params = load_params(raw["params"])

    ex = raw.get("execution", {})
    base = ExecutionConfig(
        params=params,
        mode=str(ex.get("mode", MODE_HONEST_POOL)),
        seed=int(ex.get("seed", 0)),
        leader=int(ex.get("leader", 0)),
        activation=ex.get("activation"),
        tx_rate=float(ex.get("tx_rate", 2.0)),
        payment_only_records=bool(ex.get("payment_only_records", False)),
    )
    base.validate()

    if "seeds" in ex:
        seeds = tuple(int(s) for s in ex["seeds"])
    else:
        start = int(ex.get("seed_start", 1))
        count = int(ex.get("seed_count", 1))
        seeds = tuple(range(start, start + count))
    if not seeds:
        raise ConfigError("seed list must be non-empty")

    strategies = tuple(_load_strategy(t) for t in raw.get("strategies", ()))
    if not strategies:
        strategies = (Strategy(name="honest", corrupted=frozenset(),
                               deviations=()),)
    for s in strategies:
        s.validate(params.n, params.q, params.big_n, base.leader)

    out = raw.get("outputs", {})
    analysis = raw.get("analysis", {})
    return ExperimentSpec(
        base=base,
        seeds=seeds,
        strategies=strategies,
        transcript_dir=Path(out["transcripts"]) if "transcripts" in out else None,
        summary_csv=Path(out["summary_csv"]) if "summary_csv" in out else None,
        verdict_json=Path(out["verdict_json"]) if "verdict_json" in out else None,
        epsilon=as_fraction(analysis.get("epsilon", 0)),
        log_base=float(analysis.get("log_base", 2)),
        crediting=str(ex.get("crediting", "creation")),
    )


def load_params_file(path: Path) -> tuple[ProtocolParams, dict]:
    try:
        raw = tomllib.loads(Path(path).read_text())
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if "params" not in raw:
        raise ConfigError("missing [params] table")
    return load_params(raw["params"]), raw.get("analysis", {})
