"""Command-line contract: exit codes, CSV determinism, replay validation."""

import json
import textwrap

import pytest

from fruitpool import analysis
from fruitpool.cli import cmd_bounds, cmd_replay, cmd_run, main
from fruitpool.config import load_params_file, load_spec
from fruitpool.engine import Engine, ExecutionConfig
from fruitpool.errors import ConfigError

from conftest import FAST_PARAMS

PARAMS_TOML = textwrap.dedent("""
    [params]
    kappa_sim = 16
    n = 5
    q = 10
    big_n = 2000
    r = 4
    p_f = "1/20"
    p_b = "1/500"
    reward_f = "6/25"
    c_lc = "1/20"
    c_fs = "1/20"
    c_tx = "1/20"
    c_ro = "1/100"
    c_ltx = "1/1000"
    delta = "1/2"
""")

SPEC_TOML = textwrap.dedent("""
    # Small smoke batch: honest pool plus a reordering coalition.
    [params]
    kappa_sim = 8
    n = 3
    q = 8
    big_n = 25
    r = 4
    p_f = "45/100"
    p_b = "6/100"
    reward_f = 1
    c_lc = "1/100"
    c_fs = "1/100"
    c_tx = "1/100"
    c_ro = "1/1000"
    c_ltx = "1/10000"
    delta = "1/2"

    [execution]
    mode = "strategy_run"
    seeds = [1, 2, 3]

    [[strategies]]
    name = "reorder_only"
    corrupted = [1, 2]

    [[strategies]]
    name = "slow_miner"
    corrupted = [1, 2]
      [[strategies.deviations]]
      tag = "query_budget"
      budget = 4

    [analysis]
    epsilon = 0
    log_base = 2
""")


@pytest.fixture
def spec_file(tmp_path):
    out = tmp_path / "out"
    spec = SPEC_TOML + textwrap.dedent(f"""
        [outputs]
        summary_csv = "{out}/summary.csv"
        verdict_json = "{out}/verdict.json"
        transcripts = "{out}/transcripts"
    """)
    path = tmp_path / "spec.toml"
    path.write_text(spec)
    return path, out


def test_load_params_file(tmp_path):
    path = tmp_path / "params.toml"
    path.write_text(PARAMS_TOML)
    params, extra = load_params_file(path)
    assert params.big_n == 2000 and params.threshold_fruit == 3276
    with pytest.raises(ConfigError):
        load_params_file(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[params]\nkappa_sim = 'x'\n")
    with pytest.raises(ConfigError):
        load_params_file(bad)


def test_load_spec_and_strategies(spec_file):
    path, _ = spec_file
    spec = load_spec(path)
    assert [s.name for s in spec.strategies] == ["reorder_only", "slow_miner"]
    assert spec.seeds == (1, 2, 3)
    assert spec.strategies[1].deviations[0].budget == 4


def test_cmd_run_outputs_and_exit_code(spec_file, capsys):
    path, out = spec_file
    code = cmd_run(str(path))
    assert code == 0
    csv_text = (out / "summary.csv").read_text()
    lines = csv_text.strip().splitlines()
    assert len(lines) == 1 + 6  # header + 2 strategies x 3 seeds
    assert lines[0].startswith("strategy,seed,u_min,u_max")
    verdict = json.loads((out / "verdict.json").read_text())
    assert verdict["all_verdicts_hold"] is True
    assert verdict["runs"] == 6
    transcripts = sorted((out / "transcripts").glob("*.bin"))
    assert len(transcripts) == 6
    # Every dumped transcript re-validates cleanly.
    for blob in transcripts:
        assert cmd_replay(str(blob)) == 0


def test_cmd_run_flags_equilibrium_violation(tmp_path):
    # Zero fruit reward and a pure mining fee make the compliant coalition
    # strictly worse off than a silent one while the analytic slack vanishes,
    # so the verdict must fail with the dedicated exit code.
    spec = textwrap.dedent("""
        [params]
        kappa_sim = 8
        n = 3
        q = 8
        big_n = 30
        p_f = "45/100"
        p_b = "6/100"
        reward_f = 0
        c_lc = 0
        c_fs = 0
        c_tx = 0
        c_ro = 1
        c_ltx = 0

        [execution]
        mode = "strategy_run"
        seeds = [1]

        [[strategies]]
        name = "reorder_only"
        corrupted = [1, 2]

        [[strategies]]
        name = "silent"
        corrupted = [1, 2]
          [[strategies.deviations]]
          tag = "query_budget"
          budget = 0
    """)
    path = tmp_path / "violation.toml"
    path.write_text(spec)
    assert cmd_run(str(path)) == 3


def test_cmd_run_is_byte_deterministic(tmp_path):
    outputs = []
    for i in range(2):
        out = tmp_path / f"out{i}"
        spec = SPEC_TOML + textwrap.dedent(f"""
            [outputs]
            summary_csv = "{out}/summary.csv"
        """)
        path = tmp_path / f"spec{i}.toml"
        path.write_text(spec)
        assert cmd_run(str(path)) == 0
        outputs.append((out / "summary.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_cmd_run_rejects_malformed_spec(tmp_path, capsys):
    path = tmp_path / "broken.toml"
    path.write_text("[params\nkappa_sim = 8")
    assert cmd_run(str(path)) == 1
    err = capsys.readouterr().err
    assert "config error" in err


def test_cmd_bounds_matches_module_calls(tmp_path, capsys):
    path = tmp_path / "params.toml"
    path.write_text(PARAMS_TOML)
    assert cmd_bounds(str(path), delta=0.5, log_base=2.0) == 0
    doc = json.loads(capsys.readouterr().out)
    params, _ = load_params_file(path)
    assert doc["compliant_profit_floor"] == pytest.approx(
        float(analysis.compliant_profit_floor(params)))
    assert doc["equilibrium_slack"] == pytest.approx(
        float(analysis.equilibrium_slack(params, 0.5)))
    assert "alternate_log_base" in doc


def test_cmd_bounds_zero_costs_and_bad_delta(tmp_path, capsys):
    path = tmp_path / "zero.toml"
    path.write_text(PARAMS_TOML.replace('"1/20"\nc_fs', '"0"\nc_fs')
                    .replace('c_lc = "1/20"', 'c_lc = "0"')
                    .replace('c_fs = "1/20"', 'c_fs = "0"')
                    .replace('c_tx = "1/20"', 'c_tx = "0"')
                    .replace('c_ro = "1/100"', 'c_ro = "0"')
                    .replace('c_ltx = "1/1000"', 'c_ltx = "0"'))
    assert cmd_bounds(str(path), delta=0.01, log_base=2.0) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["condition_flags"]["delta_in_range"] is False
    params, _ = load_params_file(path)
    assert doc["compliant_profit_floor"] == pytest.approx(
        float(analysis.compliant_profit_floor(params)))
    assert cmd_bounds(str(path / "nope"), delta=None, log_base=0.0) == 1


def test_cmd_replay_accepts_fresh_and_rejects_corrupt(tmp_path, capsys):
    t = Engine(ExecutionConfig(params=FAST_PARAMS, mode="honest_pool", seed=3)).run()
    path = tmp_path / "run.bin"
    path.write_bytes(t.to_bytes())
    assert cmd_replay(str(path)) == 0
    blob = bytearray(t.to_bytes())
    blob[len(blob) // 3] ^= 0xFF
    bad = tmp_path / "corrupt.bin"
    bad.write_bytes(bytes(blob))
    assert cmd_replay(str(bad)) == 2


def test_main_dispatch(tmp_path):
    path = tmp_path / "params.toml"
    path.write_text(PARAMS_TOML)
    assert main(["bounds", "--params", str(path)]) == 0


def test_run_overrides_and_json_summaries(tmp_path):
    path = tmp_path / "spec.toml"
    path.write_text(SPEC_TOML)
    out = tmp_path / "redirected"
    assert main(["run", "--spec", str(path), "--seeds", "7",
                 "--out-dir", str(out)]) == 0
    rows = (out / "summary.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 2  # two strategies, one overridden seed
    assert all(",7," in r for r in rows[1:])
    summaries = sorted((out / "transcripts").glob("*.json"))
    assert len(summaries) == 2
    doc = json.loads(summaries[0].read_text())
    assert doc["seed"] == 7 and "per_party" in doc
    parts = doc["per_party"]["0"]
    from fractions import Fraction
    assert Fraction(parts["profit"]) == Fraction(parts["rewards"]) - Fraction(
        parts["cost"])
