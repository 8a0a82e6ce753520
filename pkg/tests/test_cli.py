import csv
import json

import numpy as np
import pytest

from nomafd import cli
from nomafd.channel import ScenarioConfig
from nomafd.wmmse import BisectionError, SolverConfig

TINY = "scenario:\n  num_uplink: 1\n  num_downlink: 1\n  num_subcarriers: 1\n"


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_defaults_match_reference_setup():
    cfg = cli.parse_config({})
    assert cfg.scenario == ScenarioConfig(
        num_uplink=3, num_downlink=3, num_subcarriers=6, cell_radius_m=100.0,
        min_distance_m=30.0, path_loss_exponent=4.0, shadowing_sigma_db=8.0,
        si_cancellation_db=110.0, p_u_dbm=14.0, p_d_dbm=20.0)
    assert cfg.solver == SolverConfig()


@pytest.mark.parametrize("doc", [
    {"bogus": 1}, {"scenario": {"radius": 5}}, {"solver": {"sic_strategy": "nope"}},
    {"sweep": {"values": []}}, {"scenario": []}, [1, 2], {"seed": -1},
    {"scenario": {"num_subcarriers": 0}},
])
def test_bad_configs_rejected(doc):
    with pytest.raises(cli.ConfigError):
        cli.parse_config(doc)


def test_solve_writes_schema(tmp_path):
    out = tmp_path / "r.json"
    assert cli.main(["solve", "--seed", "4", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1 and doc["kind"] == "solve"
    r = doc["result"]
    for key in ("objective_trace_bits", "powers_w", "per_user_rates_bpshz", "multipliers",
                "sic_residuals", "iterations_used", "converged"):
        assert key in r
    assert np.array(r["powers_w"]).shape == (6, 6)


def test_solve_deterministic(tmp_path):
    cfg = write(tmp_path, "seed: 9\nsolver:\n  sic_strategy: subgradient\n")
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["solve", "--config", cfg, "--out", str(a)]) == 0
    assert cli.main(["solve", "--config", cfg, "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_malformed_config_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, "scenario: [unclosed\n")
    assert cli.main(["solve", "--config", cfg]) == cli.EXIT_CONFIG
    assert "malformed YAML" in capsys.readouterr().err
    cfg = write(tmp_path, "scenario:\n  p_d: 20\n")
    assert cli.main(["solve", "--config", cfg]) == cli.EXIT_CONFIG
    assert "p_d" in capsys.readouterr().err
    assert cli.main(["solve", "--config", str(tmp_path / "missing.yaml")]) == cli.EXIT_CONFIG


def test_solver_failure_exit_code(monkeypatch, capsys):
    def boom(*a, **k):
        raise BisectionError(0.5)

    monkeypatch.setattr(cli, "solve", boom)
    assert cli.main(["solve"]) == cli.EXIT_SOLVER
    assert "solver failure" in capsys.readouterr().err


def test_sweep_outputs(tmp_path):
    cfg = write(tmp_path, "sweep:\n  values: [10, 14, 20, 24]\n  trials_per_point: 3\n")
    out = tmp_path / "out"
    assert cli.main(["sweep", "--config", cfg, "--out", str(out),
                     "--algorithms", "wmmse,oma_hd_waterfill"]) == 0
    rows = list(csv.DictReader((out / "sweep.csv").open()))
    assert [r["algorithm"] for r in rows].count("wmmse") == 4
    assert len(rows) == 8
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["schema_version"] == 1
    for row in rows:
        raw = [t["outcomes"][row["algorithm"]]["utility_bpshz"] for t in doc["trials"]
               if t["sweep_value"] == float(row["sweep_value"])]
        assert float(row["mean_bpshz"]) == pytest.approx(np.mean(raw), rel=1e-12)
        assert int(row["trials"]) == len(raw)


def test_sweep_deterministic(tmp_path):
    cfg = write(tmp_path, "sweep:\n  values: [14, 20]\n  trials_per_point: 2\n")
    for name in ("a", "b"):
        assert cli.main(["sweep", "--config", cfg, "--out", str(tmp_path / name),
                         "--seed", "5"]) == 0
    for f in ("sweep.csv", "sweep.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_sweep_bad_algorithm(tmp_path):
    assert cli.main(["sweep", "--out", str(tmp_path), "--algorithms", "magic"]) == 2


def test_trace_csv(tmp_path):
    out = tmp_path / "t.csv"
    assert cli.main(["trace", "--seed", "1", "--subcarrier", "2", "--out", str(out)]) == 0
    rows = list(csv.DictReader(out.open()))
    assert list(rows[0]) == ["iteration", "user", "own_sinr_db", "cross_sinr_db"]
    users = {r["user"] for r in rows}
    iters = {r["iteration"] for r in rows}
    assert len(rows) == len(users) * len(iters)
    assert cli.main(["trace", "--subcarrier", "9", "--out", str(out)]) == cli.EXIT_CONFIG


def test_oracle_report(tmp_path):
    cfg = write(tmp_path, TINY)
    out = tmp_path / "o.json"
    assert cli.main(["oracle", "--config", cfg, "--grid-points", "100", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1
    assert doc["relative_gap"] == pytest.approx(
        (doc["wmmse_bits"] - doc["oracle_bits"]) / doc["oracle_bits"])
    assert doc["relative_gap"] > -0.01


def test_oracle_dimension_cap(capsys):
    assert cli.main(["oracle", "--grid-points", "10"]) == cli.EXIT_CONFIG
    assert "decision variables" in capsys.readouterr().err


def test_stdout_output(capsys):
    assert cli.main(["solve", "--seed", "2"]) == 0
    assert json.loads(capsys.readouterr().out)["seed"] == 2


def test_reference_config_matches_defaults():
    from pathlib import Path

    ref = cli.load_config(Path(__file__).parent.parent / "configs" / "reference.yaml")
    default = cli.parse_config({})
    assert ref.scenario == default.scenario
    assert ref.solver == default.solver
    assert ref.sweep_spec() == default.sweep_spec()
