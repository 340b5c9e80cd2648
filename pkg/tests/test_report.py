import csv
import json

import numpy as np
import pytest

from secrel.pipeline import init_solution, run_algorithm1
from secrel.report import (
    config_hash,
    config_to_json,
    dump_config,
    env_seed,
    export_results,
    load_config,
    load_solution,
    run_cli,
)
from secrel.scenario import ScenarioError, default_config, evaluate_solution, mobility_residual

SMALL = {"slots_N": 8, "horizon_T": 40.0}


@pytest.fixture(scope="module")
def small_run():
    cfg = default_config(**SMALL)
    return cfg, run_algorithm1(cfg, max_outer=2)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_empty_document_gives_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, "c.json", "{}"))
    assert cfg == default_config()
    assert cfg.beta0 == 1e-3 and cfg.altitude_H == 100.0


def test_invalid_field_is_named(tmp_path):
    with pytest.raises(ScenarioError, match="altitude_H") as info:
        load_config(_write(tmp_path, "c.json", '{"altitude_H": -5}'))
    assert info.value.field == "altitude_H"
    with pytest.raises(ScenarioError, match="bogus"):
        load_config(_write(tmp_path, "c.json", '{"bogus": 1}'))
    with pytest.raises(ScenarioError, match="adversaries"):
        load_config(_write(tmp_path, "c.json", '{"adversaries": [{"center": [0, 0]}]}'))


def test_syntax_error_names_line(tmp_path):
    with pytest.raises(ScenarioError, match="line 3"):
        load_config(_write(tmp_path, "c.json", '{\n  "altitude_H": 100,\n  "slots_N": ,\n}'))
    with pytest.raises(ScenarioError, match="object"):
        load_config(_write(tmp_path, "c.json", "[1, 2]"))


def test_config_round_trip(tmp_path):
    cfg = default_config()
    assert cfg.bs_pos == (650.0, 170.0)
    assert [a.radius_R for a in cfg.adversaries] == [60.0, 30.0]
    dump_config(cfg, tmp_path / "a.json")
    again = load_config(tmp_path / "a.json")
    assert again == cfg
    dump_config(again, tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert config_hash(again) == config_hash(cfg)
    assert config_hash(cfg.with_radii(0.0)) != config_hash(cfg)
    assert config_to_json(cfg).endswith("\n")


def test_env_seed(monkeypatch):
    monkeypatch.delenv("SECREL_SEED", raising=False)
    assert env_seed(3) == 3
    monkeypatch.setenv("SECREL_SEED", "17")
    assert env_seed() == 17


def test_export_is_byte_identical(tmp_path, small_run):
    cfg, (traj, pw, trace) = small_run
    a = export_results((traj, pw), trace, tmp_path / "a", cfg)
    b = export_results((traj, pw), trace, tmp_path / "b", cfg)
    for key in a:
        data = a[key].read_bytes()
        assert data == b[key].read_bytes()
        assert b"\r" not in data
    header = (tmp_path / "a" / "trajectory.csv").read_text().splitlines()[0]
    assert header == "n,x,y,v,a"
    assert (tmp_path / "a" / "rates.csv").read_text().splitlines()[0] == "n,r_b,r_u,r_a1,r_a2,r"
    assert (tmp_path / "a" / "powers.csv").read_text().splitlines()[0] == "n,p_b,p_u"


def test_rates_reproduce_summary_totals(tmp_path, small_run):
    cfg, (traj, pw, trace) = small_run
    export_results((traj, pw), trace, tmp_path, cfg)
    summary = json.loads((tmp_path / "summary.json").read_text())
    with open(tmp_path / "rates.csv") as fh:
        rows = list(csv.DictReader(fh))
    tot = summary["totals"]
    assert sum(float(r["r_b"]) for r in rows) == pytest.approx(tot["sum_r_b"], rel=1e-10)
    assert sum(float(r["r_u"]) for r in rows) == pytest.approx(tot["sum_r_u"], rel=1e-10)
    assert sum(float(r["r"]) for r in rows[1:]) == pytest.approx(tot["sum_secrecy"], rel=1e-10)
    rep = evaluate_solution(traj, pw, cfg)
    assert tot["ee_kbits_per_J"] == float("%.12g" % rep.ee_kbits_per_J)
    assert summary["config_hash"] == config_hash(cfg)
    assert summary["converged"] == trace.converged
    assert summary["violations"] == []


def test_reloaded_trajectory_keeps_mobility(tmp_path, small_run):
    cfg, (traj, pw, trace) = small_run
    export_results((traj, pw), trace, tmp_path, cfg)
    traj2, pw2 = load_solution(tmp_path / "trajectory.csv")
    assert np.max(np.abs(mobility_residual(traj2, cfg))) <= 1e-6
    assert np.allclose(pw2.p_u, pw.p_u, rtol=1e-11)


def test_cli_optimize_and_validate(tmp_path, capsys):
    cfg_path = _write(tmp_path, "c.json", json.dumps(SMALL))
    out = tmp_path / "out"
    code = run_cli(["optimize", "--config", str(cfg_path), "--out", str(out), "--max-outer", "2", "--quiet"])
    assert code == 0
    for name in ("trajectory.csv", "powers.csv", "rates.csv", "trace.csv", "summary.json"):
        assert (out / name).exists()
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["slots_N"] == 8
    assert "sampled_worst_secrecy" in summary and summary["seed"] == 0
    assert run_cli(["validate", "--solution", str(out)]) == 0
    capsys.readouterr()

    # corrupt one speed below v_min
    lines = (out / "trajectory.csv").read_text().splitlines()
    cells = lines[7].split(",")
    cells[3] = "0.1"
    lines[7] = ",".join(cells)
    (out / "trajectory.csv").write_text("\n".join(lines) + "\n")
    assert run_cli(["validate", "--solution", str(out / "trajectory.csv")]) == 1
    assert "slot 7" in capsys.readouterr().out


def test_cli_usage_errors(capsys):
    assert run_cli([]) == 64
    assert run_cli(["frobnicate"]) == 64
    assert run_cli(["optimize"]) == 64
    assert run_cli(["oracle"]) == 64  # default config has N = 50
    assert run_cli(["--help"]) == 0
    assert run_cli(["sweep", "--param", "R", "--values", "a,b", "--out", "x"]) == 64
    assert "usage" in capsys.readouterr().err


def test_cli_bad_config_exits_1(tmp_path):
    cfg_path = _write(tmp_path, "c.json", '{"altitude_H": -5}')
    assert run_cli(["baseline", "--config", str(cfg_path)]) == 1
    assert run_cli(["validate", "--solution", str(tmp_path)]) == 1


def test_cli_baseline_and_oracle(tmp_path):
    assert run_cli(["baseline", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "summary.json").exists()
    tiny = _write(tmp_path, "t.json", json.dumps({"slots_N": 3, "horizon_T": 6.0, "bs_pos": [-100.0, 0.0],
                                                  "user_pos": [100.0, 0.0]}))
    assert run_cli(["oracle", "--config", str(tiny), "--grid", "3", "--out", str(tmp_path / "o")]) == 0
    # a budget overflow is a solver failure
    assert run_cli(["oracle", "--config", str(tiny), "--grid", "30", "--speeds", "20"]) == 2


def test_cli_sweep(tmp_path):
    cfg_path = _write(tmp_path, "c.json", json.dumps(SMALL))
    out = tmp_path / "sweep"
    code = run_cli(["sweep", "--config", str(cfg_path), "--param", "R", "--values", "0,30",
                    "--out", str(out), "--max-outer", "1"])
    assert code in (0, 2)
    assert (out / "R=0" / "summary.json").exists() and (out / "R=30" / "summary.json").exists()
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert {r["value"] for r in rows} == {"0", "30"}
    r30 = json.loads((out / "R=30" / "summary.json").read_text())
    assert all(a["radius_R"] == 30.0 for a in r30["config"]["adversaries"])
