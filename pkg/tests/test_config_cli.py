import json
import subprocess
import sys

import numpy as np
import pytest

from ousse import ConfigError, dephasing_coherence, parse_config
from ousse.cli import main

I2 = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [1.0, 0.0]]]
Z2 = [[[0.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [0.0, 0.0]]]
SZ = [[[1.0, 0.0], [0.0, 0.0]], [[0.0, 0.0], [-1.0, 0.0]]]
SX = [[[0.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [0.0, 0.0]]]
PLUS = [[0.7071067811865476, 0.0], [0.7071067811865476, 0.0]]


def dephasing_doc(n_traj=64, dt=1e-2, T=0.5, gamma=1.0, **run_extra):
    return {
        "model": {"kind": "random_hamiltonian", "dim": 2, "gamma": gamma,
                  "H": {"coefficients": [Z2]}, "K": {"coefficients": [SZ]}},
        "grid": {"dt": dt, "T": T},
        "run": {"mode": "linear", "n_traj": n_traj, "master_seed": 7,
                "initial": PLUS, **run_extra},
    }


def test_parse_minimal():
    cfg = parse_config(json.dumps(dephasing_doc()))
    assert cfg.mode == "linear"
    assert cfg.model.kind == "random_hamiltonian"
    assert cfg.model.gamma == 1.0
    assert cfg.grid.n_steps == 50
    assert cfg.n_traj == 64
    assert cfg.master_seed == 7
    assert cfg.level == 0
    assert cfg.output_nodes == ()
    # defaults: battery without the oracle (the generator depends on x here)
    assert "consistency" in cfg.checks.suites
    assert "girsanov" in cfg.checks.suites
    assert "lindblad_oracle" not in cfg.checks.suites
    assert cfg.checks.girsanov_times == (0.25, 0.5)


def test_canonical_round_trip_is_a_fixed_point():
    cfg = parse_config(json.dumps(dephasing_doc()))
    text = cfg.canonical_text()
    again = parse_config(text)
    assert again.canonical_text() == text
    assert again.model.gamma == cfg.model.gamma
    assert np.array_equal(again.initial, cfg.initial)


def test_with_seed_changes_only_the_seed():
    cfg = parse_config(json.dumps(dephasing_doc()))
    other = cfg.with_seed(99)
    assert other.master_seed == 99
    a = json.loads(cfg.canonical_text())
    b = json.loads(other.canonical_text())
    a["run"].pop("master_seed"), b["run"].pop("master_seed")
    assert a == b


def test_gamma_zero_enables_oracle_suite():
    cfg = parse_config(json.dumps(dephasing_doc(gamma=0.0)))
    assert "lindblad_oracle" in cfg.checks.suites


def test_error_paths_are_dotted():
    doc = dephasing_doc()
    doc["model"]["H"]["coefficients"] = [[[[0.0, 0.0], [1.0, 0.0]],
                                          [[0.0, 0.0], [0.0, 0.0]]]]
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps(doc))
    assert any("model.H.coefficients[0]" in e for e in exc.value.errors)


def test_errors_are_collected_not_first_only():
    doc = dephasing_doc()
    doc["grid"]["dt"] = -1.0
    doc["run"]["n_traj"] = 1
    doc["run"]["mode"] = "sideways"
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps(doc))
    joined = "\n".join(exc.value.errors)
    assert "grid.dt" in joined
    assert "run.n_traj" in joined
    assert "run.mode" in joined


def test_stability_gate_at_parse_time():
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps(dephasing_doc(gamma=200.0)))
    assert any("grid.dt" in e and "unstable" in e for e in exc.value.errors)


def test_malformed_json_and_unknown_fields():
    with pytest.raises(ConfigError) as exc:
        parse_config("{not json")
    assert "invalid JSON at line" in exc.value.errors[0]
    doc = dephasing_doc()
    doc["extra"] = {}
    with pytest.raises(ConfigError) as exc:
        parse_config(json.dumps(doc))
    assert any("unknown block" in e for e in exc.value.errors)
    doc = dephasing_doc()
    doc["checks"] = {"suites": ["martingale", "nonsense"]}
    with pytest.raises(ConfigError, match="nonsense"):
        parse_config(json.dumps(doc))


def test_output_times_must_hit_nodes():
    doc = dephasing_doc(output_times=[0.0, 0.205, 0.5])
    with pytest.raises(ConfigError, match="output_times"):
        parse_config(json.dumps(doc))
    cfg = parse_config(json.dumps(dephasing_doc(output_times=[0.0, 0.25, 0.5])))
    assert cfg.output_nodes == (0, 25, 50)


def write_config(tmp_path, doc, name="exp.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc, indent=2))
    return str(p)


def read_csv(path):
    lines = path.read_text().strip().split("\n")
    header = lines[0].split(",")
    rows = [dict(zip(header, (float(v) for v in line.split(",")))) for line in lines[1:]]
    return header, rows


def test_simulate_writes_series_and_summary(tmp_path):
    doc = dephasing_doc(n_traj=3000, dt=5e-3, T=1.0,
                        observables={"sx": SX}, output_times=[0.0, 0.5, 1.0])
    cfg_path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out", str(out)]) == 0
    header, rows = read_csv(out / "series.csv")
    assert header[:3] == ["t", "mean_weight", "mean_weight_stderr"]
    assert "eta_re_0_1" in header and "eta_im_1_1" in header
    assert header[-2:] == ["sx_mean", "sx_stderr"]
    assert len(rows) == 3
    final = rows[-1]
    assert final["t"] == 1.0
    want = 0.5 * dephasing_coherence(1.0, 1.0)
    assert abs(final["eta_re_0_1"] - want) < 0.05
    assert abs(final["sx_mean"] - 2 * want) < 0.1
    summary = json.loads((out / "summary.json").read_text())
    assert summary["command"] == "simulate"
    assert summary["n_used"] == 3000
    assert summary["divergence_count"] == 0
    assert summary["grid"] == {"dt": 0.005, "T": 1.0, "level": 0}
    assert summary["output_times"] == [0.0, 0.5, 1.0]
    assert "seconds" in summary["timings"]


def test_simulate_reruns_are_byte_identical(tmp_path):
    cfg_path = write_config(tmp_path, dephasing_doc(n_traj=128))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["simulate", "--config", cfg_path, "--out", str(a)]) == 0
    assert main(["simulate", "--config", cfg_path, "--out", str(b)]) == 0
    assert (a / "series.csv").read_bytes() == (b / "series.csv").read_bytes()
    # a seed override must change the numbers
    c = tmp_path / "c"
    assert main(["simulate", "--config", cfg_path, "--seed", "8", "--out", str(c)]) == 0
    assert (a / "series.csv").read_bytes() != (c / "series.csv").read_bytes()
    # the scheduling hint is accepted and changes nothing
    d = tmp_path / "d"
    assert main(["simulate", "--config", cfg_path, "--threads", "4", "--out", str(d)]) == 0
    assert (a / "series.csv").read_bytes() == (d / "series.csv").read_bytes()


def test_simulate_zero_model_columns_constant(tmp_path):
    doc = dephasing_doc(n_traj=16)
    doc["model"]["K"]["coefficients"] = [Z2]
    doc["model"]["gamma"] = 0.0
    cfg_path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg_path, "--out", str(out)]) == 0
    _, rows = read_csv(out / "series.csv")
    for row in rows:
        # the norm of the stored initial vector carries its own rounding
        assert abs(row["mean_weight"] - 1.0) < 1e-12
        assert row["mean_weight"] == rows[0]["mean_weight"]
        assert row["eta_re_0_1"] == rows[0]["eta_re_0_1"]
        assert row["mean_weight_stderr"] == 0.0


def test_verify_stock_battery_passes(tmp_path):
    doc = dephasing_doc(n_traj=400, dt=1e-2, T=0.5)
    doc["checks"] = {"covariance_n_paths": 4000}
    cfg_path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg_path, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is True
    names = [c["name"] for c in report["checks"]]
    assert names == ["consistency", "martingale", "ou_covariance", "mean_equation", "girsanov"]
    for c in report["checks"]:
        assert c["passed"] is True
        assert all(e["statistic"] <= e["threshold"] for e in c["entries"])


def test_verify_reports_the_planted_defect(tmp_path):
    eps = 1e-3
    doc = dephasing_doc(n_traj=16, dt=1e-2, T=0.2)
    doc["checks"] = {"suites": ["consistency"], "perturb_drift_epsilon": eps}
    cfg_path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg_path, "--out", str(out)]) == 3
    report = json.loads((out / "report.json").read_text())
    assert report["passed"] is False
    con = report["checks"][0]
    assert con["name"] == "consistency"
    assert not con["passed"]
    worst = max(e["statistic"] for e in con["entries"])
    assert worst == pytest.approx(2 * eps, rel=1e-6)


def test_verify_gamma_zero_runs_the_oracle(tmp_path):
    doc = dephasing_doc(n_traj=300, dt=1e-2, T=0.5, gamma=0.0)
    doc["checks"] = {"covariance_n_paths": 2000}
    cfg_path = write_config(tmp_path, doc)
    out = tmp_path / "out"
    assert main(["verify", "--config", cfg_path, "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text())
    names = [c["name"] for c in report["checks"]]
    assert "lindblad_oracle" in names


def test_covariance_subcommand(tmp_path):
    out = tmp_path / "cov"
    code = main(["covariance", "--gamma", "1.0", "--tmax", "1.0", "--dt", "0.01",
                 "--n-paths", "2000", "--seed", "3", "--out", str(out)])
    assert code == 0
    text = (out / "covariance.csv").read_text().strip().split("\n")
    assert text[0] == "t,s,analytic,empirical,stderr"
    assert len(text) - 1 == 15  # 5 points -> 15 ordered pairs with t >= s
    rows = [dict(zip(text[0].split(","), map(float, line.split(",")))) for line in text[1:]]
    eq = [r for r in rows if r["t"] == 1.0 and r["s"] == 1.0]
    assert eq and abs(eq[0]["analytic"] - 0.43233235838169365) < 1e-12
    for r in rows:
        assert abs(r["empirical"] - r["analytic"]) < 5 * max(r["stderr"], 1e-3)
    # gamma = 0 reduces to Brownian motion: cov = min(t, s)
    out2 = tmp_path / "cov0"
    assert main(["covariance", "--gamma", "0.0", "--tmax", "1.0", "--dt", "0.01",
                 "--n-paths", "1000", "--seed", "3", "--out", str(out2)]) == 0
    rows0 = (out2 / "covariance.csv").read_text().strip().split("\n")[1:]
    for line in rows0:
        t, s, ana = map(float, line.split(",")[:3])
        assert ana == pytest.approx(min(t, s), abs=1e-15)


def test_cli_error_codes(tmp_path, capsys):
    assert main(["simulate", "--config", str(tmp_path / "missing.json")]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{\"model\": {}}")
    assert main(["simulate", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "config error:" in err
    assert main(["--help"]) == 0
    assert main(["simulate"]) == 1         # missing --config
    assert main(["unknowncmd"]) == 1


def test_console_script_entry_point(tmp_path):
    cfg_path = write_config(tmp_path, dephasing_doc(n_traj=8, T=0.1))
    out = tmp_path / "out"
    proc = subprocess.run([sys.executable, "-m", "ousse.cli", "simulate",
                          "--config", cfg_path, "--out", str(out)],
                         capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (out / "series.csv").exists()
    assert "wrote" in proc.stdout
