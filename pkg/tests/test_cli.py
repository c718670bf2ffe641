import csv
import json

import pytest

from optofeedback.cli import PRESETS, SUMMARY_COLUMNS, main


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_validate_warns_on_long_packets(capsys):
    assert main(["validate", "--preset", "scaled", "--set", "tau=500"]) == 0
    assert "warning: omega_m*tau = 0.5" in capsys.readouterr().out
    assert main(["validate", "--preset", "scaled", "--set", "tau=500", "--strict"]) == 1


def test_validate_full_scale_preset(capsys):
    assert main(["validate", "--preset", "paper", "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_bins"] == 41888
    assert report["warnings"] == []
    assert report["long_run"]
    assert report["memory_bytes_typical"] > 0 and report["runtime_seconds_estimate"] > 0


def test_validate_other_full_scale_frequency(capsys):
    main(["validate", "--preset", "paper", "--set", "omega_m=2.5e-4", "--json"])
    assert json.loads(capsys.readouterr().out)["warnings"] == []


def test_empty_sweep_writes_manifest_only(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--preset", "scaled", "--g0", "", "-o", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["manifest.json"]
    doc = json.loads((out / "manifest.json").read_text())
    assert doc["outputs"] == []
    assert doc["params"]["omega_m"] == 1e-3


def test_toy_run_is_deterministic(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    args = ["run", "--preset", "toy", "--g0", "0.1,0.2", "--n-rep", "1,2"]
    assert main(args + ["-o", str(a)]) == 0
    assert main(args + ["-o", str(b)]) == 0
    assert main(args + ["-o", str(c), "--workers", "2"]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert "summary.csv" in files and len(files) == 2 * 4 + 2
    for name in files:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
        if name != "manifest.json":
            assert (a / name).read_bytes() == (c / name).read_bytes(), name
    rows = read_csv(a / "summary.csv")
    assert list(rows[0]) == SUMMARY_COLUMNS
    assert [(r["g0_over_kappa"], r["n_rep"]) for r in rows] == [
        ("0.1", "1"), ("0.1", "2"), ("0.2", "1"), ("0.2", "2")]
    manifest = json.loads((a / "manifest.json").read_text())
    listed = {o["file"] for o in manifest["outputs"]}
    assert listed == set(files) - {"manifest.json"}
    assert manifest["code_version"]


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.yaml"
    cfg.write_text(
        "preset: toy\nparams:\n  g0: 0.3\n  d_mech: 3\nsweep:\n  g0: [0.3]\n  n_rep: [1]\n"
        f"output: {tmp_path / 'out'}\n"
    )
    assert main(["run", "--config", str(cfg), "--set", "d_mech=2"]) == 0
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["params"]["d_mech"] == 2
    assert manifest["params"]["g0"] == 0.3
    assert manifest["preset"] == "toy"


@pytest.mark.parametrize("text", ["bogus: 1\n", "params:\n  nope: 1\n", "sweep:\n  zeta: [1]\n", "- 1\n"])
def test_malformed_config(tmp_path, text):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(text)
    assert main(["validate", "--config", str(cfg)]) == 2


def test_missing_parameters():
    assert main(["validate"]) == 2


def test_full_scale_needs_flag(tmp_path):
    assert main(["run", "--preset", "scaled", "--set", "omega_m=1.5e-4", "--set", "tau=1000",
                 "-o", str(tmp_path)]) == 2


def test_budget_violation_exit_code(tmp_path):
    code = main(["run", "--preset", "toy", "--set", "svd_threshold=0.05",
                 "--set", "discarded_budget=1e-30", "-o", str(tmp_path)])
    assert code == 3


def test_verify_oracle(capsys):
    assert main(["verify-oracle", "--trials", "5", "--seed", "3"]) == 0
    assert "ok" in capsys.readouterr().out


def test_semiclassical_outputs(tmp_path):
    args = ["semiclassical", "--g0", "0.05,0.1", "--n-rep", "1,4,6", "--eta", "0.96,1",
            "--sigma", "0.1", "--samples", "20000", "--pi-curve", "--seed", "5"]
    assert main(args + ["-o", str(tmp_path / "a")]) == 0
    assert main(args + ["-o", str(tmp_path / "b")]) == 0
    for name in ("semiclassical_table.csv", "pi_curve.csv", "parasitic.csv", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    table = read_csv(tmp_path / "a" / "semiclassical_table.csv")
    assert len(table) == 6
    curve = read_csv(tmp_path / "a" / "pi_curve.csv")
    assert [r["n_rep"] for r in curve] == ["4", "6"]
    assert float(curve[0]["fidelity_eta_1"]) == pytest.approx(float(curve[0]["fidelity"]))
    par = read_csv(tmp_path / "a" / "parasitic.csv")[0]
    assert abs(float(par["monte_carlo"]) - float(par["closed_form"])) < 4 * float(par["standard_error"])


def test_pi_search_command(tmp_path):
    out = tmp_path / "pi"
    code = main(["pi-search", "--set", "omega_m=0.01", "--set", "tau=20", "--n-rep", "1",
                 "--target", "0.3", "-o", str(out)])
    assert code == 0
    doc = json.loads((out / "pi_search.json").read_text())
    assert doc["target_phase"] == 0.3
    assert doc["points"][0]["n_rep"] == 1
    assert doc["points"][0]["phase"] == pytest.approx(0.3, abs=1e-3)


def test_presets_cover_required_names():
    assert {"toy", "scaled", "fig2c-scaled", "paper"} <= set(PRESETS)


@pytest.mark.slow
def test_fig2c_overlay_column(tmp_path):
    assert main(["run", "--preset", "fig2c-scaled", "--g0", "0.02", "-o", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "summary.csv")[0]
    assert float(row["phase"]) == pytest.approx(float(row["phase_semiclassical"]), rel=0.15)
    assert float(row["phase_ideal"]) == pytest.approx(0.0128)
