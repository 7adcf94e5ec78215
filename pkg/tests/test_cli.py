import json

import pytest

from photonloc.cli import main
from photonloc.sampler import EventBatch


def test_feasibility(capsys):
    assert main(["feasibility", "--length", "0.05", "--waist", "10e-6", "--wavelength", "450e-9"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert round(out["chi"], 2) == 35.81
    assert out["regime"] == "focused_positive_corr"


def test_feasibility_back_solve(capsys):
    assert main(["feasibility", "--length", "0.05", "--waist", "10e-6", "--chi", "35.81",
                 "--format", "csv"]) == 0
    header, values = capsys.readouterr().out.splitlines()
    assert "chi" in header.split(",")


def test_feasibility_missing_pump(capsys):
    assert main(["feasibility", "--length", "0.05", "--waist", "10e-6"]) == 2
    assert "error" in capsys.readouterr().err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        main(["sweep", "--shots", "many"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.ini"
    path.write_text("[run]\nshots = lots\n")
    assert main(["sweep", "--config", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_sweep_check_pass_and_fail(tmp_path, capsys):
    path = tmp_path / "s.ini"
    path.write_text("[sweep]\nn_photons = 2\n[run]\nshots = 20000\nn_boot = 20\n")
    assert main(["sweep", "--config", str(path), "--check"]) == 0
    assert "PASS" in capsys.readouterr().err
    path.write_text(path.read_text() + "[tolerances]\nlambda_rel = 1e-9\n")
    assert main(["sweep", "--config", str(path), "--check", "--format", "json"]) == 1
    captured = capsys.readouterr()
    assert "FAIL" in captured.err
    report = json.loads(captured.out)
    assert any(not g["passed"] for g in report["gates"])


def test_simulate_outputs(tmp_path, capsys):
    out = tmp_path / "r.json"
    events = tmp_path / "e.csv"
    code = main(["simulate", "--shots", "2000", "--seed", "3", "--format", "json", "--out", str(out),
                 "--events-out", str(events), "--loss", "0.1"])
    assert code == 0
    report = json.loads(out.read_text())
    assert report["estimate"]["n_shots"] <= 2000
    assert len(EventBatch.from_csv(events)) == 2000


def test_simulate_rejects_small_shot_count(capsys):
    assert main(["simulate", "--shots", "10"]) == 2


def test_oracle_check_budget_refusal(tmp_path, capsys):
    path = tmp_path / "g.ini"
    path.write_text("[grid]\nmemory_budget_mib = 1\n")
    assert main(["oracle-check", "--config", str(path), "--shots", "1000"]) == 2
    assert "MiB" in capsys.readouterr().err
