import pandas as pd
import pytest
import toml

from orec_did.cli import main
from orec_did.montecarlo import MC_COLUMNS
from orec_did.report import SCHEMA

FAST = ["--folds", "2", "--reps", "1", "--bootstrap", "50"]


@pytest.fixture(autouse=True)
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("OREC_DID_SEED", raising=False)
    return tmp_path


def _simulate(path, dgp="sec6-continuous", n=120, *extra):
    assert main(["-q", "simulate", "--dgp", dgp, "--n", str(n), "--seed", "5", "-o", str(path), *extra]) == 0
    return path


def test_simulate_writes_the_panel_to_stdout(capsys):
    assert main(["-q", "simulate", "--dgp", "gaussian-pt", "--n", "12", "--seed", "1"]) == 0

    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("y0,y1,a")
    assert len(lines) == 13


def test_estimate_writes_a_toml_report(workdir, capsys):
    panel = _simulate(workdir / "panel.csv")

    assert main(["-q", "estimate", str(panel), "--seed", "2", *FAST]) == 0

    report = toml.loads(capsys.readouterr().out)
    assert report["schema"] == SCHEMA
    assert report["meta"]["command"] == "estimate"
    assert report["meta"]["n"] == 120
    assert report["meta"]["seed"] == 2
    assert report["meta"]["config"]["k_folds"] == 2
    att = report["results"]["orec"]
    assert att["ci"][0] < att["tau_hat"] < att["ci"][1]
    assert "warnings" in report["diagnostics"]


def test_estimate_is_byte_for_byte_reproducible(workdir):
    panel = _simulate(workdir / "panel.csv")
    first, second = workdir / "first.toml", workdir / "second.toml"

    for out in (first, second):
        assert main(["-q", "estimate", str(panel), "--seed", "2", "--estimator", "both", *FAST,
                     "-o", str(out)]) == 0

    assert first.read_bytes() == second.read_bytes()
    assert set(toml.loads(first.read_text())["results"]) == {"orec", "pt"}


def test_malformed_csv_exits_with_a_parse_error(workdir, capsys):
    bad = workdir / "bad.csv"
    bad.write_text("y0,y1,a\n1.0,2.0,1\n1.5,oops,0\n")

    assert main(["-q", "estimate", str(bad)]) == 3
    assert capsys.readouterr().err.startswith("error: parse-error:")


def test_missing_input_file_is_a_parse_error(workdir, capsys):
    assert main(["-q", "estimate", str(workdir / "missing.csv")]) == 3
    assert "parse-error" in capsys.readouterr().err


def test_unknown_design_is_a_usage_error(capsys):
    assert main(["-q", "simulate", "--dgp", "sec9", "--n", "10"]) == 2
    assert "error: unknown-dgp:" in capsys.readouterr().err


def test_invalid_flag_values_are_usage_errors(workdir, capsys):
    panel = _simulate(workdir / "panel.csv")

    assert main(["-q", "estimate", str(panel), "--folds", "1"]) == 2
    assert "invalid-config" in capsys.readouterr().err


def test_qtt_on_a_binary_panel_is_a_data_error(workdir, capsys):
    panel = _simulate(workdir / "binary.csv", "sec6-binary", 80)

    assert main(["-q", "estimate", str(panel), "--estimator", "pt", "--qtt", "0.5", *FAST]) == 4
    assert "wrong-outcome-kind" in capsys.readouterr().err


def test_diagnose_runs_the_placebo_test_on_pre_periods(workdir, capsys):
    panel = _simulate(workdir / "panel.csv", "gaussian-pt", 200, "--pre-periods", "2")

    assert main(["-q", "diagnose", str(panel), "--placebo", "--overlap"]) == 0

    report = toml.loads(capsys.readouterr().out)
    assert report["meta"]["command"] == "diagnose"
    assert report["results"]["placebo"]["df"] == 1
    assert report["results"]["placebo"]["family"] == "gaussian"
    assert report["results"]["overlap"]["kind"] == "continuous"


def test_placebo_without_pre_periods_is_a_data_error(workdir, capsys):
    panel = _simulate(workdir / "panel.csv", "gaussian-pt", 40)

    assert main(["-q", "diagnose", str(panel), "--placebo"]) == 4
    assert "too-few-periods" in capsys.readouterr().err


def test_benchmark_writes_one_row_per_estimator_and_size(workdir):
    out = workdir / "mc.csv"

    assert main(["-q", "benchmark", "--dgp", "gaussian-pt", "--n-grid", "30,40", "--reps", "2",
                 "--estimators", "pt", "--seed", "3", "-o", str(out)]) == 0

    frame = pd.read_csv(out)
    assert list(frame.columns) == MC_COLUMNS
    assert frame["n"].tolist() == [30, 40]
    assert frame["estimator"].tolist() == ["pt", "pt"]


def test_init_writes_the_config_template_once(workdir, capsys):
    assert main(["--init"]) == 0
    assert (workdir / "config.toml").exists()

    assert main(["--init"]) == 2
    assert "invalid-config" in capsys.readouterr().err
