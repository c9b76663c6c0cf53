import math
from types import SimpleNamespace

import numpy as np
import toml

from orec_did.report import (
    SCHEMA,
    RunReport,
    collect_warnings,
    placebo_block,
    qtt_block,
    round_significant,
)


def test_round_significant_keeps_six_digits():
    assert round_significant(1.23456789) == 1.23457
    assert round_significant(123456789.0) == 123457000.0
    assert round_significant(-0.000123456789) == -0.000123457
    assert math.isnan(round_significant(math.nan))
    assert round_significant(math.inf) == math.inf


def test_report_document_layout():
    report = RunReport("estimate", meta={"seed": 3, "input": "panel.csv"},
                       results={"att": {"tau_hat": np.float64(0.123456789), "ci_boot": None,
                                        "per_fold": np.array([1.0, 2.0]), "anchored": np.bool_(False)}},
                       diagnostics={"warnings": []})

    document = report.to_dict()

    assert document["schema"] == SCHEMA
    assert document["meta"] == {"seed": 3, "input": "panel.csv", "command": "estimate"}
    assert document["results"]["att"] == {"tau_hat": 0.123457, "per_fold": [1.0, 2.0], "anchored": False}
    assert report.to_dict(raw=True)["results"]["att"]["tau_hat"] == 0.123456789


def test_report_without_results_skips_the_table():
    document = RunReport("diagnose", diagnostics={"overlap": {"violation_rate": 0.0}}).to_dict()

    assert "results" not in document
    assert document["diagnostics"]["overlap"]["violation_rate"] == 0.0


def test_dumps_is_deterministic_and_parses_back(tmp_path):
    report = RunReport("simulate", meta={"dgp": "poisson", "n": np.int64(40)}, diagnostics={"warnings": ["w"]})

    text = report.dumps()
    destination = tmp_path / "report.toml"
    report.dump(destination)

    assert text == RunReport("simulate", meta={"dgp": "poisson", "n": 40}, diagnostics={"warnings": ["w"]}).dumps()
    assert destination.read_text() == text
    parsed = toml.loads(text)
    assert parsed["schema"] == SCHEMA
    assert parsed["meta"]["n"] == 40


def test_qtt_block_flags_a_suppressed_interval():
    fit = SimpleNamespace(q=0.5, theta_prelim=1.0, theta_hat=1.1, ase=math.nan, ci=None, density=0.0,
                          per_fold_prelim=np.ones(2), per_fold=np.ones(2), moment_before=np.zeros(2),
                          moment_after=np.zeros(2))

    block = qtt_block(fit)

    assert block["ci_suppressed"]
    assert block["ci"] is None


def test_placebo_block_and_warning_union():
    result = SimpleNamespace(family="gaussian", statistic=1.5, p_value=0.47, df=2,
                             coefficients=np.array([0.3, 0.31, 0.29]), std_errors=np.array([0.1, 0.1, 0.1]))

    assert placebo_block(result)["df"] == 2
    first = SimpleNamespace(warnings=("non-convergence", "clamp-saturation"))
    second = SimpleNamespace(warnings=("clamp-saturation", "degenerate-density"))
    assert collect_warnings(first, SimpleNamespace(), second) == [
        "non-convergence", "clamp-saturation", "degenerate-density"]
