import logging

import numpy as np
import pytest

from orec_did.cli import build_parser, set_cl_args
from orec_did.config import (
    PARAMETERS,
    SEED_ENV_VAR,
    STREAM_BOOTSTRAP,
    STREAM_FOLDS,
    EstimatorConfig,
    check_parameters,
    copy_config_template,
    derive_seed,
    load_config,
    make_rng,
)
from orec_did.errors import InvalidConfig


def test_load_config_fills_missing_parameters_from_defaults(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    (tmp_path / "config.toml").write_text(
        "[parameters]\n"
        "k_folds = 3\n"
        "ratio_method = \"lsif\"\n"
    )

    config = load_config()

    assert config["config"] == (tmp_path / "config.toml").resolve()
    assert config["parameters"]["k_folds"] == 3
    assert config["parameters"]["ratio_method"] == "lsif"
    assert config["parameters"]["bootstrap_b"] == PARAMETERS["bootstrap_b"]
    assert "seed_origin" not in config["parameters"]


def test_load_config_falls_back_to_packaged_defaults(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)

    config = load_config()

    for parameter, value in PARAMETERS.items():
        assert config["parameters"][parameter] == value


def test_load_config_takes_the_seed_from_the_environment(monkeypatch, tmp_path):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(SEED_ENV_VAR, "42")

    config = load_config()
    parameters = check_parameters(config["parameters"], logging.getLogger("test-config-env"))

    assert config["parameters"]["seed_origin"] == "env"
    assert parameters.seed == 42


def test_check_parameters_on_defaults_gives_the_default_config():
    parameters = check_parameters(dict(PARAMETERS), logging.getLogger("test-config-defaults"))

    assert parameters == EstimatorConfig()
    assert parameters.bandwidth is None
    assert parameters.lambda_ is None
    assert parameters.lambda_grid is None


def test_check_parameters_parses_numbers_and_lambda_grids():
    raw = dict(PARAMETERS, bandwidth="2.5", ratio_method="LSIF")
    parameters = check_parameters(dict(raw, **{"lambda": "0.1, 1"}), logging.getLogger("test-config-grid"))

    assert parameters.bandwidth == 2.5
    assert parameters.ratio_method == "lsif"
    assert parameters.lambda_ is None
    assert parameters.lambda_grid == (0.1, 1.0)

    single = check_parameters(dict(raw, **{"lambda": [0.5]}), logging.getLogger("test-config-grid"))
    assert single.lambda_ == 0.5
    assert single.lambda_grid is None


@pytest.mark.parametrize(
    "parameter, value",
    [
        ("k_folds", 1),
        ("k_folds", True),
        ("alpha_level", 1.5),
        ("bandwidth", "wide"),
        ("ratio_clamp", [10.0, 1.0]),
        ("seed", -1),
        ("reference_mode", "local"),
        ("cv_mode", "holdout"),
        ("ratio_kappa_grid", [0.0, 1.0]),
        ("ratio_lambda_grid", "small"),
        ("kappa_grid", []),
    ],
)
def test_check_parameters_rejects_bad_values_and_logs_them(caplog, parameter, value):
    parameters = dict(PARAMETERS, **{parameter: value})

    with caplog.at_level(logging.ERROR):
        with pytest.raises(InvalidConfig, match=parameter):
            check_parameters(parameters, logging.getLogger("test-config-bad"))

    assert any(record.levelno == logging.ERROR and parameter in record.getMessage() for record in caplog.records)


def test_estimator_config_checks_its_invariants():
    with pytest.raises(InvalidConfig, match="k_folds"):
        EstimatorConfig(k_folds=1)
    with pytest.raises(InvalidConfig, match="lambda grid"):
        EstimatorConfig(lambda_grid=())
    with pytest.raises(InvalidConfig, match="ratio_clamp"):
        EstimatorConfig(ratio_clamp=(0.0, 1.0))
    with pytest.raises(ValueError, match="anchor_trigger"):
        EstimatorConfig(anchor_trigger=1.0)
    with pytest.raises(InvalidConfig, match="ratio_lambda_grid"):
        EstimatorConfig(ratio_lambda_grid=(0.1, -1.0))


def test_echo_uses_the_file_spelling_of_defaults():
    echo = EstimatorConfig().echo()

    assert echo["bandwidth"] == "median"
    assert echo["lambda"] == "auto"
    assert "lambda_" not in echo
    assert "lambda_grid" not in echo
    assert echo["ratio_clamp"] == [1e-3, 1e3]
    assert echo["ratio_kappa_grid"] == [0.25, 0.5, 1.0, 2.0, 4.0]
    assert echo["kappa_grid"] == [0.25, 1.0, 4.0, 16.0]

    assert EstimatorConfig(lambda_grid=(0.1, 1.0)).echo()["lambda_grid"] == [0.1, 1.0]


def test_set_cl_args_overrides_file_values_and_the_environment_seed():
    args = build_parser().parse_args(["estimate", "panel.csv", "--folds", "3", "--seed", "7", "--lambda", "0.5"])
    config = {"parameters": dict(PARAMETERS, seed="11", seed_origin="env")}

    updated = set_cl_args(config, args)

    assert updated["parameters"]["k_folds"] == 3
    assert updated["parameters"]["seed"] == 7
    assert updated["parameters"]["lambda"] == "0.5"
    assert "seed_origin" not in updated["parameters"]
    assert updated["parameters"]["repetitions_s"] == PARAMETERS["repetitions_s"]


def test_make_rng_replays_each_stream_independently():
    first = make_rng(3, STREAM_FOLDS).random(5)
    again = make_rng(3, STREAM_FOLDS).random(5)
    other = make_rng(3, STREAM_BOOTSTRAP).random(5)

    np.testing.assert_array_equal(first, again)
    assert not np.allclose(first, other)
    assert derive_seed(3, STREAM_FOLDS, 0) == derive_seed(3, STREAM_FOLDS, 0)
    assert derive_seed(3, STREAM_FOLDS, 0) != derive_seed(3, STREAM_FOLDS, 1)


def test_copy_config_template_refuses_to_overwrite(tmp_path):
    destination = copy_config_template(tmp_path / "config.toml")

    assert "[parameters]" in destination.read_text()
    with pytest.raises(InvalidConfig, match="already exists"):
        copy_config_template(destination)
