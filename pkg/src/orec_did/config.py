# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import os
import math
import shutil
import tomllib
import importlib.resources
from pathlib import Path
from dataclasses import dataclass, asdict, replace

import numpy as np

from .errors import InvalidConfig

SEED_ENV_VAR = "OREC_DID_SEED"

# Default parameters
PARAMETERS = {
    'k_folds': 5,
    'repetitions_s': 25,
    'bootstrap_b': 1000,
    'alpha_level': 0.05,
    'bandwidth': "median",
    'lambda': "auto",
    'ratio_clamp': [1e-3, 1e3],
    'seed': 0,
    'ratio_method': "kl",
    'ratio_kappa_grid': [0.25, 0.5, 1.0, 2.0, 4.0],
    'ratio_lambda_grid': [1e-3, 1e-2, 1e-1],
    'kappa_grid': [0.25, 1.0, 4.0, 16.0],
    'kl_max_iter': 5000,
    'kl_tol': 1e-8,
    'reference_mode': "global",
    'beta1_regularization': True,
    'anchor_trigger': 10.0,
    'cv_mode': "projected",
    'cv_folds': 2,
    'pinv_rel_tol': 1e-8,
    'density_floor': 1e-6,
    'pt_bootstrap_b': 200,
    }

RATIO_METHODS = ("kl", "lsif")
REFERENCE_MODES = ("global", "conditional")
CV_MODES = ("projected", "plugin_mse", "plugin_log_mse")

# Independent random streams derived from one master seed.
STREAM_FOLDS = 1
STREAM_BOOTSTRAP = 2
STREAM_CV = 3
STREAM_MONTE_CARLO = 4
STREAM_PT_BOOTSTRAP = 5
STREAM_SIMULATION = 6


@dataclass(frozen=True)
class EstimatorConfig:
    """
    Run configuration shared by every estimator.

    ``bandwidth=None`` selects the median heuristic and ``lambda_=None`` the 1/M
    default. The minimax bandwidth is cross-validated over ``kappa_grid``
    multiples of the median heuristic, together with the regularization
    strengths when ``lambda_grid`` is non-empty; a fixed ``bandwidth`` with no
    ``lambda_grid`` skips the search. The density ratios are always tuned by held-out
    loss over ``ratio_kappa_grid`` multiples of the median heuristic on
    standardized ``(y, x)`` (a fixed ``bandwidth`` replaces them) and, for
    LSIF, over ``ratio_lambda_grid``.
    """
    k_folds: int = 5
    repetitions_s: int = 25
    bootstrap_b: int = 1000
    alpha_level: float = 0.05
    bandwidth: float | None = None
    lambda_: float | None = None
    lambda_grid: tuple | None = None
    ratio_clamp: tuple = (1e-3, 1e3)
    seed: int = 0
    ratio_method: str = "kl"
    ratio_kappa_grid: tuple = (0.25, 0.5, 1.0, 2.0, 4.0)
    ratio_lambda_grid: tuple = (1e-3, 1e-2, 1e-1)
    kappa_grid: tuple = (0.25, 1.0, 4.0, 16.0)
    kl_max_iter: int = 5000
    kl_tol: float = 1e-8
    reference_mode: str = "global"
    beta1_regularization: bool = True
    anchor_trigger: float = 10.0
    cv_mode: str = "projected"
    cv_folds: int = 2
    pinv_rel_tol: float = 1e-8
    density_floor: float = 1e-6
    pt_bootstrap_b: int = 200

    def __post_init__(self):
        if not isinstance(self.k_folds, int) or self.k_folds < 2:
            raise InvalidConfig(f"k_folds: {self.k_folds} must be an integer >= 2.")
        if not isinstance(self.repetitions_s, int) or self.repetitions_s < 1:
            raise InvalidConfig(f"repetitions_s: {self.repetitions_s} must be an integer >= 1.")
        if not isinstance(self.bootstrap_b, int) or self.bootstrap_b < 1:
            raise InvalidConfig(f"bootstrap_b: {self.bootstrap_b} must be an integer >= 1.")
        if not isinstance(self.pt_bootstrap_b, int) or self.pt_bootstrap_b < 1:
            raise InvalidConfig(f"pt_bootstrap_b: {self.pt_bootstrap_b} must be an integer >= 1.")
        if not 0.0 < self.alpha_level < 1.0:
            raise InvalidConfig(f"alpha_level: {self.alpha_level} must lie in (0, 1).")
        if self.bandwidth is not None and not (math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidConfig(f"bandwidth: {self.bandwidth} must be finite and positive.")
        if self.lambda_ is not None and not (math.isfinite(self.lambda_) and self.lambda_ > 0):
            raise InvalidConfig(f"lambda: {self.lambda_} must be finite and positive.")
        if self.lambda_grid is not None:
            if len(self.lambda_grid) == 0:
                raise InvalidConfig("lambda grid must not be empty.")
            if not all(math.isfinite(v) and v > 0 for v in self.lambda_grid):
                raise InvalidConfig(f"lambda grid: {list(self.lambda_grid)} must hold finite positive values.")
        for name in ("ratio_kappa_grid", "ratio_lambda_grid", "kappa_grid"):
            grid = getattr(self, name)
            if len(grid) == 0 or not all(math.isfinite(v) and v > 0 for v in grid):
                raise InvalidConfig(f"{name}: {list(grid)} must hold finite positive values.")
        lo, hi = self.ratio_clamp
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
            raise InvalidConfig(f"ratio_clamp: {self.ratio_clamp} needs finite 0 < lower < upper.")
        if not isinstance(self.seed, int) or self.seed < 0 or self.seed >= 2**64:
            raise InvalidConfig(f"seed: {self.seed} must be a 64-bit unsigned integer.")
        if self.ratio_method not in RATIO_METHODS:
            raise InvalidConfig(f"ratio_method: {self.ratio_method} not in {RATIO_METHODS}.")
        if self.reference_mode not in REFERENCE_MODES:
            raise InvalidConfig(f"reference_mode: {self.reference_mode} not in {REFERENCE_MODES}.")
        if self.cv_mode not in CV_MODES:
            raise InvalidConfig(f"cv_mode: {self.cv_mode} not in {CV_MODES}.")
        if not isinstance(self.cv_folds, int) or self.cv_folds < 2:
            raise InvalidConfig(f"cv_folds: {self.cv_folds} must be an integer >= 2.")
        if not isinstance(self.kl_max_iter, int) or self.kl_max_iter < 1:
            raise InvalidConfig(f"kl_max_iter: {self.kl_max_iter} must be a positive integer.")
        if not 0.0 < self.pinv_rel_tol < 1.0:
            raise InvalidConfig(f"pinv_rel_tol: {self.pinv_rel_tol} must lie in (0, 1).")
        if self.anchor_trigger <= 1.0:
            raise InvalidConfig(f"anchor_trigger: {self.anchor_trigger} must be larger than 1.")

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def echo(self):
        """Plain dict of the configuration, in a TOML friendly form."""
        echo = asdict(self)
        echo['bandwidth'] = "median" if self.bandwidth is None else self.bandwidth
        echo['lambda'] = "auto" if self.lambda_ is None else self.lambda_
        echo.pop('lambda_')
        if self.lambda_grid is None:
            echo.pop('lambda_grid')
        else:
            echo['lambda_grid'] = list(self.lambda_grid)
        echo['ratio_clamp'] = list(self.ratio_clamp)
        for name in ("ratio_kappa_grid", "ratio_lambda_grid", "kappa_grid"):
            echo[name] = list(getattr(self, name))
        return echo


def make_rng(seed, *keys):
    """
    Counter-based generator (Philox) for a master seed and a stream path.

    The same ``(seed, *keys)`` always replays the same draws, independently of
    the order in which streams are consumed.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *map(int, keys)])))


def derive_seed(seed, *keys):
    """64-bit child seed mixed from a master seed and integer keys."""
    state = np.random.SeedSequence([int(seed), *map(int, keys)]).generate_state(1, dtype=np.uint64)
    return int(state[0])


def load_config():
    """
    Look for a config.toml file in the current directory.
    If it doesn't find one, use the one included in the package.
    Then overwrite the default parameters with the ones from the file.
    """
    local_config = Path("config.toml").resolve()
    if local_config.exists():
        with open(local_config, "rb") as f:
            config = tomllib.load(f)
            config['config'] = local_config
    else:
        with (importlib.resources.files("orec_did") / "data" / "config.toml").open("rb") as f:
            config = tomllib.load(f)
            config['config'] = importlib.resources.files("orec_did") / "data" / "config.toml"

    config.setdefault("parameters", {})
    for parameter in PARAMETERS:
        if parameter not in config["parameters"]:
            config["parameters"][parameter] = PARAMETERS[parameter]

    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed:
        config["parameters"]["seed"] = env_seed
        config["parameters"]["seed_origin"] = "env"

    return config


def copy_config_template(destination="config.toml"):
    destination = Path(destination)
    if destination.exists():
        raise InvalidConfig(f"File {destination} already exists!")
    shutil.copyfile(importlib.resources.files("orec_did") / "data" / "config.toml", destination)
    return destination


def _fail(msg, logger):
    logger.error(msg)
    raise InvalidConfig(msg)


def _check_int(parameters, par, logger, minimum):
    value = parameters[par]
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(f"{par}: {value} not an int.", logger)
    if value < minimum:
        _fail(f"{par}: {value} must be >= {minimum}.", logger)
    logger.info(f"{par}: {value}")
    return value


def _check_float(parameters, par, logger, lower=None, upper=None):
    value = parameters[par]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(f"{par}: {value} not a float.", logger)
    value = float(value)
    if not math.isfinite(value) or (lower is not None and value <= lower) or (upper is not None and value >= upper):
        _fail(f"{par}: {value} out of range ({lower}, {upper}).", logger)
    logger.info(f"{par}: {value}")
    return value


def _check_choice(parameters, par, choices, logger):
    value = str(parameters[par]).strip().lower()
    if value not in choices:
        _fail(f"{par}: {parameters[par]} not one of {', '.join(choices)}.", logger)
    logger.info(f"{par}: {value}")
    return value


def _check_seed(parameters, logger):
    value = parameters['seed']
    try:
        seed = int(value)
    except (TypeError, ValueError):
        _fail(f"seed: {value} not an int.", logger)
    if isinstance(value, float) and not float(value).is_integer():
        _fail(f"seed: {value} not an int.", logger)
    if seed < 0 or seed >= 2**64:
        _fail(f"seed: {seed} must be a 64-bit unsigned integer.", logger)
    origin = parameters.get('seed_origin')
    logger.info(f"seed: {seed}" + (f" (from {SEED_ENV_VAR})" if origin == "env" else ""))
    return seed


def _check_bandwidth(parameters, logger):
    value = parameters['bandwidth']
    if isinstance(value, str):
        if value.strip().lower() == "median":
            logger.info("bandwidth: median heuristic")
            return None
        try:
            value = float(value)
        except ValueError:
            _fail(f"bandwidth: {value} is neither 'median' nor a number.", logger)
    parameters = dict(parameters, bandwidth=value)
    return _check_float(parameters, 'bandwidth', logger, lower=0.0)


def _check_lambda(parameters, logger):
    """Return ``(lambda_, lambda_grid)`` from the ``lambda`` parameter."""
    value = parameters['lambda']
    if isinstance(value, str):
        text = value.strip().lower()
        if text == "auto":
            logger.info("lambda: auto (1/M)")
            return None, None
        if "," in text:
            value = [item for item in text.split(",") if item.strip()]
        else:
            value = [text]
    if isinstance(value, (list, tuple)):
        try:
            grid = tuple(float(item) for item in value)
        except (TypeError, ValueError):
            _fail(f"lambda: {value} must hold numbers.", logger)
        if not grid or not all(math.isfinite(v) and v > 0 for v in grid):
            _fail(f"lambda: {list(value)} must hold finite positive values.", logger)
        if len(grid) == 1:
            logger.info(f"lambda: {grid[0]}")
            return grid[0], None
        logger.info(f"lambda grid: {list(grid)}")
        return None, grid
    return _check_float(parameters, 'lambda', logger, lower=0.0), None


def _check_grid(parameters, par, logger):
    value = parameters[par]
    if not isinstance(value, (list, tuple)):
        value = [value]
    if not value or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in value):
        _fail(f"{par}: {value} must be a non-empty list of numbers.", logger)
    grid = tuple(float(v) for v in value)
    if not all(math.isfinite(v) and v > 0 for v in grid):
        _fail(f"{par}: {list(value)} must hold finite positive values.", logger)
    logger.info(f"{par}: {list(grid)}")
    return grid


def _check_clamp(parameters, logger):
    value = parameters['ratio_clamp']
    try:
        lo, hi = (float(v) for v in value)
    except (TypeError, ValueError):
        _fail(f"ratio_clamp: {value} must be a pair of numbers.", logger)
    if not (math.isfinite(lo) and math.isfinite(hi) and 0 < lo < hi):
        _fail(f"ratio_clamp: {value} needs finite 0 < lower < upper.", logger)
    logger.info(f"ratio_clamp: [{lo}, {hi}]")
    return (lo, hi)


def check_parameters(parameters, logger):
    """
    Check parameters one by one, report them in the main logger and build the
    immutable :class:`EstimatorConfig`.
    """
    lambda_, lambda_grid = _check_lambda(parameters, logger)
    beta1_regularization = parameters['beta1_regularization']
    if not isinstance(beta1_regularization, bool):
        _fail(f"beta1_regularization: {beta1_regularization} not a bool.", logger)
    logger.info(f"beta1_regularization: {beta1_regularization}")

    return EstimatorConfig(
        k_folds=_check_int(parameters, 'k_folds', logger, 2),
        repetitions_s=_check_int(parameters, 'repetitions_s', logger, 1),
        bootstrap_b=_check_int(parameters, 'bootstrap_b', logger, 1),
        alpha_level=_check_float(parameters, 'alpha_level', logger, lower=0.0, upper=1.0),
        bandwidth=_check_bandwidth(parameters, logger),
        lambda_=lambda_,
        lambda_grid=lambda_grid,
        ratio_clamp=_check_clamp(parameters, logger),
        seed=_check_seed(parameters, logger),
        ratio_method=_check_choice(parameters, 'ratio_method', RATIO_METHODS, logger),
        ratio_kappa_grid=_check_grid(parameters, 'ratio_kappa_grid', logger),
        ratio_lambda_grid=_check_grid(parameters, 'ratio_lambda_grid', logger),
        kappa_grid=_check_grid(parameters, 'kappa_grid', logger),
        kl_max_iter=_check_int(parameters, 'kl_max_iter', logger, 1),
        kl_tol=_check_float(parameters, 'kl_tol', logger, lower=0.0),
        reference_mode=_check_choice(parameters, 'reference_mode', REFERENCE_MODES, logger),
        beta1_regularization=beta1_regularization,
        anchor_trigger=_check_float(parameters, 'anchor_trigger', logger, lower=1.0),
        cv_mode=_check_choice(parameters, 'cv_mode', CV_MODES, logger),
        cv_folds=_check_int(parameters, 'cv_folds', logger, 2),
        pinv_rel_tol=_check_float(parameters, 'pinv_rel_tol', logger, lower=0.0, upper=1.0),
        density_floor=_check_float(parameters, 'density_floor', logger, lower=0.0),
        pt_bootstrap_b=_check_int(parameters, 'pt_bootstrap_b', logger, 1),
    )
