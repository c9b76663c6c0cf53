# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import math
import logging
from dataclasses import dataclass, replace

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .baseline import pt_baseline_att
from .config import STREAM_MONTE_CARLO, derive_seed
from .errors import SINGLE_REPETITION, InvalidConfig, NoClosedForm
from .estimator import estimate_att, estimate_att_binary
from .quantile import estimate_qtt
from .simulation import simulate

logger = logging.getLogger(__name__)

ESTIMATORS = ("orec", "orec-binary", "pt", "qtt")
MC_COLUMNS = ["estimator", "n", "reps", "mean_bias", "ese", "mean_ase", "mean_bse", "cov_asym", "cov_boot"]


@dataclass(frozen=True, eq=False)
class McReport:
    """Monte-Carlo summary of one estimator at one sample size."""
    estimator: str
    n: int
    reps: int
    truth: float
    mean_bias: float
    ese: float
    mean_ase: float
    mean_bse: float
    coverage_asymptotic: float
    coverage_bootstrap: float
    estimates: np.ndarray
    warnings: tuple = ()

    def row(self):
        return {
            "estimator": self.estimator,
            "n": self.n,
            "reps": self.reps,
            "mean_bias": self.mean_bias,
            "ese": self.ese,
            "mean_ase": self.mean_ase,
            "mean_bse": self.mean_bse,
            "cov_asym": self.coverage_asymptotic,
            "cov_boot": self.coverage_bootstrap,
        }


def _interval(ci):
    return (math.nan, math.nan) if ci is None else (float(ci[0]), float(ci[1]))


def _one_repetition(spec, config, estimators, quantile_level, rep):
    """Draw one panel and run every estimator on it."""
    data = simulate(replace(spec, seed=derive_seed(spec.seed, STREAM_MONTE_CARLO, rep)))
    rep_config = config.with_seed(derive_seed(config.seed, STREAM_MONTE_CARLO, rep))
    outcome = {}
    for name in estimators:
        if name == "qtt":
            fit = estimate_qtt(data, rep_config, quantile_level)
            outcome[name] = (fit.theta_hat, fit.ase, math.nan, _interval(fit.ci), _interval(None))
            continue
        if name == "pt":
            fit = pt_baseline_att(data, rep_config)
        elif name == "orec-binary":
            fit = estimate_att_binary(data, rep_config)
        else:
            fit = estimate_att(data, rep_config)
        outcome[name] = (fit.tau_hat, fit.ase, fit.se_boot, _interval(fit.ci), _interval(fit.ci_boot))
    return outcome


def _coverage(lower, upper, truth):
    known = ~(np.isnan(lower) | np.isnan(upper))
    if math.isnan(truth) or not known.any():
        return math.nan
    return float(np.mean((lower[known] <= truth) & (truth <= upper[known])))


def _nanmean(values):
    return float(np.mean(values[~np.isnan(values)])) if np.any(~np.isnan(values)) else math.nan


def summarize(name, n, rows, truth):
    """Aggregate per-repetition ``(estimate, ase, bse, ci, ci_boot)`` rows into a :class:`McReport`."""
    estimates = np.array([row[0] for row in rows], dtype=float)
    ase = np.array([row[1] for row in rows], dtype=float)
    bse = np.array([row[2] for row in rows], dtype=float)
    ci = np.array([row[3] for row in rows], dtype=float)
    ci_boot = np.array([row[4] for row in rows], dtype=float)
    reps = estimates.shape[0]
    warnings = ()
    if reps > 1:
        ese = float(np.std(estimates, ddof=1))
    else:
        ese = 0.0
        warnings = (SINGLE_REPETITION,)
        logger.warning(f"{name}: a single repetition, the empirical standard error is reported as 0")
    return McReport(
        estimator=name,
        n=n,
        reps=reps,
        truth=truth,
        mean_bias=float(np.mean(estimates) - truth),
        ese=ese,
        mean_ase=_nanmean(ase),
        mean_bse=_nanmean(bse),
        coverage_asymptotic=_coverage(ci[:, 0], ci[:, 1], truth),
        coverage_bootstrap=_coverage(ci_boot[:, 0], ci_boot[:, 1], truth),
        estimates=estimates,
        warnings=warnings,
    )


def _truth(spec, name, quantile_level):
    if name != "qtt":
        return float(spec.true_att)
    try:
        return spec.family.counterfactual_quantile(quantile_level)
    except NoClosedForm:
        return math.nan


def monte_carlo_study(spec, reps, config, estimators=("orec",), n_jobs=1, quantile_level=0.5):
    """
    Run the selected estimators on ``reps`` fresh draws of ``spec``.

    Repetition ``r`` simulates with a seed mixed from ``spec.seed`` and ``r``
    and estimates with a seed mixed from ``config.seed`` and ``r``, so the
    study is reproducible whatever the number of parallel jobs.

    :param estimators: subset of ``orec``, ``orec-binary``, ``pt`` and ``qtt``.
    :param n_jobs: joblib workers.
    :param quantile_level: level of the ``qtt`` estimator; its bias is NaN
        when the design has no analytic counterfactual quantile.
    :return: list of :class:`McReport`, one per estimator in the given order.
    """
    if isinstance(reps, bool) or not isinstance(reps, int) or reps < 1:
        raise InvalidConfig(f"reps: {reps} must be a positive integer.")
    estimators = tuple(dict.fromkeys(estimators))
    unknown = [name for name in estimators if name not in ESTIMATORS]
    if not estimators or unknown:
        raise InvalidConfig(f"estimators: {list(unknown) or 'none'} not in {', '.join(ESTIMATORS)}.")

    logger.info(f"Monte-Carlo study: {spec.name}, n={spec.n}, {reps} repetition(s), "
                f"estimators {', '.join(estimators)}")
    outcomes = Parallel(n_jobs=n_jobs)(
        delayed(_one_repetition)(spec, config, estimators, quantile_level, rep) for rep in range(reps)
    )
    return [summarize(name, spec.n, [outcome[name] for outcome in outcomes], _truth(spec, name, quantile_level))
            for name in estimators]


def mc_frame(reports):
    return pd.DataFrame([report.row() for report in reports], columns=MC_COLUMNS)


def write_mc_csv(reports, destination, raw=False):
    """McReport rows as CSV; floats keep 6 significant digits unless ``raw``."""
    mc_frame(reports).to_csv(destination, index=False, lineterminator="\n",
                             float_format=None if raw else "%.6g")
