# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import math
import logging
from dataclasses import dataclass, field

import numpy as np

from .binary import fit_binary_nuisances
from .config import STREAM_CV, STREAM_FOLDS, derive_seed
from .errors import WrongOutcomeKind
from .inference import EifRecord, asymptotic_variance, fold_means, median_adjust, multiplier_bootstrap, normal_ci
from .nuisance import fit_nuisances
from .panel import make_folds

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class AttEstimate:
    """
    ATT estimate with its inference.

    ``tau_hat + tau0_hat`` equals ``P(A Y1) / P(A)``. With more than one
    cross-fitting repetition the point estimate, the variances and the
    bootstrap SE are median-adjusted; ``per_fold``, ``records`` and
    ``bootstrap_draws`` belong to the first repetition.
    """
    estimator: str
    tau_hat: float
    tau0_hat: float
    ase: float
    ci: tuple
    per_fold: np.ndarray
    n: int
    sigma0_sq: float = math.nan
    sigma_sq: float = math.nan
    se_boot: float = math.nan
    ci_boot: tuple = None
    bootstrap_draws: np.ndarray = None
    repetitions: np.ndarray = None
    records: EifRecord = None
    clamp_rates: dict = field(default_factory=dict)
    anchored_folds: int = 0
    warnings: tuple = ()


def eif_psi0(y0, y1, a, x, nuisances):
    """
    Uncentered efficient influence values of the counterfactual mean.

    ``beta1 alpha1 (1 - a)(y1 - mu) + a mu + (2a - 1) R(y0, a, x)(y0 - mu)``
    with ``R = beta1 r2``; binary nuisances use the closed form of the last
    term.
    """
    x = np.asarray(x, dtype=float)
    y0 = np.broadcast_to(np.asarray(y0, dtype=float), (x.shape[0],))
    y1 = np.broadcast_to(np.asarray(y1, dtype=float), (x.shape[0],))
    a = np.broadcast_to(np.asarray(a, dtype=float), (x.shape[0],))
    fitted_mu = nuisances.mu(x)
    weighting = nuisances.beta1(x) * nuisances.alpha1(y1, x) * (1.0 - a) * (y1 - fitted_mu)
    return weighting + a * fitted_mu + nuisances.augmentation(y0, a, x)


def _unique(items):
    return tuple(dict.fromkeys(items))


def cross_fit(data, config, fit_function, repetition=0):
    """
    One cross-fitting pass.

    :return: ``(records, per_fold, nuisances)`` where ``per_fold[k]`` is the
        fold-``k`` counterfactual mean ``P_{I_k}(psi0) / P(A)``.
    """
    fold_seed = derive_seed(config.seed, STREAM_FOLDS, repetition)
    folds = make_folds(data.n, config, data.a, seed=fold_seed)
    psi0 = np.empty(data.n)
    fitted = []
    for k in range(folds.k):
        train = data.take(folds.complement(k))
        test = folds.indices(k)
        nuisances = fit_function(train, config, seed=derive_seed(config.seed, STREAM_CV, repetition, k))
        psi0[test] = eif_psi0(data.y0[test], data.y1[test], data.a[test], data.x[test], nuisances)
        fitted.append(nuisances)
        logger.info(f"repetition {repetition + 1}, fold {k + 1}/{folds.k}: "
                    f"{train.n} estimation units, {test.shape[0]} evaluation units")
    p_treated = data.p_treated
    records = EifRecord(
        psi0=psi0,
        psi=data.a * data.y1 - psi0,
        fold_of=folds,
        a=data.a.astype(float),
        p_treated=p_treated,
    )
    per_fold = fold_means(psi0, folds) / p_treated
    return records, per_fold, fitted


def _estimate(data, config, fit_function, estimator):
    observed_mean = float(np.mean(data.a * data.y1) / data.p_treated)
    results = []
    for repetition in range(config.repetitions_s):
        records, per_fold, fitted = cross_fit(data, config, fit_function, repetition)
        tau0 = float(np.mean(per_fold))
        tau = observed_mean - tau0
        sigma0_sq, sigma_sq = asymptotic_variance(records, data, tau, tau0)
        boot = multiplier_bootstrap(records, config, tau, seed=derive_seed(config.seed, repetition))
        results.append((tau, sigma0_sq, sigma_sq, boot, records, per_fold, fitted))

    taus = np.array([item[0] for item in results])
    tau_hat, sigma_sq = median_adjust([(item[0], item[2]) for item in results])
    _, sigma0_sq = median_adjust([(observed_mean - item[0], item[1]) for item in results])
    _, boot_var = median_adjust([(item[0], item[3].se ** 2) for item in results])
    ci_boot = (
        float(np.median([item[3].ci[0] for item in results])),
        float(np.median([item[3].ci[1] for item in results])),
    )
    ase = math.sqrt(sigma_sq / data.n)
    first = results[0]
    fitted_all = [nuisances for item in results for nuisances in item[6]]
    rates = {}
    for nuisances in fitted_all:
        for name, rate in nuisances.clamp_rates.items():
            rates.setdefault(name, []).append(rate)
    warnings = _unique(w for nuisances in fitted_all for w in nuisances.warnings)
    if config.repetitions_s > 1:
        logger.info(f"median adjustment over {config.repetitions_s} repetitions: "
                    f"tau in [{taus.min():.4g}, {taus.max():.4g}]")
    return AttEstimate(
        estimator=estimator,
        tau_hat=tau_hat,
        tau0_hat=observed_mean - tau_hat,
        ase=ase,
        ci=normal_ci(tau_hat, ase, config.alpha_level),
        per_fold=first[5],
        n=data.n,
        sigma0_sq=sigma0_sq,
        sigma_sq=sigma_sq,
        se_boot=math.sqrt(boot_var),
        ci_boot=ci_boot,
        bootstrap_draws=first[3].draws,
        repetitions=taus,
        records=first[4],
        clamp_rates={name: float(np.mean(values)) for name, values in rates.items()},
        anchored_folds=sum(bool(nuisances.anchored) for nuisances in first[6]),
        warnings=warnings,
    )


def estimate_att(data, config):
    """
    Cross-fitted efficient estimate of the ATT under odds-ratio equi-confounding.

    Binary panels are routed to :func:`estimate_att_binary`.

    :param data: validated :class:`PanelDataset`.
    :param config: :class:`EstimatorConfig`.
    :return: :class:`AttEstimate`.
    """
    if data.is_binary:
        return estimate_att_binary(data, config)
    logger.info(f"ATT estimation on {data.n} units, {data.d} covariates, {config.k_folds} folds, "
                f"{config.repetitions_s} repetition(s)")
    return _estimate(data, config, fit_nuisances, "orec")


def estimate_att_binary(data, config):
    if not data.is_binary:
        raise WrongOutcomeKind("the binary estimator needs {0, 1}-valued outcomes")
    logger.info(f"binary ATT estimation on {data.n} units, {data.d} covariates, {config.k_folds} folds, "
                f"{config.repetitions_s} repetition(s)")
    return _estimate(data, config, fit_binary_nuisances, "orec-binary")
