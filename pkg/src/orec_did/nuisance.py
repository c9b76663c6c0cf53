# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import logging
from dataclasses import dataclass, field

import numpy as np

from .density_ratio import (
    cv_select_ratio,
    derive_alpha1_beta0,
    fit_ratio,
    ratio_hyperparameter_grid,
    select_reference_outcome,
)
from .errors import CLAMP_SATURATION
from .identification import fit_beta1_plugin, fit_mu_plugin
from .kernel import default_kernel
from .minimax import (
    R2Ratio,
    cv_select_hyperparams,
    default_hyperparams,
    fit_beta1_minimax,
    fit_mu_minimax,
    hyperparameter_grid,
    regularize_beta1,
    zeta_terms,
)

logger = logging.getLogger(__name__)

# clamp-hit share above which a saturation warning is raised
CLAMP_WARN_RATE = 0.05


@dataclass(frozen=True, eq=False)
class NuisanceSet:
    """
    Nuisance evaluators fitted on one estimation fold.

    ``alpha1(y, x)``, ``beta0(x)``, ``beta1(x)``, ``mu(x)``, ``r1(points)``
    and ``r2(y, a, x)``. Binary fits also carry the joint cell probabilities
    ``cells`` used by the augmentation term.
    """
    alpha1: object
    beta0: object
    beta1: object
    mu: object
    r1: object
    r2: object
    y_ref: object = None
    r0: object = None
    cells: object = None
    hyperparams: dict = field(default_factory=dict)
    anchored: bool = False
    clamp_rates: dict = field(default_factory=dict)
    warnings: tuple = ()

    def big_r(self, y, a, x):
        """``R(y, a, x) = beta1(x) r2(y, a, x)``."""
        return self.beta1(x) * self.r2(y, a, x)

    def augmentation(self, y0, a, x):
        """``(2a - 1) R(y0, a, x) (y0 - mu(x))``, or its closed binary form."""
        sign = 2.0 * np.asarray(a, dtype=float) - 1.0
        fitted_mu = self.mu(x)
        if self.cells is not None:
            return sign * self.cells.augmentation(y0, a, x, fitted_mu)
        return sign * self.big_r(y0, a, x) * (y0 - fitted_mu)


def ratio_options(config):
    if config.ratio_method == "lsif":
        return {"clamp": config.ratio_clamp, "rel_tol": config.pinv_rel_tol}
    return {"clamp": config.ratio_clamp, "max_iter": config.kl_max_iter, "tol": config.kl_tol}


def fit_tuned_ratio(numerator, denominator, config, seed, key=0):
    """
    Density ratio at the held-out-loss choice of bandwidth (and LSIF penalty).

    :param key: stream key of the validation splits, one per ratio.
    """
    lambdas = config.ratio_lambda_grid if config.ratio_method == "lsif" else (None,)
    grid = ratio_hyperparameter_grid(numerator, denominator, config.ratio_kappa_grid, lambdas, config.bandwidth)
    options = ratio_options(config)
    hp = cv_select_ratio(numerator, denominator, grid, config.ratio_method, v_folds=config.cv_folds, seed=seed,
                         key=key, **options)
    logger.debug(f"ratio {key}: kappa={hp.kernel.bandwidth:g} lambda={hp.lambda_}")
    return fit_ratio(numerator, denominator, config.ratio_method, hp, **options), hp


def select_hyperparams(train, config, seed, target, zeta=None, plugin=None, moments=None, clamp=None):
    """
    Cross-validated choice over the kappa multiples and the lambda grid.

    Without a lambda grid the single ``lambda_`` (``1 / M`` by default) is
    kept and only the bandwidth is searched; a fixed ``bandwidth`` or a sample
    too small to split returns the defaults directly.
    """
    kappa_grid = config.kappa_grid if config.bandwidth is None else (1.0,)
    if not config.lambda_grid and (len(kappa_grid) == 1 or train.n < 2 * config.cv_folds):
        return default_hyperparams(train.x, config.bandwidth, config.lambda_)
    lambdas = config.lambda_grid or [default_hyperparams(train.x, config.bandwidth, config.lambda_).lambda_beta]
    grid = hyperparameter_grid(train.x, lambdas, config.bandwidth, kappa_grid=kappa_grid)
    return cv_select_hyperparams(
        train, zeta, grid,
        v_folds=config.cv_folds,
        seed=seed,
        target=target,
        mode=config.cv_mode,
        plugin=plugin,
        moments=moments,
        clamp=clamp,
        rel_tol=config.pinv_rel_tol,
    )


def clamp_warnings(rates, label=""):
    saturated = {name: rate for name, rate in rates.items() if rate > CLAMP_WARN_RATE}
    if not saturated:
        return ()
    detail = ", ".join(f"{name}={rate:.1%}" for name, rate in saturated.items())
    logger.warning(f"{label}clamp saturation: {detail}")
    return (CLAMP_SATURATION,)


def fit_nuisances(train, config, seed=0):
    """
    Fit every nuisance of the continuous-outcome estimator on ``train``.

    Step one estimates the density ratios ``r0`` (treated over control
    ``(Y0, X)``) and ``r1`` (control ``(Y1, X)`` over control ``(Y0, X)``)
    and derives ``alpha1``, ``beta0`` and ``r2``. Step two solves the minimax
    programs for ``beta1`` and ``mu``.

    :param train: estimation fold as a :class:`PanelDataset`.
    :param config: :class:`EstimatorConfig`.
    :param seed: seed of the hyperparameter validation splits.
    """
    treated, control = train.treated, train.control
    points0 = train.points0()
    points1 = train.points1()

    r0, hp_r0 = fit_tuned_ratio(points0[treated], points0[control], config, seed, key=0)
    y_ref = select_reference_outcome(
        train.y0[control], train.x[control], mode=config.reference_mode,
        kernel=default_kernel(train.x[control], config.bandwidth) if train.d else None,
    )
    alpha1, beta0 = derive_alpha1_beta0(r0, y_ref, train.p_treated, config.ratio_clamp)
    r1, hp_r1 = fit_tuned_ratio(points1[control], points0[control], config, seed, key=1)
    r2 = R2Ratio(alpha1, r1, beta0, config.ratio_clamp)
    zeta = zeta_terms(train, alpha1, r2)

    plugin_beta1 = None
    if config.beta1_regularization or config.cv_mode != "projected":
        plugin_beta1 = fit_beta1_plugin(train, alpha1, clamp=config.ratio_clamp)
    plugin_mu = fit_mu_plugin(train, alpha1) if config.cv_mode != "projected" else None

    hp_beta = select_hyperparams(train, config, seed, "beta1", zeta=zeta, plugin=plugin_beta1,
                                 clamp=config.ratio_clamp)
    hp_mu = select_hyperparams(train, config, seed, "mu", zeta=zeta, plugin=plugin_mu)
    if config.beta1_regularization:
        beta1 = regularize_beta1(plugin_beta1, train, zeta, hp_beta, trigger=config.anchor_trigger,
                                 clamp=config.ratio_clamp, rel_tol=config.pinv_rel_tol)
    else:
        beta1 = fit_beta1_minimax(train, zeta, hp_beta, clamp=config.ratio_clamp, rel_tol=config.pinv_rel_tol)
    mu = fit_mu_minimax(train, zeta, hp_mu, rel_tol=config.pinv_rel_tol)

    rates = {
        "r0": r0.clamp_rate(points0),
        "r1": r1.clamp_rate(points1[control]),
        "beta1": beta1.clamp_rate(train.x),
    }
    warnings = r0.warnings + r1.warnings + beta1.warnings + mu.warnings + clamp_warnings(rates)
    return NuisanceSet(
        alpha1=alpha1,
        beta0=beta0,
        beta1=beta1,
        mu=mu,
        r1=r1,
        r2=r2,
        y_ref=y_ref,
        r0=r0,
        hyperparams={"r0": hp_r0, "r1": hp_r1, "beta1": hp_beta, "mu": hp_mu},
        anchored=beta1.anchored,
        clamp_rates=rates,
        warnings=warnings,
    )
