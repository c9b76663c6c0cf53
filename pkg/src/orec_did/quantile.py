# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import math
import logging
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .config import STREAM_CV, STREAM_FOLDS, derive_seed
from .errors import DEGENERATE_DENSITY, InvalidConfig, WrongOutcomeKind
from .inference import normal_ci
from .kernel import default_kernel, gram
from .nuisance import fit_nuisances
from .panel import make_folds

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class QttEstimate:
    """
    Counterfactual ``q``-quantile of ``Y1(0)`` among the treated.

    ``ci`` is ``None`` and ``ase`` is NaN when the density of the
    counterfactual law at the preliminary quantile is degenerate.
    """
    q: float
    theta_prelim: float
    theta_hat: float
    ase: float
    ci: tuple
    per_fold_prelim: np.ndarray
    per_fold: np.ndarray
    moment_before: np.ndarray
    moment_after: np.ndarray
    density: float = math.nan
    degenerate: bool = False
    warnings: tuple = ()


def weighted_quantile(values, weights, q):
    """Smallest value whose normalized cumulative weight reaches ``q``."""
    values = np.asarray(values, dtype=float)
    weights = np.asarray(weights, dtype=float)
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(weights[order])
    cumulative /= cumulative[-1]
    index = min(int(np.searchsorted(cumulative, q - 1e-12)), values.shape[0] - 1)
    return float(values[order][index])


@dataclass(frozen=True, eq=False)
class ConditionalCdf:
    """
    ``F(theta | x_i)`` of ``Y1(0)`` among the treated at fixed evaluation rows.

    Kernel weights in ``x`` times the odds ratio tilt the control ``Y1``
    sample of the estimation fold.
    """
    weights: np.ndarray
    outcomes: np.ndarray

    def __call__(self, theta):
        below = (self.outcomes <= theta).astype(float)
        return (self.weights @ below) / self.weights.sum(axis=1)


def conditional_cdf(train, nuisances, x_eval, kernel):
    control = train.control
    tilt = nuisances.alpha1(train.y1[control], train.x[control])
    weights = gram(x_eval, train.x[control], kernel).entries * tilt[None, :]
    # guard rows whose kernel weights all underflow
    empty = weights.sum(axis=1) <= 0
    weights[empty] = tilt[None, :]
    return ConditionalCdf(weights=weights, outcomes=train.y1[control])


def counterfactual_density(train, nuisances):
    """Weighted Gaussian KDE of control ``Y1`` tilted by ``beta1 alpha1``, ``None`` if degenerate."""
    control = train.control
    y1 = train.y1[control]
    weights = nuisances.beta1(train.x[control]) * nuisances.alpha1(y1, train.x[control])
    if y1.shape[0] < 2 or np.ptp(y1) == 0 or weights.sum() <= 0:
        return None
    try:
        return stats.gaussian_kde(y1, bw_method="silverman", weights=weights)
    except (np.linalg.LinAlgError, ValueError):
        return None


def efficient_moment(theta, q, y0, y1, a, x, nuisances, cdf):
    """Per-unit efficient quantile moment at ``theta``."""
    fitted = cdf(theta)
    a = a.astype(float)
    weighting = (1.0 - a) * nuisances.beta1(x) * nuisances.alpha1(y1, x) * ((y1 <= theta) - fitted)
    augmentation = (2.0 * a - 1.0) * nuisances.big_r(y0, a, x) * ((y0 <= theta) - fitted)
    return weighting + a * (fitted - q) + augmentation


def _expanded_range(data):
    outcomes = np.concatenate([data.y0, data.y1])
    q1, q3 = np.percentile(outcomes, [25, 75])
    spread = q3 - q1
    return outcomes.min() - spread, outcomes.max() + spread


def estimate_qtts(data, config, levels):
    """
    One-step estimates of several counterfactual quantiles sharing one set
    of cross-fitted nuisances.

    Per fold the preliminary value is the weighted quantile of the fold's
    control ``Y1`` with weights ``beta1 alpha1``; it is corrected by one
    Newton step on the efficient moment with Jacobian ``P(A) f(theta)``.
    """
    if data.is_binary:
        raise WrongOutcomeKind("counterfactual quantiles need a continuous outcome")
    levels = [float(q) for q in levels]
    for q in levels:
        if not 0.0 < q < 1.0:
            raise InvalidConfig(f"quantile level {q} must lie in (0, 1)")

    folds = make_folds(data.n, config, data.a, seed=derive_seed(config.seed, STREAM_FOLDS, 0))
    p_treated = data.p_treated
    per_fold = []
    for k in range(folds.k):
        train = data.take(folds.complement(k))
        test = folds.indices(k)
        nuisances = fit_nuisances(train, config, seed=derive_seed(config.seed, STREAM_CV, 0, k))
        kernel = default_kernel(train.x[train.control], config.bandwidth)
        cdf = conditional_cdf(train, nuisances, data.x[test], kernel)
        density = counterfactual_density(train, nuisances)
        per_fold.append((test, nuisances, cdf, density))
        logger.info(f"quantile nuisances, fold {k + 1}/{folds.k}")

    low, high = _expanded_range(data)
    estimates = []
    for q in levels:
        prelim, updated, before, after, degenerate = [], [], [], [], False
        for test, nuisances, cdf, density in per_fold:
            y0, y1, a, x = data.y0[test], data.y1[test], data.a[test], data.x[test]
            control = a == 0
            weights = nuisances.beta1(x[control]) * nuisances.alpha1(y1[control], x[control])
            theta_tilde = weighted_quantile(y1[control], weights, q)
            moment = float(np.mean(efficient_moment(theta_tilde, q, y0, y1, a, x, nuisances, cdf)))
            slope = p_treated * float(density(theta_tilde)[0]) if density is not None else 0.0
            if slope < config.density_floor * p_treated:
                degenerate = True
                theta_k = theta_tilde
            else:
                theta_k = theta_tilde - moment / slope
            prelim.append(theta_tilde)
            updated.append(theta_k)
            before.append(abs(moment))
            after.append(abs(float(np.mean(efficient_moment(theta_k, q, y0, y1, a, x, nuisances, cdf)))))

        theta_hat = float(np.clip(np.mean(updated), low, high))
        warnings = ()
        if degenerate:
            logger.warning(f"degenerate counterfactual density at q={q}, confidence interval suppressed")
            warnings = (DEGENERATE_DENSITY,)
            ase, ci, density_hat = math.nan, None, math.nan
        else:
            meat, bread = [], []
            for test, nuisances, cdf, density in per_fold:
                values = efficient_moment(theta_hat, q, data.y0[test], data.y1[test], data.a[test],
                                          data.x[test], nuisances, cdf)
                meat.append(float(np.mean(values**2)))
                bread.append(float(density(theta_hat)[0]))
            density_hat = float(np.mean(bread))
            if density_hat < config.density_floor:
                logger.warning(f"degenerate counterfactual density at the estimate for q={q}")
                warnings = (DEGENERATE_DENSITY,)
                ase, ci = math.nan, None
            else:
                sigma = float(np.mean(meat)) / (p_treated * density_hat) ** 2
                ase = math.sqrt(sigma / data.n)
                ci = normal_ci(theta_hat, ase, config.alpha_level)
        estimates.append(QttEstimate(
            q=q,
            theta_prelim=float(np.mean(prelim)),
            theta_hat=theta_hat,
            ase=ase,
            ci=ci,
            per_fold_prelim=np.array(prelim),
            per_fold=np.array(updated),
            moment_before=np.array(before),
            moment_after=np.array(after),
            density=density_hat,
            degenerate=degenerate,
            warnings=warnings,
        ))
    return estimates


def estimate_qtt(data, config, q):
    """Counterfactual ``q``-quantile of ``Y1(0) | A=1``, see :func:`estimate_qtts`."""
    return estimate_qtts(data, config, [q])[0]
