# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .config import STREAM_BOOTSTRAP, make_rng


@dataclass(frozen=True, eq=False)
class EifRecord:
    """
    Cross-fitted influence-function values of one repetition.

    ``psi0[i]`` is evaluated with the nuisances fitted on the complement of
    the fold of unit ``i``; ``psi = A Y1 - psi0``.
    """
    psi0: np.ndarray
    psi: np.ndarray
    fold_of: object
    a: np.ndarray
    p_treated: float

    @property
    def n(self):
        return self.psi0.shape[0]


def fold_means(values, folds):
    """Per-fold means ``P_{I_k}(values)``; ``values`` may carry leading axes."""
    values = np.asarray(values, dtype=float)
    membership = np.zeros((folds.k, folds.fold_of.shape[0]))
    membership[folds.fold_of, np.arange(folds.fold_of.shape[0])] = 1.0
    membership /= membership.sum(axis=1, keepdims=True)
    return values @ membership.T


def asymptotic_variance(records, data, tau_hat, tau0_hat):
    """
    Fold-averaged variance estimates of the counterfactual mean and the ATT.

    :return: ``(sigma0_sq, sigma_sq)``.
    """
    p = records.p_treated
    a = data.a.astype(float)
    centered0 = (records.psi0 - a * tau0_hat) / p
    centered = (a * (data.y1 - tau_hat) - records.psi0) / p
    sigma0_sq = float(np.mean(fold_means(centered0**2, records.fold_of)))
    sigma_sq = float(np.mean(fold_means(centered**2, records.fold_of)))
    return sigma0_sq, sigma_sq


def normal_ci(estimate, se, alpha_level):
    z = stats.norm.ppf(1.0 - alpha_level / 2.0)
    return (float(estimate - z * se), float(estimate + z * se))


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    se: float
    ci: tuple
    draws: np.ndarray


def multiplier_bootstrap(records, config, tau_hat, seed=None, multiplier_sd=1.0):
    """
    Multiplier bootstrap of the ATT.

    Each draw perturbs the scaled influence values with i.i.d.
    ``Normal(1, multiplier_sd^2)`` multipliers:
    ``tau_b = tau_hat + mean_k P_{I_k}[(eps - 1) (psi - A tau_hat) / P(A)]``.

    :param seed: master seed of the multiplier stream, ``config.seed`` when ``None``.
    :param multiplier_sd: standard deviation of the multipliers; 0 freezes every draw at ``tau_hat``.
    :return: :class:`BootstrapResult` with the draw SD and the percentile interval.
    """
    seed = config.seed if seed is None else seed
    rng = make_rng(seed, STREAM_BOOTSTRAP)
    scaled = (records.psi - records.a * tau_hat) / records.p_treated
    multipliers = rng.normal(1.0, 1.0, size=(config.bootstrap_b, records.n))
    if multiplier_sd != 1.0:
        multipliers = 1.0 + multiplier_sd * (multipliers - 1.0)
    draws = tau_hat + fold_means((multipliers - 1.0) * scaled, records.fold_of).mean(axis=1)
    se = float(np.std(draws, ddof=1)) if draws.shape[0] > 1 else 0.0
    lo, hi = np.quantile(draws, [config.alpha_level / 2.0, 1.0 - config.alpha_level / 2.0])
    return BootstrapResult(se=se, ci=(float(lo), float(hi)), draws=draws)


def median_adjust(estimates):
    """
    Median aggregation of repeated cross-fitting.

    :param estimates: sequence of ``(tau_s, sigma_sq_s)`` pairs.
    :return: ``(tau_med, sigma_med_sq)`` with
        ``sigma_med_sq = median_s(sigma_sq_s + (tau_s - tau_med)^2)``.
    """
    estimates = np.asarray(estimates, dtype=float).reshape(-1, 2)
    tau_med = float(np.median(estimates[:, 0]))
    sigma_med_sq = float(np.median(estimates[:, 1] + (estimates[:, 0] - tau_med) ** 2))
    return tau_med, sigma_med_sq
