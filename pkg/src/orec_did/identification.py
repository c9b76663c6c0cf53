# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

"""
Plug-in nuisances and the three representations of the counterfactual mean
``E[Y1(0) | A=1]``: inverse probability weighting, outcome regression and
the augmented (doubly robust) form.
"""

from dataclasses import dataclass

import numpy as np

from .density_ratio import DEFAULT_CLAMP
from .kernel import fit_kernel_ridge

PROBABILITY_FLOOR = 1e-3


@dataclass(frozen=True, eq=False)
class PropensityOdds:
    """``p(x) / (1 - p(x))`` from a regression of ``A`` on ``X``."""
    propensity: object

    def __call__(self, x):
        p = np.clip(self.propensity(x), PROBABILITY_FLOOR, 1.0 - PROBABILITY_FLOOR)
        return p / (1.0 - p)


@dataclass(frozen=True, eq=False)
class PluginRatio:
    """``numerator(x) / denominator(x)`` with the denominator floored, optionally clipped."""
    numerator: object
    denominator: object
    clamp: tuple = None
    floor: float = PROBABILITY_FLOOR

    def __call__(self, x):
        values = self.numerator(x) / np.maximum(self.denominator(x), self.floor)
        if self.clamp is not None:
            values = np.clip(values, *self.clamp)
        return values


def fit_beta1_plugin(data, alpha1, kernel=None, lambda_=None, clamp=DEFAULT_CLAMP):
    """
    Plug-in ``beta1(x) = odds(A=1 | x) / E[alpha1(Y1, x) | A=0, x]``.

    Both regressions are kernel ridge fits on the covariates of ``data``.
    """
    control = data.control
    propensity = fit_kernel_ridge(data.x, data.a.astype(float), kernel, lambda_)
    alpha_mean = fit_kernel_ridge(data.x[control], alpha1(data.y1[control], data.x[control]), kernel, lambda_)
    return PluginRatio(PropensityOdds(propensity), alpha_mean, clamp=tuple(clamp), floor=clamp[0])


def fit_mu_plugin(data, alpha1, kernel=None, lambda_=None):
    """Plug-in ``mu(x) = E[alpha1 Y1 | A=0, x] / E[alpha1 | A=0, x]``."""
    control = data.control
    x = data.x[control]
    alpha = alpha1(data.y1[control], x)
    weighted = fit_kernel_ridge(x, alpha * data.y1[control], kernel, lambda_)
    alpha_mean = fit_kernel_ridge(x, alpha, kernel, lambda_)
    return PluginRatio(weighted, alpha_mean, floor=DEFAULT_CLAMP[0])


def ipw_tau0(data, alpha1, beta1):
    """``P[(1 - A) beta1 alpha1 Y1] / P(A)``."""
    weights = (1 - data.a) * beta1(data.x) * alpha1(data.y1, data.x)
    return float(np.mean(weights * data.y1) / np.mean(data.a))


def or_tau0(data, mu):
    """``P[A mu(X)] / P(A)``."""
    return float(np.mean(data.a * mu(data.x)) / np.mean(data.a))


def aipw_tau0(data, alpha1, beta1, mu):
    """
    ``P[(1 - A) beta1 alpha1 (Y1 - mu) + A mu] / P(A)``.

    Consistent when ``alpha1`` is right and either ``beta1`` or ``mu`` is.
    """
    fitted_mu = mu(data.x)
    weights = (1 - data.a) * beta1(data.x) * alpha1(data.y1, data.x)
    return float(np.mean(weights * (data.y1 - fitted_mu) + data.a * fitted_mu) / np.mean(data.a))
