# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import math
import logging

import numpy as np

from .config import STREAM_PT_BOOTSTRAP, make_rng
from .estimator import AttEstimate
from .inference import normal_ci
from .kernel import default_kernel, fit_kernel_ridge

logger = logging.getLogger(__name__)


def pt_counterfactual_mean(y0, y1, a, x, kernel, lambda_=None):
    """
    Outcome-regression counterfactual mean under parallel trends.

    Average over the treated of ``m10(x) - m00(x) + m01(x)``, where ``mta`` is
    a kernel ridge fit of ``Y_t`` on ``X`` in arm ``a``.
    """
    treated, control = a == 1, a == 0
    m10 = fit_kernel_ridge(x[control], y1[control], kernel, lambda_)
    m00 = fit_kernel_ridge(x[control], y0[control], kernel, lambda_)
    m01 = fit_kernel_ridge(x[treated], y0[treated], kernel, lambda_)
    x_treated = x[treated]
    return float(np.mean(m10(x_treated) - m00(x_treated) + m01(x_treated)))


def _pt_att(y0, y1, a, x, kernel, lambda_):
    tau0 = pt_counterfactual_mean(y0, y1, a, x, kernel, lambda_)
    return float(np.mean(y1[a == 1])) - tau0, tau0


def pt_baseline_att(data, config):
    """
    ATT under parallel trends, for comparison with the odds-ratio estimator.

    The standard error comes from a nonparametric bootstrap that resamples
    units within each arm ``config.pt_bootstrap_b`` times. Without
    covariates the estimate is the classic two-by-two difference of arm and
    period means.
    """
    kernel = default_kernel(data.x, config.bandwidth)
    tau, tau0 = _pt_att(data.y0, data.y1, data.a, data.x, kernel, config.lambda_)
    logger.info(f"parallel-trends baseline: tau={tau:.6g}")

    rng = make_rng(config.seed, STREAM_PT_BOOTSTRAP)
    treated = np.flatnonzero(data.treated)
    control = np.flatnonzero(data.control)
    draws = np.empty(config.pt_bootstrap_b)
    for b in range(config.pt_bootstrap_b):
        sample = np.concatenate([
            rng.choice(control, size=control.shape[0], replace=True),
            rng.choice(treated, size=treated.shape[0], replace=True),
        ])
        draws[b], _ = _pt_att(data.y0[sample], data.y1[sample], data.a[sample], data.x[sample],
                              kernel, config.lambda_)

    se = float(np.std(draws, ddof=1)) if draws.shape[0] > 1 else 0.0
    lo, hi = np.quantile(draws, [config.alpha_level / 2.0, 1.0 - config.alpha_level / 2.0])
    return AttEstimate(
        estimator="pt",
        tau_hat=tau,
        tau0_hat=tau0,
        ase=se,
        ci=normal_ci(tau, se, config.alpha_level),
        per_fold=np.array([tau0]),
        n=data.n,
        sigma_sq=data.n * se**2,
        se_boot=se,
        ci_boot=(float(lo), float(hi)),
        bootstrap_draws=draws,
        repetitions=np.array([tau]),
    )
