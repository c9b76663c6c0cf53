# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import math
import logging
from itertools import product
from dataclasses import dataclass, field

import numpy as np

from .density_ratio import DEFAULT_CLAMP
from .errors import EmptyGrid, InvalidConfig, SINGULAR_SYSTEM, TooFewPoints
from .kernel import (
    PINV_REL_TOL,
    KernelConfig,
    apply_pseudo_inverse,
    as_covariates,
    as_points,
    default_kernel,
    gram,
    pinv_apply,
    symmetric_eigen,
)
from .panel import stack_points, validation_splits

logger = logging.getLogger(__name__)

PROBABILITY_CLAMP = (1e-3, 1.0 - 1e-3)


@dataclass(frozen=True)
class MinimaxHyperParams:
    kappa_beta: float
    kappa_xi: float
    lambda_beta: float
    lambda_xi: float

    def __post_init__(self):
        for name in ("kappa_beta", "kappa_xi", "lambda_beta", "lambda_xi"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidConfig(f"{name}: {value} must be finite and strictly positive.")


@dataclass(frozen=True, eq=False)
class ZetaTerms:
    zeta1: np.ndarray
    zeta2: np.ndarray


@dataclass(frozen=True, eq=False)
class MinimaxFit:
    """
    Closed-form minimax fit ``f(x) = sum_j gamma_j K(x, support_j)``.

    With an ``anchor`` the fitted expansion is a multiplicative correction
    and the evaluator returns ``anchor(x) * f(x)``. Outputs are clipped to
    ``clamp`` when one is set.
    """
    support_x: np.ndarray
    gamma: np.ndarray
    kernel: object
    anchor: object = None
    clamp: tuple = None
    singular: bool = False
    warnings: tuple = field(default=())

    @property
    def anchored(self):
        return self.anchor is not None

    def evaluate_raw(self, x):
        x = as_covariates(x)
        values = gram(x, self.support_x, self.kernel).entries @ self.gamma
        if self.anchor is not None:
            values = values * self.anchor(x)
        return values

    def __call__(self, x):
        values = self.evaluate_raw(x)
        if self.clamp is not None:
            values = np.clip(values, *self.clamp)
        return values

    def clamp_rate(self, x):
        if self.clamp is None:
            return 0.0
        raw = self.evaluate_raw(x)
        lo, hi = self.clamp
        return float(np.mean((raw < lo) | (raw > hi))) if raw.size else 0.0


def r2_hat(y, a, x, alpha1, r1, beta0, clamp=DEFAULT_CLAMP):
    """
    ``[a / beta0(x) + (1 - a) alpha1(y, x)] r1(y, x)``, clamped.

    ``alpha1`` and ``beta0`` are evaluators on ``(y, x)`` and ``x``; ``r1``
    acts on stacked ``(y, x)`` rows.
    """
    x = np.asarray(x, dtype=float)
    y = np.broadcast_to(np.asarray(y, dtype=float), (x.shape[0],))
    a = np.broadcast_to(np.asarray(a, dtype=float), (x.shape[0],))
    weight = a / beta0(x) + (1.0 - a) * alpha1(y, x)
    return np.clip(weight * r1(stack_points(y, x)), *clamp)


@dataclass(frozen=True, eq=False)
class R2Ratio:
    """Evaluator ``r2(y, a, x)`` assembled from the step-one fits."""
    alpha1: object
    r1: object
    beta0: object
    clamp: tuple = DEFAULT_CLAMP

    def __call__(self, y, a, x):
        return r2_hat(y, a, x, self.alpha1, self.r1, self.beta0, self.clamp)


def zeta_terms(data, alpha1, r2):
    a = data.a.astype(float)
    alpha = alpha1(data.y1, data.x)
    ratio = r2(data.y0, data.a, data.x)
    zeta1 = -(1.0 - a) * alpha - (2.0 * a - 1.0) * ratio
    zeta2 = data.y1 * (1.0 - a) * alpha + data.y0 * (2.0 * a - 1.0) * ratio
    return ZetaTerms(zeta1=zeta1, zeta2=zeta2)


def adversary_weights(x, kappa_xi, lambda_xi, rel_tol=PINV_REL_TOL):
    """``0.25 K_xi (K_xi / M + lambda_xi I)^+``, symmetrized."""
    x = as_points(x)
    m = x.shape[0]
    k_xi = gram(x, x, KernelConfig(kappa_xi)).entries
    weights = 0.25 * pinv_apply(k_xi / m + lambda_xi * np.eye(m), k_xi, rel_tol)
    return 0.5 * (weights + weights.T)


def minimax_objective(gamma, k_beta, q0, q1, weights, lambda_beta):
    """
    Profiled outer objective ``e' W e + lambda / M gamma' K gamma`` with
    ``e = q0 * (K gamma) + q1``.
    """
    m = k_beta.shape[0]
    residual = q0 * (k_beta @ gamma) + q1
    return float(residual @ weights @ residual + lambda_beta / m * gamma @ k_beta @ gamma)


def minimax_system(x, q0, q1, hp, rel_tol=PINV_REL_TOL):
    """
    Normal equations of the profiled objective.

    :return: ``(lhs, rhs, k_beta, weights)`` with ``lhs gamma = rhs`` at the optimum.
    """
    x = as_points(x)
    m = x.shape[0]
    k_beta = gram(x, x, KernelConfig(hp.kappa_beta)).entries
    weights = adversary_weights(x, hp.kappa_xi, hp.lambda_xi, rel_tol)
    scaled = k_beta * q0[None, :]
    lhs = scaled @ weights @ scaled.T + hp.lambda_beta / m * k_beta
    rhs = -scaled @ weights @ q1
    return 0.5 * (lhs + lhs.T), rhs, k_beta, weights


def fit_minimax(x, q0, q1, hp, clamp=None, anchor=None, rel_tol=PINV_REL_TOL):
    """
    Closed-form minimax solution of the conditional moment ``E[q0 f(X) + q1 | X] = 0``.

    :param x: covariate rows of the estimation sample.
    :param q0: per-unit multiplier of the unknown function.
    :param q1: per-unit offset of the moment.
    :param hp: :class:`MinimaxHyperParams`.
    :param anchor: optional evaluator; the program is then solved for the
        correction ``f`` of ``anchor(x) f(x)``.
    """
    x = as_covariates(x)
    if x.shape[0] < 2:
        raise TooFewPoints(f"minimax fit needs at least 2 units, got {x.shape[0]}")
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if anchor is not None:
        q0 = q0 * anchor(x)
    lhs, rhs, _, _ = minimax_system(x, q0, q1, hp, rel_tol)
    values, vectors, retained = symmetric_eigen(lhs, rel_tol)
    warnings = ()
    singular = not retained.any()
    if singular:
        logger.warning("minimax system has an empty retained eigenspace, returning the zero fit")
        gamma = np.zeros(x.shape[0])
        warnings = (SINGULAR_SYSTEM,)
    else:
        gamma = apply_pseudo_inverse(values, vectors, retained, rhs)
    return MinimaxFit(
        support_x=x,
        gamma=gamma,
        kernel=KernelConfig(hp.kappa_beta),
        anchor=anchor,
        clamp=None if clamp is None else tuple(clamp),
        singular=singular,
        warnings=warnings,
    )


def fit_beta1_minimax(data, zeta, hp, clamp=DEFAULT_CLAMP, anchor=None, rel_tol=PINV_REL_TOL):
    return fit_minimax(data.x, zeta.zeta1, data.a.astype(float), hp, clamp=clamp, anchor=anchor, rel_tol=rel_tol)


def fit_mu_minimax(data, zeta, hp, binary=False, rel_tol=PINV_REL_TOL):
    clamp = PROBABILITY_CLAMP if binary else None
    return fit_minimax(data.x, zeta.zeta1, zeta.zeta2, hp, clamp=clamp, rel_tol=rel_tol)


def needs_anchor(plugin_values, trigger=10.0):
    """True when the plug-in spread ``max / min`` exceeds ``trigger``."""
    plugin_values = np.asarray(plugin_values, dtype=float)
    low = plugin_values.min()
    return bool(low <= 0 or plugin_values.max() > trigger * low)


def regularize_beta1(plugin_beta1, data, zeta, hp, trigger=10.0, clamp=DEFAULT_CLAMP,
                     rel_tol=PINV_REL_TOL, moments=None):
    """
    Minimax fit of ``beta1``, anchored on the plug-in when its spread over the
    sample is larger than ``trigger``.

    The anchored program estimates ``b1 = beta1 / plugin`` and the returned
    evaluator is ``plugin * b1``.
    """
    q0, q1 = moments if moments is not None else (zeta.zeta1, data.a.astype(float))
    anchor = plugin_beta1 if needs_anchor(plugin_beta1(data.x), trigger) else None
    if anchor is not None:
        logger.info("plug-in beta1 spread above the trigger, fitting the anchored correction")
    return fit_minimax(data.x, q0, q1, hp, clamp=clamp, anchor=anchor, rel_tol=rel_tol)


def default_hyperparams(x, bandwidth=None, lambda_=None):
    """Median-heuristic bandwidths and ``1 / M`` penalties."""
    x = as_covariates(x)
    kappa = default_kernel(x, bandwidth).bandwidth
    lam = 1.0 / x.shape[0] if lambda_ is None else float(lambda_)
    return MinimaxHyperParams(kappa_beta=kappa, kappa_xi=kappa, lambda_beta=lam, lambda_xi=lam)


def hyperparameter_grid(x, lambda_grid, bandwidth=None, kappa_grid=(1.0,)):
    """
    Grid of ``kappa_beta`` multiples of the median-heuristic bandwidth
    crossed with ``(lambda_beta, lambda_xi)`` pairs. The adversary keeps the
    median-heuristic bandwidth.
    """
    base = default_hyperparams(x, bandwidth)
    return [
        MinimaxHyperParams(base.kappa_beta * float(scale), base.kappa_xi, float(lambda_beta), float(lambda_xi))
        for scale, lambda_beta, lambda_xi in product(kappa_grid, lambda_grid, lambda_grid)
    ]


def projected_risk(x, residual, rel_tol=PINV_REL_TOL):
    """``e' W e / |V|^2`` with the adversary weights of the validation covariates."""
    x = as_covariates(x)
    m = x.shape[0]
    kappa = default_kernel(x).bandwidth
    weights = adversary_weights(x, kappa, 1.0 / m, rel_tol)
    return float(residual @ weights @ residual) / m**2


def cv_select_hyperparams(data, zeta, grid, v_folds=2, seed=0, target="beta1", mode="projected",
                          plugin=None, moments=None, clamp=None, rel_tol=PINV_REL_TOL):
    """
    Pick the hyperparameters with the smallest cross-validated risk.

    :param target: ``"beta1"`` (moment ``zeta1 f + A``) or ``"mu"`` (moment ``zeta1 f + zeta2``).
    :param mode: ``"projected"`` scores the validation moment residuals with
        the adversary weights; ``"plugin_mse"`` and ``"plugin_log_mse"`` score
        the squared distance to the ``plugin`` evaluator.
    :param moments: ``(q0, q1)`` to use instead of the ones implied by ``target``.
    :return: the selected :class:`MinimaxHyperParams`. Ties go to the smallest
        ``(lambda_beta, lambda_xi)``, then to the widest ``kappa_beta``.
    """
    grid = list(grid)
    if not grid:
        raise EmptyGrid("no hyperparameters to select from")
    if len(grid) == 1:
        return grid[0]
    if mode != "projected" and plugin is None:
        raise InvalidConfig(f"cv mode {mode} needs a plug-in evaluator")

    if moments is not None:
        q0, q1 = (np.asarray(v, dtype=float) for v in moments)
    elif target == "mu":
        q0, q1 = zeta.zeta1, zeta.zeta2
    else:
        q0, q1 = zeta.zeta1, data.a.astype(float)

    x = data.x
    split_of = validation_splits(data.n, v_folds, seed)
    scored = []
    for hp in grid:
        risk = 0.0
        for split in range(v_folds):
            train = split_of != split
            valid = ~train
            fit = fit_minimax(x[train], q0[train], q1[train], hp, clamp=clamp, rel_tol=rel_tol)
            fitted = fit(x[valid])
            if mode == "projected":
                risk += projected_risk(x[valid], q0[valid] * fitted + q1[valid], rel_tol)
            elif mode == "plugin_mse":
                risk += float(np.mean((fitted - plugin(x[valid])) ** 2))
            else:
                floor = np.finfo(float).tiny
                risk += float(np.mean((np.log(np.maximum(fitted, floor))
                                       - np.log(np.maximum(plugin(x[valid]), floor))) ** 2))
        scored.append((risk / v_folds, hp.lambda_beta, hp.lambda_xi, -hp.kappa_beta, hp))
        logger.debug(f"cv {mode}: kappa_beta={hp.kappa_beta:g} lambda_beta={hp.lambda_beta:g} "
                     f"lambda_xi={hp.lambda_xi:g} risk={risk / v_folds:.6g}")
    best = min(scored, key=lambda item: item[:4])
    return best[4]
