# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.preprocessing import StandardScaler

from .errors import EmptyControlSample, EmptyGrid, EmptySample, NON_CONVERGENCE
from .kernel import PINV_REL_TOL, KernelConfig, as_points, default_kernel, gram, pinv_apply
from .panel import stack_points, validation_splits

logger = logging.getLogger(__name__)

DEFAULT_CLAMP = (1e-3, 1e3)
KL_MAX_ITER = 5000
KL_TOL = 1e-8
# improvement still left at max_iter that is reported as non-convergence
KL_STALL = 1e-6


@dataclass(frozen=True, eq=False)
class DensityRatioFit:
    """
    Kernel expansion ``r(p) = sum_j gamma_j K(p, support_j)`` of a density ratio.

    Calling the fit returns values clamped to ``clamp``; :meth:`evaluate_raw`
    returns the unclamped expansion. With a ``scaler`` the support points and
    the kernel live in standardized coordinates and inputs are standardized
    before evaluation.
    """
    support_points: np.ndarray
    gamma: np.ndarray
    kernel: object
    scaler: object = None
    clamp: tuple = DEFAULT_CLAMP
    method: str = "kl"
    converged: bool = True
    n_iter: int = 0
    objective_path: tuple = ()
    raw_gamma: np.ndarray = None
    warnings: tuple = field(default=())

    def evaluate_raw(self, points):
        points = as_points(points)
        if self.scaler is not None:
            points = self.scaler.transform(points)
        return gram(points, self.support_points, self.kernel).entries @ self.gamma

    def __call__(self, points):
        return np.clip(self.evaluate_raw(points), *self.clamp)

    def clamp_rate(self, points):
        """Fraction of evaluations that hit either clamp bound."""
        raw = self.evaluate_raw(points)
        if raw.size == 0:
            return 0.0
        lo, hi = self.clamp
        return float(np.mean((raw < lo) | (raw > hi)))


def _check_samples(numerator, denominator):
    numerator = as_points(numerator)
    denominator = as_points(denominator)
    if numerator.shape[0] == 0 or denominator.shape[0] == 0:
        raise EmptySample(f"density ratio needs non-empty samples, got "
                          f"{numerator.shape[0]} numerator and {denominator.shape[0]} denominator points")
    return numerator, denominator


def _standardized(numerator, denominator, standardize):
    """Samples in the coordinates of the denominator sample's mean and scale."""
    numerator, denominator = _check_samples(numerator, denominator)
    if not standardize:
        return numerator, denominator, None
    scaler = StandardScaler().fit(denominator)
    return scaler.transform(numerator), scaler.transform(denominator), scaler


def kl_objective(fitted):
    return float(np.mean(np.log(fitted)))


def fit_kl_ratio(numerator, denominator, kernel=None, max_iter=KL_MAX_ITER, tol=KL_TOL, clamp=DEFAULT_CLAMP,
                 standardize=True):
    """
    Kullback-Leibler importance estimation of ``p_numerator / p_denominator``.

    Maximizes the mean of ``log(K gamma)`` over the numerator sample subject to
    a unit mean of the expansion over the denominator sample and ``gamma >= 0``.
    The multiplicative update is the EM step for the mixture weights
    ``b_j gamma_j``: it keeps the coefficients non-negative, lands on the
    constraint and never decreases the objective.

    :param numerator: ``(y, x)`` rows drawn from the numerator law; they are
        the support points of the expansion.
    :param denominator: ``(y, x)`` rows drawn from the denominator law.
    :param kernel: :class:`KernelConfig` in standardized coordinates, median
        heuristic on the numerator when ``None``.
    :param standardize: center and scale both samples by the denominator
        sample before fitting.
    :return: :class:`DensityRatioFit`.
    """
    numerator, denominator, scaler = _standardized(numerator, denominator, standardize)
    kernel = kernel or default_kernel(numerator)
    k_num = gram(numerator, numerator, kernel).entries
    b = gram(denominator, numerator, kernel).entries.mean(axis=0)

    gamma = np.full(numerator.shape[0], 1.0 / b.sum())
    fitted = k_num @ gamma
    objective = kl_objective(fitted)
    path = [objective]
    converged = False
    improvement = np.inf
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        gamma = gamma * (k_num.T @ (1.0 / fitted)) / (numerator.shape[0] * b)
        gamma /= b @ gamma
        fitted = k_num @ gamma
        new_objective = kl_objective(fitted)
        improvement = new_objective - objective
        objective = new_objective
        path.append(objective)
        if improvement < tol:
            converged = True
            break

    warnings = ()
    if not converged and improvement > KL_STALL:
        logger.warning(f"KL importance estimation still improving by {improvement:.3e} after {max_iter} iterations")
        warnings = (NON_CONVERGENCE,)
    return DensityRatioFit(
        support_points=numerator,
        gamma=gamma,
        kernel=kernel,
        scaler=scaler,
        clamp=tuple(clamp),
        method="kl",
        converged=converged,
        n_iter=n_iter,
        objective_path=tuple(path),
        raw_gamma=gamma.copy(),
        warnings=warnings,
    )


def fit_lsif_ratio(numerator, denominator, kernel=None, lambda_=None, clamp=DEFAULT_CLAMP, rel_tol=PINV_REL_TOL,
                   standardize=True):
    """
    Least-squares importance fitting.

    Minimizes ``gamma' H gamma / 2 - h' gamma + lambda gamma' K gamma / 2``
    with ``H`` the denominator second moment of the kernel features and ``h``
    their numerator mean, in closed form. Negative coefficients are then set
    to zero and the expansion is rescaled to a unit denominator mean.

    :param lambda_: penalty, ``1 / M`` for ``M`` numerator points when ``None``.
    """
    numerator, denominator, scaler = _standardized(numerator, denominator, standardize)
    kernel = kernel or default_kernel(numerator)
    lambda_ = 1.0 / numerator.shape[0] if lambda_ is None else float(lambda_)
    k_num = gram(numerator, numerator, kernel).entries
    k_den = gram(denominator, numerator, kernel).entries
    second_moment = k_den.T @ k_den / denominator.shape[0]
    h = k_num.mean(axis=0)
    raw_gamma = pinv_apply(second_moment + lambda_ * k_num, h, rel_tol)

    b = k_den.mean(axis=0)
    gamma = np.clip(raw_gamma, 0.0, None)
    if b @ gamma <= 0.0:
        gamma = np.ones_like(gamma)
    gamma = gamma / (b @ gamma)
    return DensityRatioFit(
        support_points=numerator,
        gamma=gamma,
        kernel=kernel,
        scaler=scaler,
        clamp=tuple(clamp),
        method="lsif",
        raw_gamma=raw_gamma,
    )


def fit_r1(control_y1x, control_y0x, kernel=None, method="kl", **options):
    """Ratio of the control ``(Y1, X)`` law to the control ``(Y0, X)`` law."""
    if method == "lsif":
        return fit_lsif_ratio(control_y1x, control_y0x, kernel=kernel, **options)
    return fit_kl_ratio(control_y1x, control_y0x, kernel=kernel, **options)


@dataclass(frozen=True)
class RatioHyperParams:
    """Bandwidth of a ratio fit, with the LSIF penalty (``None`` for KL or the ``1 / M`` default)."""
    kernel: KernelConfig
    lambda_: float = None


def fit_ratio(numerator, denominator, method="kl", hp=None, **options):
    kernel = None if hp is None else hp.kernel
    if method == "lsif":
        return fit_lsif_ratio(numerator, denominator, kernel=kernel, lambda_=None if hp is None else hp.lambda_,
                              **options)
    return fit_kl_ratio(numerator, denominator, kernel=kernel, **options)


def held_out_loss(fit, numerator, denominator):
    """
    Held-out criterion of a ratio fit, smaller is better.

    KL fits score minus the mean log ratio over the numerator sample once the
    expansion is rescaled to a unit mean over the denominator sample. LSIF
    fits score the squared loss ``mean_den(r^2) / 2 - mean_num(r)``.
    """
    on_numerator = fit.evaluate_raw(numerator)
    on_denominator = fit.evaluate_raw(denominator)
    if fit.method == "lsif":
        return float(0.5 * np.mean(on_denominator**2) - np.mean(on_numerator))
    floor = np.finfo(float).tiny
    return float(np.log(max(np.mean(on_denominator), floor)) - np.mean(np.log(np.maximum(on_numerator, floor))))


def ratio_hyperparameter_grid(numerator, denominator, kappa_grid, lambda_grid=(None,), bandwidth=None):
    """
    Bandwidths ``kappa_grid`` times the median heuristic of the standardized
    numerator sample, or the fixed ``bandwidth``, crossed with ``lambda_grid``.
    """
    if bandwidth is not None:
        kernels = [KernelConfig(float(bandwidth))]
    else:
        standardized, _, _ = _standardized(numerator, denominator, True)
        base = default_kernel(standardized).bandwidth
        kernels = [KernelConfig(base * float(scale)) for scale in kappa_grid]
    return [RatioHyperParams(kernel, None if lambda_ is None else float(lambda_))
            for kernel in kernels for lambda_ in lambda_grid]


def cv_select_ratio(numerator, denominator, grid, method="kl", v_folds=2, seed=0, key=0, **options):
    """
    Ratio hyperparameters with the smallest held-out loss.

    Both samples are split in ``v_folds`` validation splits; each grid entry is
    fitted on all but one split and scored on the remaining one. Ties go to
    the widest bandwidth, then to the largest penalty. Samples too small to
    split keep the first grid entry.

    :param key: stream key separating the splits of different ratios.
    :param options: passed to the ratio fit (``clamp``, ``max_iter``, ``tol``, ``rel_tol``).
    """
    grid = list(grid)
    if not grid:
        raise EmptyGrid("no ratio hyperparameters to select from")
    numerator, denominator = _check_samples(numerator, denominator)
    if len(grid) == 1 or min(numerator.shape[0], denominator.shape[0]) < 2 * v_folds:
        return grid[0]

    num_split = validation_splits(numerator.shape[0], v_folds, seed, key, 0)
    den_split = validation_splits(denominator.shape[0], v_folds, seed, key, 1)
    scored = []
    for hp in grid:
        loss = 0.0
        for split in range(v_folds):
            fit = fit_ratio(numerator[num_split != split], denominator[den_split != split], method, hp, **options)
            loss += held_out_loss(fit, numerator[num_split == split], denominator[den_split == split])
        loss /= v_folds
        scored.append((loss, -hp.kernel.bandwidth, -(hp.lambda_ or 0.0), hp))
        logger.debug(f"ratio cv {method}: kappa={hp.kernel.bandwidth:g} lambda={hp.lambda_} loss={loss:.6g}")
    return min(scored, key=lambda item: item[:3])[3]


@dataclass(frozen=True, eq=False)
class ReferenceOutcome:
    """
    Reference outcome ``y_R``, either one global value or a kernel-weighted
    conditional median of the control ``Y0`` given ``X``.
    """
    value: float = None
    support_x: np.ndarray = None
    support_y: np.ndarray = None
    kernel: object = None

    @property
    def is_global(self):
        return self.value is not None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        if self.is_global:
            return np.full(n, float(self.value))
        weights = gram(x.reshape(n, -1), self.support_x, self.kernel).entries
        return weighted_median(self.support_y, weights)


def weighted_median(values, weights):
    """
    Row-wise weighted median of ``values``.

    With a cumulative weight of exactly one half the value is averaged with
    the next one carrying positive weight, so uniform weights give ``np.median``.
    Rows whose weights all vanish (kernel underflow far from the support)
    get the unweighted median.
    """
    values = np.asarray(values, dtype=float)
    weights = np.atleast_2d(np.asarray(weights, dtype=float))
    empty = ~(weights.sum(axis=1) > 0.0)
    if np.any(empty):
        weights = weights.copy()
        weights[empty] = 1.0
    order = np.argsort(values, kind="stable")
    sorted_values = values[order]
    cumulative = np.cumsum(weights[:, order], axis=1)
    cumulative /= cumulative[:, -1:]
    index = np.argmax(cumulative >= 0.5 - 1e-10, axis=1)
    rows = np.arange(weights.shape[0])
    result = sorted_values[index]
    tie = np.isclose(cumulative[rows, index], 0.5, rtol=0.0, atol=1e-10)
    upper = np.argmax(cumulative > 0.5 + 1e-10, axis=1)
    result[tie] = 0.5 * (sorted_values[index[tie]] + sorted_values[upper[tie]])
    return result


def select_reference_outcome(control_y0, control_x, mode="global", kernel=None, binary=False):
    """
    :param mode: ``"global"`` for the control median of ``Y0`` or
        ``"conditional"`` for the kernel-weighted median given ``X``.
    :param binary: binary outcomes always use ``y_R = 0``.
    """
    control_y0 = np.asarray(control_y0, dtype=float).ravel()
    if control_y0.shape[0] == 0:
        raise EmptyControlSample("no control unit to pick a reference outcome from")
    if binary:
        return ReferenceOutcome(value=0.0)
    if mode == "global":
        return ReferenceOutcome(value=float(np.median(control_y0)))
    control_x = np.asarray(control_x, dtype=float).reshape(control_y0.shape[0], -1)
    return ReferenceOutcome(
        support_x=control_x,
        support_y=control_y0,
        kernel=kernel or default_kernel(control_x),
    )


@dataclass(frozen=True, eq=False)
class OddsRatio:
    """``alpha1(y, x) = r0(y, x) / r0(y_R(x), x)``, clamped."""
    r0: object
    y_ref: ReferenceOutcome
    clamp: tuple = DEFAULT_CLAMP

    def __call__(self, y, x):
        x = np.asarray(x, dtype=float)
        y = np.broadcast_to(np.asarray(y, dtype=float), (x.shape[0],))
        at_y = self.r0(stack_points(y, x))
        at_ref = self.r0(stack_points(self.y_ref(x), x))
        return np.clip(at_y / at_ref, *self.clamp)


@dataclass(frozen=True, eq=False)
class BaselineOdds:
    """``beta0(x) = r0(y_R(x), x) p / (1 - p)``, clamped."""
    r0: object
    y_ref: ReferenceOutcome
    p_treated: float
    clamp: tuple = DEFAULT_CLAMP

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        odds = self.p_treated / (1.0 - self.p_treated)
        return np.clip(self.r0(stack_points(self.y_ref(x), x)) * odds, *self.clamp)


def derive_alpha1_beta0(r0, y_ref, p_treated, clamp=DEFAULT_CLAMP):
    """
    Odds ratio and baseline odds evaluators implied by ``r0``.

    :param r0: callable on stacked ``(y, x)`` rows, usually a :class:`DensityRatioFit`.
    :return: ``(alpha1, beta0)`` evaluators, ``alpha1(y, x)`` and ``beta0(x)``.
    """
    if not 0.0 < p_treated < 1.0:
        raise EmptySample(f"treated share {p_treated} must lie in (0, 1)")
    return OddsRatio(r0, y_ref, tuple(clamp)), BaselineOdds(r0, y_ref, float(p_treated), tuple(clamp))
