# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist
from sklearn.kernel_ridge import KernelRidge

from .errors import DimensionMismatch, EmptySample, InvalidBandwidth, InvalidConfig, NonFiniteInput, TooFewPoints

FALLBACK_BANDWIDTH = 1.0
PINV_REL_TOL = 1e-8


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel ``exp(-|u - v|^2 / bandwidth)``."""
    bandwidth: float

    def __post_init__(self):
        if not (isinstance(self.bandwidth, (int, float, np.floating))
                and math.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise InvalidBandwidth(f"bandwidth {self.bandwidth} must be finite and strictly positive")


@dataclass(frozen=True, eq=False)
class GramMatrix:
    entries: np.ndarray
    row_points: np.ndarray
    col_points: np.ndarray
    config: KernelConfig

    @property
    def shape(self):
        return self.entries.shape


def as_points(points):
    """Point set as a float matrix, one point per row."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points.reshape(1, -1)
    if points.ndim != 2:
        raise DimensionMismatch(f"point set must be a matrix, got {points.ndim} dimensions")
    return points


def as_covariates(x):
    """Covariate rows as a matrix; a vector is one covariate, ``N x 0`` is kept."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatch(f"covariates must be a matrix, got {x.ndim} dimensions")
    return x


def _check_finite(*arrays):
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NonFiniteInput("input contains non-finite values")


def kernel_eval(u, v, config):
    u = np.asarray(u, dtype=float).ravel()
    v = np.asarray(v, dtype=float).ravel()
    if u.shape != v.shape:
        raise DimensionMismatch(f"points of dimension {u.shape[0]} and {v.shape[0]}")
    return float(np.exp(-np.sum((u - v) ** 2) / config.bandwidth))


def gram(rows, cols, config):
    """
    Gram matrix ``K[i, j] = kernel_eval(rows[i], cols[j])``.

    Squared distances come from ``cdist`` which evaluates every pair
    directly, so a self-Gram is exactly symmetric with a unit diagonal.
    """
    rows = as_points(rows)
    cols = as_points(cols)
    if rows.shape[1] != cols.shape[1]:
        raise DimensionMismatch(f"row points have dimension {rows.shape[1]}, column points {cols.shape[1]}")
    _check_finite(rows, cols)
    if rows.shape[1] == 0:
        entries = np.ones((rows.shape[0], cols.shape[0]))
    else:
        entries = np.exp(-cdist(rows, cols, metric="sqeuclidean") / config.bandwidth)
    return GramMatrix(entries=entries, row_points=rows, col_points=cols, config=config)


def median_heuristic(points):
    """
    Bandwidth equal to the median squared pairwise distance.

    Duplicate-heavy sets whose median is zero fall back to the smallest
    positive squared distance, and to 1.0 when every point coincides.
    """
    points = as_points(points)
    if points.shape[0] < 2:
        raise TooFewPoints(f"median heuristic needs at least 2 points, got {points.shape[0]}")
    _check_finite(points)
    if points.shape[1] == 0:
        return KernelConfig(FALLBACK_BANDWIDTH)
    distances = pdist(points, metric="sqeuclidean")
    kappa = float(np.median(distances))
    if kappa <= 0.0:
        positive = distances[distances > 0]
        kappa = float(positive.min()) if positive.size else FALLBACK_BANDWIDTH
    return KernelConfig(kappa)


def default_kernel(points, bandwidth=None):
    """Fixed bandwidth when given, otherwise the median heuristic (1.0 below 2 points)."""
    if bandwidth is not None:
        return KernelConfig(float(bandwidth))
    points = as_points(points)
    if points.shape[0] < 2:
        return KernelConfig(FALLBACK_BANDWIDTH)
    return median_heuristic(points)


def symmetric_eigen(m, rel_tol=PINV_REL_TOL):
    """
    Eigendecomposition of the symmetric part of ``m`` with the retained mask.

    :return: eigenvalues, eigenvectors and a boolean mask of the eigenvalues
        above ``rel_tol`` times the largest absolute eigenvalue.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    _check_finite(m)
    if m.shape[0] == 0:
        return np.empty(0), np.empty((0, 0)), np.empty(0, dtype=bool)
    values, vectors = linalg.eigh(0.5 * (m + m.T))
    scale = np.max(np.abs(values))
    retained = np.abs(values) > rel_tol * scale if scale > 0 else np.zeros_like(values, dtype=bool)
    return values, vectors, retained


def apply_pseudo_inverse(values, vectors, retained, b):
    """Apply ``V diag(1 / w) V'`` on the retained eigenpairs to ``b``."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != values.shape[0]:
        raise DimensionMismatch(f"matrix of order {values.shape[0]} applied to {b.shape[0]} rows")
    inverse = np.zeros_like(values)
    inverse[retained] = 1.0 / values[retained]
    projected = vectors.T @ b
    if b.ndim == 1:
        return vectors @ (inverse * projected)
    return vectors @ (inverse[:, None] * projected)


def pinv_apply(m, b, rel_tol=PINV_REL_TOL):
    """
    Apply the Moore-Penrose pseudo-inverse of the symmetric matrix ``m`` to ``b``.

    Eigenvalues below ``rel_tol`` times the largest absolute eigenvalue are
    treated as zero.
    """
    if not 0.0 < rel_tol < 1.0:
        raise InvalidConfig(f"rel_tol {rel_tol} must lie in (0, 1)")
    b = np.asarray(b, dtype=float)
    _check_finite(b)
    return apply_pseudo_inverse(*symmetric_eigen(m, rel_tol), b)


@dataclass(frozen=True, eq=False)
class KernelRidgeFit:
    """
    Centered kernel ridge smoother.

    Predictions are ``offset + sum_j coef_j K(x, support_j)``. Centering the
    targets makes a constant-covariate fit return the sample mean.
    """
    support: np.ndarray
    model: KernelRidge
    offset: np.ndarray
    kernel: KernelConfig

    def __call__(self, x):
        x = as_covariates(x)
        if x.shape[0] == 0:
            return np.empty((0,) + self.offset.shape)
        return self.model.predict(gram(x, self.support, self.kernel).entries) + self.offset


def fit_kernel_ridge(x, y, kernel=None, lambda_=None):
    """
    Kernel ridge regression of ``y`` (vector or matrix of targets) on ``x``.

    :param kernel: :class:`KernelConfig`; the median heuristic on ``x`` when ``None``.
    :param lambda_: penalty per unit, the ridge strength is ``M * lambda_``.
        Default ``1 / M``.
    """
    x = as_covariates(x)
    y = np.asarray(y, dtype=float)
    m = x.shape[0]
    if m == 0:
        raise EmptySample("kernel ridge needs at least one observation")
    if y.shape[0] != m:
        raise DimensionMismatch(f"{m} covariate rows for {y.shape[0]} targets")
    _check_finite(x, y)
    kernel = kernel or default_kernel(x)
    lambda_ = 1.0 / m if lambda_ is None else float(lambda_)
    offset = y.mean(axis=0)
    model = KernelRidge(alpha=m * lambda_, kernel="precomputed")
    model.fit(gram(x, x, kernel).entries, y - offset)
    return KernelRidgeFit(support=x, model=model, offset=np.asarray(offset), kernel=kernel)
