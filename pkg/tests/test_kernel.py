import numpy as np
import pytest

from orec_did.errors import DimensionMismatch, InvalidBandwidth, InvalidConfig, NonFiniteInput, TooFewPoints
from orec_did.kernel import (
    KernelConfig,
    default_kernel,
    fit_kernel_ridge,
    gram,
    kernel_eval,
    median_heuristic,
    pinv_apply,
)


@pytest.mark.parametrize("bandwidth", [0.0, -1.0, float("nan"), float("inf")])
def test_kernel_config_rejects_non_positive_bandwidths(bandwidth):
    with pytest.raises(InvalidBandwidth):
        KernelConfig(bandwidth)


def test_kernel_eval_is_gaussian_in_the_squared_distance():
    config = KernelConfig(2.0)

    assert kernel_eval([0.0, 0.0], [0.0, 0.0], config) == 1.0
    assert kernel_eval([1.0, 0.0], [0.0, 1.0], config) == pytest.approx(np.exp(-1.0))
    with pytest.raises(DimensionMismatch):
        kernel_eval([1.0], [1.0, 2.0], config)


def test_self_gram_is_symmetric_with_unit_diagonal():
    points = np.random.default_rng(1).normal(size=(15, 3))

    matrix = gram(points, points, KernelConfig(1.5)).entries

    np.testing.assert_array_equal(matrix, matrix.T)
    np.testing.assert_array_equal(np.diag(matrix), np.ones(15))
    assert np.all(np.linalg.eigvalsh(matrix) > -1e-10)


def test_gram_matches_pointwise_kernel_and_checks_inputs():
    rows = np.array([[0.0, 1.0], [2.0, -1.0]])
    cols = np.array([[1.0, 1.0], [0.0, 0.0], [3.0, 3.0]])
    config = KernelConfig(0.7)

    matrix = gram(rows, cols, config)

    assert matrix.shape == (2, 3)
    for i in range(2):
        for j in range(3):
            assert matrix.entries[i, j] == pytest.approx(kernel_eval(rows[i], cols[j], config))
    with pytest.raises(DimensionMismatch):
        gram(rows, np.ones((2, 3)), config)
    with pytest.raises(NonFiniteInput):
        gram(np.array([[np.nan, 0.0]]), cols, config)


def test_median_heuristic_returns_the_median_squared_distance():
    points = np.array([[0.0], [1.0], [3.0]])

    # squared distances 1, 9, 4
    assert median_heuristic(points).bandwidth == 4.0


def test_median_heuristic_handles_duplicates_and_tiny_samples():
    duplicates = np.array([[1.0], [1.0], [1.0], [1.0], [3.0]])
    assert median_heuristic(duplicates).bandwidth == 4.0

    assert median_heuristic(np.ones((5, 2))).bandwidth == 1.0
    with pytest.raises(TooFewPoints):
        median_heuristic(np.array([[1.0]]))
    assert default_kernel(np.array([[1.0]])).bandwidth == 1.0
    assert default_kernel(np.ones((3, 1)), bandwidth=0.3).bandwidth == 0.3


def test_pinv_apply_inverts_regular_systems_and_projects_singular_ones():
    rng = np.random.default_rng(2)
    root = rng.normal(size=(4, 4))
    regular = root @ root.T + np.eye(4)
    b = rng.normal(size=4)

    np.testing.assert_allclose(regular @ pinv_apply(regular, b), b, atol=1e-10)

    singular = np.diag([2.0, 0.0])
    np.testing.assert_allclose(pinv_apply(singular, [4.0, 5.0]), [2.0, 0.0])
    np.testing.assert_allclose(pinv_apply(np.zeros((2, 2)), [1.0, 1.0]), [0.0, 0.0])


def test_pinv_apply_checks_shapes_and_tolerance():
    with pytest.raises(DimensionMismatch):
        pinv_apply(np.ones((2, 3)), np.ones(2))
    with pytest.raises(InvalidConfig):
        pinv_apply(np.eye(2), np.ones(2), rel_tol=0.0)


def test_kernel_ridge_recovers_a_smooth_function():
    rng = np.random.default_rng(3)
    x = rng.uniform(-2.0, 2.0, size=(200, 1))
    y = np.sin(x[:, 0]) + 0.05 * rng.normal(size=200)

    fit = fit_kernel_ridge(x, y, lambda_=1e-4)
    grid = np.linspace(-1.5, 1.5, 7)[:, None]

    np.testing.assert_allclose(fit(grid), np.sin(grid[:, 0]), atol=0.1)


def test_kernel_ridge_without_covariates_returns_the_sample_mean():
    y = np.array([1.0, 2.0, 6.0])

    fit = fit_kernel_ridge(np.empty((3, 0)), y)

    np.testing.assert_allclose(fit(np.empty((2, 0))), [3.0, 3.0])
