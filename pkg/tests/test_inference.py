import math

import numpy as np
import pytest
from scipy import stats

from orec_did.config import EstimatorConfig
from orec_did.inference import (
    EifRecord,
    asymptotic_variance,
    fold_means,
    median_adjust,
    multiplier_bootstrap,
    normal_ci,
)
from orec_did.panel import make_folds, validate_dataset


def _records(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    a = np.tile([0.0, 1.0], n // 2)
    y1 = rng.normal(size=n) + a
    psi0 = a * rng.normal(0.2, 1.0, size=n)
    folds = make_folds(n, EstimatorConfig(k_folds=4, seed=seed), a)
    data = validate_dataset(rng.normal(size=n), y1, a)
    records = EifRecord(psi0=psi0, psi=a * y1 - psi0, fold_of=folds, a=a, p_treated=float(a.mean()))
    return data, records


def test_fold_means_average_within_each_fold():
    a = np.array([0, 1, 0, 1, 0, 1])
    folds = make_folds(6, EstimatorConfig(k_folds=2, seed=1), a)
    values = np.arange(6.0)

    means = fold_means(values, folds)

    for k in range(2):
        assert means[k] == pytest.approx(values[folds.indices(k)].mean())
    np.testing.assert_allclose(fold_means(np.vstack([values, 2 * values]), folds)[1], 2 * means)


def test_median_adjust_adds_the_spread_of_the_repetitions():
    tau, sigma_sq = median_adjust([(1.0, 1.0), (2.0, 1.0), (4.0, 1.0)])

    assert tau == 2.0
    # 1 + 1, 1 + 0, 1 + 4
    assert sigma_sq == 2.0
    assert median_adjust([(0.5, 3.0)]) == (0.5, 3.0)


def test_normal_ci_is_symmetric_with_the_normal_quantile():
    lo, hi = normal_ci(1.0, 0.5, 0.05)

    z = stats.norm.ppf(0.975)
    assert lo == pytest.approx(1.0 - z * 0.5)
    assert hi == pytest.approx(1.0 + z * 0.5)


def test_asymptotic_variance_matches_the_scaled_second_moment():
    data, records = _records(n=400, seed=2)
    p = records.p_treated
    tau0 = float(np.mean(records.psi0) / p)
    tau = float(np.mean(data.a * data.y1) / p) - tau0

    sigma0_sq, sigma_sq = asymptotic_variance(records, data, tau, tau0)

    # equal fold sizes make the fold average a plain mean
    assert sigma0_sq == pytest.approx(np.mean(((records.psi0 - data.a * tau0) / p) ** 2))
    assert sigma_sq == pytest.approx(np.mean(((data.a * (data.y1 - tau) - records.psi0) / p) ** 2))


def test_multiplier_bootstrap_matches_the_influence_function_scale():
    data, records = _records()
    config = EstimatorConfig(bootstrap_b=4000, seed=5)
    tau = float(np.mean(records.psi) / records.p_treated)

    boot = multiplier_bootstrap(records, config, tau)
    scaled = (records.psi - records.a * tau) / records.p_treated

    assert boot.draws.shape == (4000,)
    assert boot.se == pytest.approx(math.sqrt(np.mean(scaled**2) / records.n), rel=0.1)
    assert boot.ci[0] < tau < boot.ci[1]


def test_multiplier_bootstrap_is_reproducible_and_degenerates_without_noise():
    _, records = _records(n=200)
    config = EstimatorConfig(bootstrap_b=50, seed=3)

    first = multiplier_bootstrap(records, config, 0.4)
    again = multiplier_bootstrap(records, config, 0.4)
    other = multiplier_bootstrap(records, config, 0.4, seed=4)
    frozen = multiplier_bootstrap(records, config, 0.4, multiplier_sd=0.0)

    np.testing.assert_array_equal(first.draws, again.draws)
    assert not np.array_equal(first.draws, other.draws)
    np.testing.assert_allclose(frozen.draws, 0.4)
    assert frozen.se == pytest.approx(0.0, abs=1e-12)
