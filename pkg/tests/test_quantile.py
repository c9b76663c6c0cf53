import math

import numpy as np
import pytest

from orec_did.config import EstimatorConfig
from orec_did.errors import InvalidConfig, WrongOutcomeKind
from orec_did.quantile import ConditionalCdf, estimate_qtt, estimate_qtts, weighted_quantile
from orec_did.simulation import dgp_spec, simulate

FAST = dict(k_folds=2, repetitions_s=1, bootstrap_b=20, kl_max_iter=500)


@pytest.fixture(scope="module")
def oracle_design():
    spec = dgp_spec("gaussian-oracle", 400, seed=31)
    return spec, simulate(spec)


def test_weighted_quantile_uses_the_cumulative_weights():
    values = np.array([4.0, 1.0, 3.0, 2.0])

    assert weighted_quantile(values, np.ones(4), 0.5) == 2.0
    assert weighted_quantile(values, np.ones(4), 0.75) == 3.0
    assert weighted_quantile(values, [0.0, 1.0, 0.0, 0.0], 0.9) == 1.0
    assert weighted_quantile(values, [1.0, 1.0, 1.0, 5.0], 0.5) == 2.0


def test_conditional_cdf_is_a_weighted_step_function():
    cdf = ConditionalCdf(weights=np.array([[1.0, 1.0, 2.0], [0.0, 1.0, 0.0]]), outcomes=np.array([0.0, 1.0, 2.0]))

    np.testing.assert_allclose(cdf(-1.0), [0.0, 0.0])
    np.testing.assert_allclose(cdf(1.0), [0.5, 1.0])
    np.testing.assert_allclose(cdf(2.0), [1.0, 1.0])


def test_estimate_qtt_recovers_the_analytic_median(oracle_design):
    spec, data = oracle_design
    truth = spec.family.counterfactual_quantile(0.5)

    fit = estimate_qtt(data, EstimatorConfig(seed=2, **FAST), 0.5)

    assert truth == pytest.approx(3.6)
    assert fit.q == 0.5
    assert abs(fit.theta_hat - truth) < 3.0 * fit.ase
    assert fit.per_fold.shape == (2,)
    assert fit.theta_hat == pytest.approx(np.mean(fit.per_fold))
    assert not fit.degenerate
    assert fit.density > 0
    assert fit.ase > 0
    assert fit.ci[0] < fit.theta_hat < fit.ci[1]


def test_estimate_qtts_shares_nuisances_and_orders_the_levels(oracle_design):
    _, data = oracle_design
    config = EstimatorConfig(seed=2, **FAST)

    low, high = estimate_qtts(data, config, [0.25, 0.75])
    single = estimate_qtt(data, config, 0.25)

    assert low.theta_hat < high.theta_hat
    assert single.theta_hat == low.theta_hat
    assert np.all(low.moment_before >= 0)
    assert np.all(low.moment_after >= 0)


def test_estimate_qtt_suppresses_the_interval_when_the_density_is_degenerate(oracle_design):
    _, data = oracle_design

    fit = estimate_qtt(data, EstimatorConfig(seed=2, density_floor=1e6, **FAST), 0.5)

    assert fit.degenerate
    assert fit.ci is None
    assert math.isnan(fit.ase)
    assert fit.warnings == ("degenerate-density",)
    np.testing.assert_array_equal(fit.per_fold, fit.per_fold_prelim)


def test_estimate_qtt_checks_levels_and_outcome_kind(oracle_design):
    _, data = oracle_design
    binary = simulate(dgp_spec("sec6-binary", 60, seed=3))

    with pytest.raises(InvalidConfig, match="quantile level"):
        estimate_qtt(data, EstimatorConfig(**FAST), 1.0)
    with pytest.raises(WrongOutcomeKind):
        estimate_qtt(binary, EstimatorConfig(**FAST), 0.5)


@pytest.mark.slow
def test_qtt_recovers_the_median_and_keeps_the_levels_ordered():
    levels = (0.25, 0.5, 0.75)
    medians, ordered = [], []
    for rep in range(50):
        spec = dgp_spec("gaussian-oracle", 2000, seed=100 + rep)
        fits = estimate_qtts(simulate(spec), EstimatorConfig(seed=rep), levels)
        thetas = [fit.theta_hat for fit in fits]
        medians.append(thetas[1])
        ordered.append(thetas[0] <= thetas[1] <= thetas[2])

    truth = dgp_spec("gaussian-oracle", 2000).family.counterfactual_quantile(0.5)
    assert abs(np.mean(medians) - truth) <= 0.1
    assert np.mean(ordered) >= 0.95
