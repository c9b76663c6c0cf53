import math

import numpy as np
import pytest

from orec_did.errors import NoClosedForm, TooFewUnits, UnknownDgp
from orec_did.simulation import (
    DGP_PRESETS,
    BernoulliFamily,
    DgpSpec,
    GaussianFamily,
    PoissonFamily,
    dgp_spec,
    no_confounding,
    odds_ratio_catalog,
    oracle_nuisances,
    simulate,
    simulate_placebo,
    true_odds_ratio,
)


def test_simulate_is_reproducible_for_a_seed():
    first = simulate(dgp_spec("sec6-continuous", 50, seed=7))
    again = simulate(dgp_spec("sec6-continuous", 50, seed=7))
    other = simulate(dgp_spec("sec6-continuous", 50, seed=8))

    assert first == again
    assert first != other
    assert first.d == 3
    assert not first.is_binary


def test_presets_carry_their_true_effects():
    assert dgp_spec("sec6-continuous", 10).true_att == 0.5
    assert dgp_spec("sec6-binary", 10).true_att == 0.0
    assert dgp_spec("poisson", 10).true_att == 1.0
    assert set(DGP_PRESETS) >= {"sec6-continuous", "sec6-binary", "gaussian-pt", "gaussian-oracle",
                                "no-confounding", "poisson"}
    with pytest.raises(UnknownDgp, match="available"):
        dgp_spec("sec7", 10)


def test_simulated_binary_and_count_panels_have_the_right_support():
    binary = simulate(dgp_spec("sec6-binary", 80, seed=1))
    counts = simulate(dgp_spec("poisson", 80, seed=1))

    assert binary.is_binary
    assert set(np.unique(binary.y1)) <= {0.0, 1.0}
    untreated = counts.y1[counts.control]
    assert np.all(untreated >= 0) and np.all(untreated == np.round(untreated))


def test_simulate_draws_extra_pre_periods_and_needs_two_units():
    data, extra = simulate(dgp_spec("gaussian-pt", 30, seed=2), pre_periods=2)

    assert len(extra) == 2
    assert all(column.shape == (30,) for column in extra)
    assert data == simulate(dgp_spec("gaussian-pt", 30, seed=2))
    with pytest.raises(TooFewUnits):
        simulate(DgpSpec(GaussianFamily(), n=1))


def test_true_odds_ratio_is_one_at_the_reference_outcome():
    spec = dgp_spec("sec6-continuous", 10)
    x = np.array([0.5, -1.0, 2.0])

    assert true_odds_ratio(spec, 0.0, x) == 1.0
    assert true_odds_ratio(spec, 2.0, x) == pytest.approx(math.exp(2.0 * 0.1 * 1.5))
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    np.testing.assert_allclose(true_odds_ratio(spec, 1.0, points), np.exp([0.1, 0.2]))
    assert true_odds_ratio(BernoulliFamily(), 1.0, x) == pytest.approx(math.exp(2.0 - 0.05))
    assert true_odds_ratio(PoissonFamily(), 3.0, x) == pytest.approx(math.exp(0.9))


def test_gaussian_design_satisfies_equi_confounding_but_not_parallel_trends():
    family = GaussianFamily()

    assert family.select0 / family.sd0**2 == pytest.approx(family.select1 / family.sd1**2)
    assert family.select0 != family.select1
    pt = DGP_PRESETS["gaussian-pt"]
    assert pt.select0 == pt.select1
    assert no_confounding().select0 == no_confounding().select1 == 0.0


def test_counterfactual_quantile_is_analytic_only_without_covariates():
    assert DGP_PRESETS["gaussian-oracle"].counterfactual_quantile(0.5) == pytest.approx(3.6)
    with pytest.raises(NoClosedForm):
        DGP_PRESETS["sec6-continuous"].counterfactual_quantile(0.5)
    with pytest.raises(NoClosedForm):
        DGP_PRESETS["sec6-binary"].counterfactual_quantile(0.5)


@pytest.mark.parametrize("name", ["sec6-continuous", "sec6-binary", "poisson"])
def test_oracle_nuisances_balance_the_treated_share(name):
    spec = dgp_spec(name, 20000, seed=5)
    data = simulate(spec)
    oracle = oracle_nuisances(spec)
    effect = 0.0 if spec.family.binary else spec.family.effect
    y1_untreated = data.y1 - effect * data.a

    weights = (1 - data.a) * oracle.beta1(data.x) * oracle.alpha1(data.y1, data.x)
    observed_mean = np.mean(y1_untreated[data.treated])
    regression_mean = np.mean(oracle.mu(data.x[data.treated]))

    assert np.mean(weights) == pytest.approx(data.p_treated, rel=0.05)
    assert regression_mean == pytest.approx(observed_mean, rel=0.05, abs=0.02)


def test_odds_ratio_catalog_formulas():
    assert odds_ratio_catalog("gaussian", 2.0, 1.0, 1.5, variance=2.0) == pytest.approx(math.exp(0.5))
    assert odds_ratio_catalog("poisson", 2.0, 2.0, 3.0) == pytest.approx(2.25)
    assert odds_ratio_catalog("bernoulli", 1.0, 0.5, 0.75) == pytest.approx(3.0)
    assert odds_ratio_catalog("geometric", 2.0, 0.5, 0.75) == pytest.approx(0.25)
    assert odds_ratio_catalog("gamma", 1.0, 1.0, 2.0) == pytest.approx(math.exp(0.5))
    assert odds_ratio_catalog("poisson", 0.0, 2.0, 3.0) == 1.0
    with pytest.raises(NoClosedForm):
        odds_ratio_catalog("cauchy", 1.0, 0.0, 1.0)


def test_simulate_placebo_shapes_and_kinds():
    panel = simulate_placebo("gaussian", 40, periods=3, seed=1)
    again = simulate_placebo("gaussian", 40, periods=3, seed=1)

    assert panel.kind == "gaussian"
    assert len(panel.outcomes) == 3
    assert panel.x.shape == (40, 2)
    np.testing.assert_array_equal(panel.outcomes[2], again.outcomes[2])
    assert set(np.unique(simulate_placebo("binary", 40, periods=2).outcomes[0])) <= {0.0, 1.0}
    with pytest.raises(UnknownDgp):
        simulate_placebo("gamma", 40, periods=2)
