import numpy as np
import pytest

from orec_did.identification import (
    PluginRatio,
    PropensityOdds,
    aipw_tau0,
    fit_beta1_plugin,
    fit_mu_plugin,
    ipw_tau0,
    or_tau0,
)
from orec_did.simulation import dgp_spec, oracle_nuisances, simulate


@pytest.fixture(scope="module")
def large_gaussian_panel():
    spec = dgp_spec("sec6-continuous", 20000, seed=11)
    return spec, simulate(spec)


def _constant(value):
    def evaluate(*arguments):
        return np.full(np.asarray(arguments[-1]).shape[0], value)
    return evaluate


def test_three_representations_agree_with_oracle_nuisances(large_gaussian_panel):
    spec, data = large_gaussian_panel
    oracle = oracle_nuisances(spec)

    regression = or_tau0(data, oracle.mu)
    weighting = ipw_tau0(data, oracle.alpha1, oracle.beta1)
    augmented = aipw_tau0(data, oracle.alpha1, oracle.beta1, oracle.mu)

    assert weighting == pytest.approx(regression, abs=0.15)
    assert augmented == pytest.approx(regression, abs=0.1)
    # counterfactual mean from the observed treated outcomes minus the effect
    observed = float(np.mean(data.y1[data.treated])) - spec.true_att
    assert regression == pytest.approx(observed, abs=0.05)


def test_augmented_form_survives_one_wrong_nuisance(large_gaussian_panel):
    spec, data = large_gaussian_panel
    oracle = oracle_nuisances(spec)
    truth = or_tau0(data, oracle.mu)

    def shifted_mu(x):
        return oracle.mu(x) + 1.0

    wrong_mu = aipw_tau0(data, oracle.alpha1, oracle.beta1, shifted_mu)
    wrong_beta1 = aipw_tau0(data, oracle.alpha1, _constant(1.0), oracle.mu)

    assert wrong_mu == pytest.approx(truth, abs=0.05)
    assert or_tau0(data, shifted_mu) == pytest.approx(truth + 1.0, abs=1e-9)
    assert wrong_beta1 == pytest.approx(truth, abs=0.1)
    assert or_tau0(data, _constant(0.0)) != pytest.approx(truth, abs=0.1)


def test_plugin_mu_tracks_the_oracle():
    spec = dgp_spec("sec6-continuous", 800, seed=12)
    data = simulate(spec)
    oracle = oracle_nuisances(spec)

    mu = fit_mu_plugin(data, oracle.alpha1)
    beta1 = fit_beta1_plugin(data, oracle.alpha1)

    assert np.mean(np.abs(mu(data.x) - oracle.mu(data.x))) < 0.3
    values = beta1(data.x)
    assert np.all(values >= 1e-3) and np.all(values <= 1e3)


def test_plugin_ratio_floors_the_denominator_and_clips():
    ratio = PluginRatio(_constant(2.0), _constant(0.0), clamp=(0.1, 10.0), floor=0.5)

    np.testing.assert_allclose(ratio(np.zeros((3, 1))), [4.0, 4.0, 4.0])
    assert PluginRatio(_constant(2.0), _constant(1e-6), clamp=(0.1, 10.0))(np.zeros((1, 1)))[0] == 10.0


def test_propensity_odds_are_bounded():
    odds = PropensityOdds(lambda x: np.array([-0.2, 0.5, 1.3]))

    values = odds(np.zeros((3, 1)))

    assert values[1] == pytest.approx(1.0)
    assert 0.0 < values[0] < values[1] < values[2] < np.inf
