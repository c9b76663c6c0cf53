import numpy as np
import pytest

from orec_did.config import EstimatorConfig
from orec_did.density_ratio import RatioHyperParams, derive_alpha1_beta0, select_reference_outcome
from orec_did.minimax import default_hyperparams, zeta_terms
from orec_did.nuisance import fit_nuisances, fit_tuned_ratio, select_hyperparams
from orec_did.simulation import dgp_spec, simulate

FAST = dict(k_folds=2, repetitions_s=1, bootstrap_b=20, kl_max_iter=300)


def test_fit_nuisances_records_the_selected_hyperparameters():
    data = simulate(dgp_spec("sec6-continuous", 200, seed=3))
    config = EstimatorConfig(lambda_grid=(1e-2, 1e-1), kappa_grid=(1.0, 4.0), **FAST)

    nuisances = fit_nuisances(data, config, seed=3)

    assert set(nuisances.hyperparams) == {"r0", "r1", "beta1", "mu"}
    assert isinstance(nuisances.hyperparams["r0"], RatioHyperParams)
    assert nuisances.hyperparams["r0"].lambda_ is None
    assert nuisances.r0.scaler is not None
    assert nuisances.hyperparams["mu"].lambda_beta in (1e-2, 1e-1)
    assert np.all(np.isfinite(nuisances.augmentation(data.y0, data.a, data.x)))


def test_tuned_lsif_ratio_searches_the_penalties():
    data = simulate(dgp_spec("sec6-continuous", 200, seed=4))
    config = EstimatorConfig(ratio_method="lsif", ratio_lambda_grid=(1e-2, 1e-1), **FAST)
    points0 = data.points0()

    fit, hp = fit_tuned_ratio(points0[data.treated], points0[data.control], config, seed=4)

    assert fit.method == "lsif"
    assert hp.lambda_ in (1e-2, 1e-1)
    assert hp.kernel == fit.kernel


def test_fit_nuisances_is_reproducible_for_a_seed():
    data = simulate(dgp_spec("sec6-continuous", 160, seed=5))
    config = EstimatorConfig(**FAST)

    first = fit_nuisances(data, config, seed=9)
    second = fit_nuisances(data, config, seed=9)

    assert first.hyperparams["r0"] == second.hyperparams["r0"]
    np.testing.assert_array_equal(first.beta1(data.x), second.beta1(data.x))


@pytest.mark.slow
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_fitted_odds_ratio_keeps_the_slope_of_the_design(seed):
    spec = dgp_spec("sec6-continuous", 2000, seed=seed)
    data = simulate(spec)
    config = EstimatorConfig()
    points0 = data.points0()

    r0, _ = fit_tuned_ratio(points0[data.treated], points0[data.control], config, seed=seed)
    y_ref = select_reference_outcome(data.y0[data.control], data.x[data.control])
    alpha1, _ = derive_alpha1_beta0(r0, y_ref, data.p_treated, config.ratio_clamp)

    y = np.linspace(1.0, 6.0, 11)
    x = np.zeros((y.shape[0], data.d))
    slope = np.polyfit(y, np.log(alpha1(y, x)), 1)[0]

    # log odds ratio of the design at x = 0 is 0.1 y
    assert spec.family.odds_slope(x)[0] == pytest.approx(0.1)
    assert 0.06 <= slope <= 0.14


def test_select_hyperparams_searches_the_bandwidth_at_the_default_penalty():
    data = simulate(dgp_spec("sec6-continuous", 120, seed=6))
    zeta = zeta_terms(data, lambda y, x: np.ones(x.shape[0]), lambda y, a, x: np.ones(x.shape[0]))
    base = default_hyperparams(data.x)

    searched = select_hyperparams(data, EstimatorConfig(**FAST), 6, "mu", zeta=zeta)
    fixed = select_hyperparams(data, EstimatorConfig(bandwidth=2.0, **FAST), 6, "mu", zeta=zeta)

    assert searched.lambda_beta == searched.lambda_xi == 1.0 / 120
    assert searched.kappa_xi == base.kappa_xi
    assert any(searched.kappa_beta == pytest.approx(scale * base.kappa_beta) for scale in EstimatorConfig().kappa_grid)
    assert fixed == default_hyperparams(data.x, 2.0)
