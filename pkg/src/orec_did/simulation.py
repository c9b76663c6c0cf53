# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

"""
Simulation designs with analytic ground truth.

Every family draws ``X ~ N(0, I_d)`` and ``A ~ Bernoulli(expit(sum(X) / 4))``
and then the untreated potential outcomes at both periods given ``(A, X)``;
the observed post-period outcome adds the treatment effect on treated units.
The generalized odds ratio is the same at both periods, with reference
outcome ``y = 0``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.special import expit, logit

from .config import STREAM_SIMULATION, make_rng
from .errors import NoClosedForm, TooFewUnits, UnknownDgp
from .kernel import as_covariates
from .panel import validate_dataset


def _col(x, j):
    """Covariate ``j`` (0-based), zeros when the design has fewer columns."""
    return x[:, j] if x.shape[1] > j else np.zeros(x.shape[0])


def propensity(x):
    x = as_covariates(x)
    return expit(x.sum(axis=1) / 4.0)


@dataclass(frozen=True)
class GaussianFamily:
    """
    ``Y_t(0) | A, X ~ N(intercept_t + select_t (1 + X1) A + slope_t (X1 + X2), sd_t^2)``.

    The odds ratio is ``exp{y select_t (1 + x1) / sd_t^2}``, so the design
    satisfies odds-ratio equi-confounding iff ``select0 / sd0^2 == select1 / sd1^2``
    and parallel trends iff ``select0 == select1``. The defaults are the
    continuous design of the reference simulation study.
    """
    intercept0: float = 3.0
    intercept1: float = 3.5
    select0: float = 0.4
    select1: float = 0.1
    slope0: float = 0.2
    slope1: float = -0.2
    sd0: float = 2.0
    sd1: float = 1.0
    effect: float = 0.5
    d: int = 3
    binary = False

    def mean(self, t, a, x):
        intercept, select, slope = ((self.intercept0, self.select0, self.slope0) if t == 0
                                    else (self.intercept1, self.select1, self.slope1))
        return intercept + select * (1.0 + _col(x, 0)) * a + slope * (_col(x, 0) + _col(x, 1))

    def draw_period(self, rng, t, a, x):
        sd = self.sd0 if t == 0 else self.sd1
        return self.mean(t, a, x) + sd * rng.standard_normal(a.shape[0])

    @property
    def true_att(self):
        return self.effect

    def odds_slope(self, x):
        return self.select1 * (1.0 + _col(x, 0)) / self.sd1**2

    def odds_ratio(self, y, x):
        return np.exp(np.asarray(y, dtype=float) * self.odds_slope(x))

    def counterfactual_mean(self, x):
        return self.mean(1, 1.0, x)

    def baseline_odds(self, x):
        # odds of A at Y1(0) = 0: propensity odds times f(0 | 1, x) / f(0 | 0, x)
        e = propensity(x)
        m = self.mean(1, 0.0, x)
        c = self.odds_slope(x)
        return e / (1.0 - e) * np.exp(-c * m - 0.5 * c**2 * self.sd1**2)

    def counterfactual_quantile(self, q):
        if self.d > 0:
            raise NoClosedForm("the counterfactual quantile is a covariate mixture without closed form")
        return float(stats.norm.ppf(q, loc=self.intercept1 + self.select1, scale=self.sd1))


@dataclass(frozen=True)
class BernoulliFamily:
    """
    ``Y_t(0) | A, X ~ Bernoulli(expit{intercept_t + (association + association_x1 X1) A
    + slope_t_x1 X1 + slope_t_x2 X2})``.

    The log odds ratio ``y (association + association_x1 x1)`` is shared by
    both periods and the two potential outcomes at period 1 have the same
    law, so the ATT is zero. Defaults follow the binary design of the
    reference simulation study.
    """
    intercept0: float = -1.0
    intercept1: float = 0.25
    association: float = 2.0
    association_x1: float = -0.1
    slope0_x1: float = 0.1
    slope0_x2: float = 0.0
    slope1_x1: float = 0.1
    slope1_x2: float = 0.1
    d: int = 3
    binary = True

    def linear(self, t, a, x):
        if t == 0:
            intercept, s1, s2 = self.intercept0, self.slope0_x1, self.slope0_x2
        else:
            intercept, s1, s2 = self.intercept1, self.slope1_x1, self.slope1_x2
        return intercept + self.odds_slope(x) * a + s1 * _col(x, 0) + s2 * _col(x, 1)

    def draw_period(self, rng, t, a, x):
        return (rng.random(a.shape[0]) < expit(self.linear(t, a, x))).astype(float)

    @property
    def true_att(self):
        return 0.0

    def odds_slope(self, x):
        return self.association + self.association_x1 * _col(x, 0)

    def odds_ratio(self, y, x):
        return np.exp(np.asarray(y, dtype=float) * self.odds_slope(x))

    def counterfactual_mean(self, x):
        return expit(self.linear(1, 1.0, x))

    def baseline_odds(self, x):
        e = propensity(x)
        return e / (1.0 - e) * (1.0 - expit(self.linear(1, 1.0, x))) / (1.0 - expit(self.linear(1, 0.0, x)))

    def counterfactual_quantile(self, q):
        raise NoClosedForm("binary outcomes have no informative counterfactual quantile")


@dataclass(frozen=True)
class PoissonFamily:
    """
    ``Y_t(0) | A, X ~ Poisson(exp{intercept_t + log_rate_ratio A + slope_t X1})``.

    The odds ratio is ``(rate ratio)^y`` at both periods; treated units
    receive ``effect`` on top of ``Y1(0)``.
    """
    intercept0: float = 1.0
    intercept1: float = 1.2
    log_rate_ratio: float = 0.3
    slope0: float = 0.2
    slope1: float = 0.2
    effect: float = 1.0
    d: int = 3
    binary = False

    def rate(self, t, a, x):
        intercept, slope = (self.intercept0, self.slope0) if t == 0 else (self.intercept1, self.slope1)
        return np.exp(intercept + self.log_rate_ratio * a + slope * _col(x, 0))

    def draw_period(self, rng, t, a, x):
        return rng.poisson(self.rate(t, a, x)).astype(float)

    @property
    def true_att(self):
        return self.effect

    def odds_slope(self, x):
        return np.full(as_covariates(x).shape[0], self.log_rate_ratio)

    def odds_ratio(self, y, x):
        return np.exp(np.asarray(y, dtype=float) * self.odds_slope(x))

    def counterfactual_mean(self, x):
        return self.rate(1, 1.0, x)

    def baseline_odds(self, x):
        e = propensity(x)
        return e / (1.0 - e) * np.exp(self.rate(1, 0.0, x) - self.rate(1, 1.0, x))

    def counterfactual_quantile(self, q):
        raise NoClosedForm("the counterfactual quantile is a covariate mixture without closed form")


def no_confounding(**params):
    """Gaussian design where ``A`` is independent of the potential outcomes given ``X``."""
    params.setdefault("select0", 0.0)
    params.setdefault("select1", 0.0)
    return GaussianFamily(**params)


DGP_PRESETS = {
    "sec6-continuous": GaussianFamily(),
    "sec6-binary": BernoulliFamily(),
    "gaussian-pt": GaussianFamily(select0=0.4, select1=0.4, sd0=1.0, sd1=1.0),
    "gaussian-oracle": GaussianFamily(d=0),
    "no-confounding": no_confounding(),
    "poisson": PoissonFamily(),
}


@dataclass(frozen=True)
class DgpSpec:
    family: object
    n: int
    seed: int = 0
    name: str = field(default="custom", compare=False)

    @property
    def true_att(self):
        return self.family.true_att


def dgp_spec(name, n, seed=0):
    """Preset design by name, see :data:`DGP_PRESETS`."""
    try:
        family = DGP_PRESETS[name]
    except KeyError:
        raise UnknownDgp(f"unknown design '{name}', available: {', '.join(DGP_PRESETS)}") from None
    return DgpSpec(family=family, n=int(n), seed=int(seed), name=name)


def draw_design(family, rng, n):
    """Covariates, treatment and the untreated potential outcomes at both periods."""
    x = rng.standard_normal((n, family.d))
    a = (rng.random(n) < propensity(x)).astype(float)
    y0 = family.draw_period(rng, 0, a, x)
    y1_untreated = family.draw_period(rng, 1, a, x)
    return x, a, y0, y1_untreated


def simulate(spec, pre_periods=0):
    """
    Draw an observed panel from ``spec``.

    :param pre_periods: number of extra pre-treatment outcome columns drawn
        from the period-0 law, returned as a second element when positive.
    :return: :class:`PanelDataset`, or ``(dataset, [y_pre1, ...])``.
    """
    if spec.n < 2:
        raise TooFewUnits(f"a simulated panel needs at least 2 units, got {spec.n}")
    rng = make_rng(spec.seed, STREAM_SIMULATION)
    family = spec.family
    x, a, y0, y1_untreated = draw_design(family, rng, spec.n)
    y1 = y1_untreated if family.binary else y1_untreated + family.effect * a
    data = validate_dataset(y0, y1, a, x, outcome_kind="binary" if family.binary else "continuous")
    if pre_periods <= 0:
        return data
    extra = [family.draw_period(rng, 0, a, x) for _ in range(pre_periods)]
    return data, extra


def true_odds_ratio(spec, y, x):
    """
    Analytic ``alpha1*(y, x)`` of the design, equal to 1 at ``y = 0``.

    ``x`` is a single point (vector) or a matrix with one point per row.
    """
    family = getattr(spec, "family", spec)
    if not hasattr(family, "odds_ratio"):
        raise NoClosedForm(f"{type(family).__name__} has no closed-form odds ratio")
    x = np.asarray(x, dtype=float)
    if x.ndim <= 1:
        value = family.odds_ratio(y, x.reshape(1, -1))
        return float(value[0]) if np.ndim(y) == 0 else value
    return family.odds_ratio(y, x)


@dataclass(frozen=True, eq=False)
class OracleNuisances:
    """True ``alpha1``, ``beta1`` and ``mu`` of a design, with reference outcome 0."""
    family: object
    y_ref: float = 0.0

    def alpha1(self, y, x):
        return self.family.odds_ratio(y, as_covariates(x))

    def beta1(self, x):
        return self.family.baseline_odds(as_covariates(x))

    def mu(self, x):
        return self.family.counterfactual_mean(as_covariates(x))

    def propensity(self, x):
        return propensity(x)


def oracle_nuisances(spec):
    return OracleNuisances(family=getattr(spec, "family", spec))


def _catalog_gaussian(y, control, treated, variance):
    return math.exp(y * (treated - control) / variance)


def _catalog_binomial(y, control, treated, variance):
    return math.exp(y * (logit(treated) - logit(control)))


def _catalog_poisson(y, control, treated, variance):
    return (treated / control) ** y


def _catalog_negative_binomial(y, control, treated, variance):
    # success probabilities, the mass is proportional to (1 - p)^y
    return ((1.0 - treated) / (1.0 - control)) ** y


def _catalog_gamma(y, control, treated, variance):
    # scale parameters, the density is proportional to exp(-y / scale)
    return math.exp(y * (1.0 / control - 1.0 / treated))


ODDS_RATIO_CATALOG = {
    "gaussian": _catalog_gaussian,
    "bernoulli": _catalog_binomial,
    "binomial": _catalog_binomial,
    "poisson": _catalog_poisson,
    "geometric": _catalog_negative_binomial,
    "negative-binomial": _catalog_negative_binomial,
    "gamma": _catalog_gamma,
    "exponential": _catalog_gamma,
}


def odds_ratio_catalog(law, y, control, treated, variance=1.0):
    """
    Odds ratio at ``y`` (reference 0) of an exponential-family law whose
    parameter is ``control`` in the untreated arm and ``treated`` in the
    treated arm.

    Parameters are the mean (gaussian, with ``variance``), the success
    probability (bernoulli, binomial, geometric, negative-binomial), the rate
    (poisson) or the scale (gamma, exponential).
    """
    try:
        formula = ODDS_RATIO_CATALOG[law]
    except KeyError:
        raise NoClosedForm(f"no catalog odds ratio for '{law}'") from None
    return float(formula(float(y), float(control), float(treated), float(variance)))


PLACEBO_KINDS = ("gaussian", "binary", "poisson")


@dataclass(frozen=True, eq=False)
class PlaceboPanel:
    outcomes: list
    a: np.ndarray
    x: np.ndarray
    kind: str


def simulate_placebo(kind, n, periods, seed=0, drift=0.0, d=2):
    """
    Pre-treatment outcomes over ``periods`` periods from the parametric
    models of the placebo test.

    The treatment coefficient of period ``t`` is ``base + drift * t``; with
    ``drift = 0`` the odds ratio is the same in every period. The Gaussian
    kind lets the noise level change over time and scales the coefficient
    with the variance.
    """
    if kind not in PLACEBO_KINDS:
        raise UnknownDgp(f"unknown placebo design '{kind}', available: {', '.join(PLACEBO_KINDS)}")
    rng = make_rng(seed, STREAM_SIMULATION, 1)
    x = rng.standard_normal((n, d))
    a = (rng.random(n) < propensity(x)).astype(float)
    signal = 0.2 * (_col(x, 0) + _col(x, 1))
    outcomes = []
    for t in range(periods):
        if kind == "gaussian":
            sd = 1.0 + 0.25 * t
            coefficient = 0.3 * sd**2 + drift * t
            outcomes.append(1.0 + signal + coefficient * a + sd * rng.standard_normal(n))
        elif kind == "binary":
            coefficient = 0.8 + drift * t
            outcomes.append((rng.random(n) < expit(-0.5 + signal + coefficient * a)).astype(float))
        else:
            coefficient = 0.3 + drift * t
            outcomes.append(rng.poisson(np.exp(0.5 + signal + coefficient * a)).astype(float))
    return PlaceboPanel(outcomes=outcomes, a=a, x=x, kind=kind)
