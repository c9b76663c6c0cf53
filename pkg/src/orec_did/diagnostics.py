# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import logging
from dataclasses import dataclass, field

import numpy as np
import statsmodels.api as sm
from scipy import integrate, stats

from .binary import fit_binary_cells
from .errors import DimensionMismatch, InvalidConfig, TooFewPeriods
from .kernel import as_covariates, default_kernel, gram, pinv_apply

logger = logging.getLogger(__name__)

OVERLAP_THRESHOLD = 1e-3
OVERLAP_SLACK = 0.1
GRID_SIZE = 200
DENSITY_FLOOR = 1e-12
# cap on |log odds ratio| when tilting the control period-1 probability
LOG_ODDS_BOUND = 20.0

CONTINUOUS_PAIRS = {
    # inner law, outer law
    "y0_treated_in_y0_control": ("y0_treated", "y0_control"),
    "y1_control_in_y0_control": ("y1_control", "y0_control"),
    "counterfactual_in_y1_control": ("y1_counterfactual", "y1_control"),
}
LAWS = ("y0_control", "y0_treated", "y1_control", "y1_counterfactual")


@dataclass(frozen=True, eq=False)
class OverlapReport:
    """
    Per-unit supports (continuous) or probabilities (binary) of the laws of
    ``Y0 | A=0, X``, ``Y0 | A=1, X``, ``Y1 | A=0, X`` and, under odds-ratio
    equi-confounding, ``Y1(0) | A=1, X``.
    """
    kind: str
    threshold: float
    n: int
    supports: dict = field(default_factory=dict)
    violation_rates: dict = field(default_factory=dict)
    violation_rate: float = 0.0
    summaries: dict = field(default_factory=dict)
    grid_range: tuple = None


def _outcome_bandwidth(y):
    if y.shape[0] > 1 and np.ptp(y) > 0:
        try:
            kde = stats.gaussian_kde(y, bw_method="silverman")
            return float(np.sqrt(kde.covariance[0, 0]))
        except np.linalg.LinAlgError:
            pass
    return 1e-3 * max(float(np.ptp(y)), 1.0)


def conditional_density_grid(y, x_support, x_eval, grid, kernel):
    """
    Nadaraya-Watson in ``X`` times a Gaussian KDE in ``Y``: row ``i`` is the
    estimated density of ``Y | X = x_eval[i]`` on ``grid``.
    """
    y = np.asarray(y, dtype=float)
    weights = gram(x_eval, x_support, kernel).entries
    totals = weights.sum(axis=1, keepdims=True)
    weights = np.where(totals > 0, weights / np.where(totals > 0, totals, 1.0), 1.0 / y.shape[0])
    h = _outcome_bandwidth(y)
    kernel_y = stats.norm.pdf((grid[None, :] - y[:, None]) / h) / h
    return weights @ kernel_y


def support_intervals(density, grid, threshold):
    """``[min, max]`` of the grid points where the density reaches ``threshold``, NaN when empty."""
    above = density >= threshold
    intervals = np.full((density.shape[0], 2), np.nan)
    hit = above.any(axis=1)
    first = np.argmax(above, axis=1)
    last = density.shape[1] - 1 - np.argmax(above[:, ::-1], axis=1)
    intervals[hit, 0] = grid[first[hit]]
    intervals[hit, 1] = grid[last[hit]]
    return intervals


def containment_violations(inner, outer, tolerance):
    """Units whose inner support sticks out of the outer support by more than ``tolerance``."""
    empty_inner = np.isnan(inner[:, 0])
    empty_outer = np.isnan(outer[:, 0])
    with np.errstate(invalid="ignore"):
        outside = (inner[:, 0] < outer[:, 0] - tolerance) | (inner[:, 1] > outer[:, 1] + tolerance)
    return ~empty_inner & (empty_outer | outside)


def _continuous_overlap(data, kernel, threshold, slack, grid_size):
    outcomes = np.concatenate([data.y0, data.y1])
    span = max(float(np.ptp(outcomes)), 1e-12)
    grid = np.linspace(outcomes.min() - slack * span, outcomes.max() + slack * span, grid_size)
    x = data.x
    control, treated = data.control, data.treated
    densities = {
        "y0_control": conditional_density_grid(data.y0[control], x[control], x, grid, kernel),
        "y0_treated": conditional_density_grid(data.y0[treated], x[treated], x, grid, kernel),
        "y1_control": conditional_density_grid(data.y1[control], x[control], x, grid, kernel),
    }
    # the period-0 odds ratio tilts the control period-1 law; y_R cancels after normalizing
    tilt = densities["y0_treated"] / np.maximum(densities["y0_control"], DENSITY_FLOOR)
    unnormalized = tilt * densities["y1_control"]
    mass = integrate.trapezoid(unnormalized, grid, axis=1)[:, None]
    densities["y1_counterfactual"] = np.where(mass > 0, unnormalized / np.where(mass > 0, mass, 1.0), 0.0)

    supports = {law: support_intervals(densities[law], grid, threshold) for law in LAWS}
    tolerance = slack * (grid[-1] - grid[0])
    flags = {name: containment_violations(supports[inner], supports[outer], tolerance)
             for name, (inner, outer) in CONTINUOUS_PAIRS.items()}
    any_flag = np.logical_or.reduce(list(flags.values()))
    return OverlapReport(
        kind="continuous",
        threshold=threshold,
        n=data.n,
        supports=supports,
        violation_rates={name: float(np.mean(flag)) for name, flag in flags.items()},
        violation_rate=float(np.mean(any_flag)),
        grid_range=(float(grid[0]), float(grid[-1])),
    )


def _summary(values):
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return {"min": float(values.min()), "q1": float(q1), "median": float(median),
            "mean": float(values.mean()), "q3": float(q3), "max": float(values.max())}


def _binary_overlap(data, kernel, threshold):
    cells = fit_binary_cells(data, kernel)
    table0 = cells.table0(data.x)
    table1 = cells.table1(data.x)
    probabilities = {
        "y0_control": table0[:, 1] / (table0[:, 0] + table0[:, 1]),
        "y0_treated": table0[:, 3] / (table0[:, 2] + table0[:, 3]),
        "y1_control": table1[:, 1] / (table1[:, 0] + table1[:, 1]),
    }
    odds_ratio = np.exp(np.clip(cells.log_odds_ratio(data.x), -LOG_ODDS_BOUND, LOG_ODDS_BOUND))
    weighted = odds_ratio * probabilities["y1_control"]
    probabilities["y1_counterfactual"] = weighted / (weighted + 1.0 - probabilities["y1_control"])

    flags = {law: (p < threshold) | (p > 1.0 - threshold) for law, p in probabilities.items()}
    any_flag = np.logical_or.reduce(list(flags.values()))
    return OverlapReport(
        kind="binary",
        threshold=threshold,
        n=data.n,
        violation_rates={law: float(np.mean(flag)) for law, flag in flags.items()},
        violation_rate=float(np.mean(any_flag)),
        summaries={law: _summary(p) for law, p in probabilities.items()},
    )


def overlap_diagnostic(data, kernel=None, threshold=OVERLAP_THRESHOLD, slack=OVERLAP_SLACK, grid_size=GRID_SIZE):
    """
    Check the overlap conditions on the identified conditional laws.

    Continuous outcomes: per unit, the support ``{y : f(y | a, X_i) >= threshold}``
    of each law on a common grid, and the share of units whose support is
    not contained in the reference law within ``slack`` times the grid
    range. Binary outcomes: summary statistics of the four conditional
    probabilities of ``Y = 1`` and the share outside ``[threshold, 1 - threshold]``.

    :param kernel: covariate kernel, median heuristic on ``X`` when ``None``.
    """
    if threshold < 0 or slack < 0:
        raise InvalidConfig(f"threshold {threshold} and slack {slack} must be non-negative")
    if grid_size < 2:
        raise InvalidConfig(f"grid_size {grid_size} must be at least 2")
    kernel = kernel or default_kernel(data.x)
    if data.is_binary:
        report = _binary_overlap(data, kernel, threshold)
    else:
        report = _continuous_overlap(data, kernel, threshold, slack, grid_size)
    logger.info(f"overlap diagnostic ({report.kind}): violation rate {report.violation_rate:.4g}")
    return report


PLACEBO_FAMILIES = ("gaussian", "binary", "poisson")


@dataclass(frozen=True, eq=False)
class PlaceboResult:
    statistic: float
    p_value: float
    df: int
    coefficients: np.ndarray
    std_errors: np.ndarray
    family: str


def _period_fit(y, design, family):
    """
    Odds-ratio parameter of one period and its influence values.

    Gaussian: ``gamma_A / sigma^2`` from least squares; binary and Poisson:
    ``gamma_A`` from the canonical-link GLM.
    """
    n = y.shape[0]
    if family == "gaussian":
        fit = sm.OLS(y, design).fit()
        resid = np.asarray(fit.resid)
        sigma2 = float(np.mean(resid**2))
        bread = np.linalg.inv(design.T @ design / n)
        influence = (design * resid[:, None]) @ bread
        gamma = float(fit.params[-1])
        theta = gamma / sigma2
        return theta, influence[:, -1] / sigma2 - gamma / sigma2**2 * (resid**2 - sigma2)
    glm_family = sm.families.Binomial() if family == "binary" else sm.families.Poisson()
    fit = sm.GLM(y, design, family=glm_family).fit()
    mu = np.asarray(fit.mu)
    variance = mu * (1.0 - mu) if family == "binary" else mu
    bread = np.linalg.inv((design * variance[:, None]).T @ design / n)
    influence = (design * (y - mu)[:, None]) @ bread
    return float(fit.params[-1]), influence[:, -1]


def placebo_orec_test(pre_period_outcomes, a, x=None, family="gaussian"):
    """
    Wald test that the odds-ratio parameter is constant over the
    pre-treatment periods.

    Each period is fitted with ``Y_t ~ 1 + X + A`` (least squares for
    ``gaussian``, IRLS for ``binary`` and ``poisson``). The joint covariance
    of the per-period parameters comes from their stacked influence values,
    and the statistic of the successive differences is compared with a
    chi-square with ``T`` degrees of freedom, ``T + 1`` being the number of
    periods.

    :return: :class:`PlaceboResult`.
    """
    if family not in PLACEBO_FAMILIES:
        raise InvalidConfig(f"placebo family '{family}' not one of {', '.join(PLACEBO_FAMILIES)}")
    outcomes = [np.asarray(y, dtype=float).ravel() for y in pre_period_outcomes]
    if len(outcomes) < 2:
        raise TooFewPeriods(f"the placebo test needs at least 2 pre-treatment periods, got {len(outcomes)}")
    a = np.asarray(a, dtype=float).ravel()
    n = a.shape[0]
    x = np.empty((n, 0)) if x is None else as_covariates(x)
    if x.shape[0] != n or any(y.shape[0] != n for y in outcomes):
        raise DimensionMismatch("pre-period outcomes, treatment and covariates must have the same length")
    design = sm.add_constant(np.column_stack([x, a]), has_constant="add")

    thetas, influence = [], []
    for y in outcomes:
        theta, values = _period_fit(y, design, family)
        thetas.append(theta)
        influence.append(values)
    thetas = np.array(thetas)
    influence = np.column_stack(influence)
    covariance = influence.T @ influence / n**2

    periods = thetas.shape[0]
    df = periods - 1
    contrast = np.eye(periods)[:-1] - np.eye(periods, k=1)[:-1]
    difference = contrast @ thetas
    statistic = float(difference @ pinv_apply(contrast @ covariance @ contrast.T, difference))
    p_value = float(stats.chi2.sf(statistic, df))
    logger.info(f"placebo test ({family}, {periods} periods): statistic {statistic:.4g}, p-value {p_value:.4g}")
    return PlaceboResult(
        statistic=statistic,
        p_value=p_value,
        df=df,
        coefficients=thetas,
        std_errors=np.sqrt(np.diag(covariance)),
        family=family,
    )
