# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.linear_model import LogisticRegression, LogisticRegressionCV
from sklearn.model_selection import StratifiedKFold

from .config import STREAM_CV, derive_seed, make_rng
from .errors import WrongOutcomeKind
from .identification import PluginRatio
from .kernel import as_covariates, default_kernel, gram
from .minimax import PROBABILITY_CLAMP, fit_minimax, regularize_beta1
from .nuisance import NuisanceSet, clamp_warnings, select_hyperparams

logger = logging.getLogger(__name__)

CELL_CLIP = (1e-3, 1.0 - 1e-3)
# inverse penalties searched by the cell classifier, and the one used on sparse cells
CELL_CS = (0.1, 1.0, 10.0, 100.0, 1000.0)
CELL_C = 100.0
CELL_CV_FOLDS = 3
MAX_CELL_CENTERS = 200
CELL_MAX_ITER = 2000
CELL_TOL = 1e-8
LOG_FLOOR = float(np.log(np.finfo(float).tiny))


def cell_centers(x, max_centers=MAX_CELL_CENTERS, seed=0):
    """Distinct covariate rows, a seeded subset of ``max_centers`` of them when there are more."""
    x = as_covariates(x)
    if x.shape[1] == 0:
        return np.zeros((1, 0))
    centers = np.unique(x, axis=0)
    if centers.shape[0] > max_centers:
        keep = make_rng(seed, STREAM_CV, 1).choice(centers.shape[0], max_centers, replace=False)
        centers = centers[np.sort(keep)]
    return centers


@dataclass(frozen=True, eq=False)
class CellClassifier:
    """
    Multinomial logistic model of a cell label on Gaussian-kernel features
    ``K(x, centers)``. Cells absent from the training sample get a vanishing
    probability.
    """
    model: object
    centers: np.ndarray
    kernel: object
    n_cells: int

    def features(self, x):
        return gram(as_covariates(x), self.centers, self.kernel).entries

    def log_proba(self, x):
        features = self.features(x)
        log_proba = np.full((features.shape[0], self.n_cells), LOG_FLOOR)
        log_proba[:, self.model.classes_] = np.maximum(self.model.predict_log_proba(features), LOG_FLOOR)
        return log_proba

    @property
    def inverse_penalty(self):
        chosen = getattr(self.model, "C_", None)
        return float(chosen[0]) if chosen is not None else float(self.model.C)


def fit_cell_classifier(x, labels, n_cells, kernel, seed=0):
    """
    Kernel logistic regression of ``labels`` in ``range(n_cells)`` on ``x``.

    The inverse penalty is chosen by stratified held-out log loss over
    :data:`CELL_CS` when every observed cell holds at least
    :data:`CELL_CV_FOLDS` units; sparser samples use :data:`CELL_C`.
    """
    x = as_covariates(x)
    labels = np.asarray(labels, dtype=np.int64)
    centers = cell_centers(x, seed=seed)
    features = gram(x, centers, kernel).entries
    counts = np.bincount(labels, minlength=n_cells)
    if counts[counts > 0].min() >= CELL_CV_FOLDS:
        splitter = StratifiedKFold(CELL_CV_FOLDS, shuffle=True, random_state=derive_seed(seed, STREAM_CV) % 2**32)
        model = LogisticRegressionCV(Cs=list(CELL_CS), cv=splitter, scoring="neg_log_loss",
                                     max_iter=CELL_MAX_ITER, tol=CELL_TOL)
    else:
        logger.debug(f"cell counts {counts.tolist()} too sparse to cross-validate, C={CELL_C}")
        model = LogisticRegression(C=CELL_C, max_iter=CELL_MAX_ITER, tol=CELL_TOL)
    model.fit(features, labels)
    return CellClassifier(model=model, centers=centers, kernel=kernel, n_cells=n_cells)


@dataclass(frozen=True, eq=False)
class BinaryCellFits:
    """
    Joint cell probabilities of a binary panel given ``X``.

    ``p0(y, a, x)`` is ``Pr(Y0=y, A=a | x)`` and ``p1(y, x)`` is
    ``Pr(Y1=y, A=0 | x)``. The period-one model has a third cell for ``A=1``
    so both tables are distributions over their cells.
    """
    time0: CellClassifier
    time1: CellClassifier

    def log_table0(self, x):
        """Log probabilities of the cells ``(0,0), (1,0), (0,1), (1,1)`` of ``(Y0, A)``."""
        return self.time0.log_proba(x)

    def table0(self, x, clip=True):
        table = np.exp(self.log_table0(x))
        return np.clip(table, *CELL_CLIP) if clip else table

    def table1(self, x, clip=True):
        """Cells ``Y1=0, Y1=1`` among controls and ``A=1``."""
        table = np.exp(self.time1.log_proba(x))
        return np.clip(table, *CELL_CLIP) if clip else table

    def log_odds_ratio(self, x):
        """``log[p0(1,1) p0(0,0) / (p0(1,0) p0(0,1))]``, unbounded."""
        logs = self.log_table0(x)
        return logs[:, 3] + logs[:, 0] - logs[:, 1] - logs[:, 2]

    def log_baseline_odds(self, x):
        logs = self.log_table0(x)
        return logs[:, 2] - logs[:, 0]

    def p0(self, y, a, x):
        table = self.table0(x)
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (table.shape[0],))
        a = np.broadcast_to(np.asarray(a, dtype=np.int64), (table.shape[0],))
        return table[np.arange(table.shape[0]), y + 2 * a]

    def p1(self, y, x):
        table = self.table1(x)
        y = np.broadcast_to(np.asarray(y, dtype=np.int64), (table.shape[0],))
        return table[np.arange(table.shape[0]), y]

    def treated_share(self, x):
        table = self.table0(x, clip=False)
        return np.clip(table[:, 2] + table[:, 3], *CELL_CLIP)

    def augmentation(self, y0, a, x, mu):
        """``(2 y0 - 1) Pr(A=1 | x) mu (1 - mu) / p0(y0, a, x)``; the ``(2a - 1)`` sign is left to the caller."""
        y0 = np.asarray(y0, dtype=float)
        return (2.0 * y0 - 1.0) * self.treated_share(x) * mu * (1.0 - mu) / self.p0(y0.astype(np.int64), a, x)


def fit_binary_cells(data, kernel=None, seed=0):
    """
    Cell probabilities of a binary panel given ``X``.

    The period-zero model classifies units into the four ``(Y0, A)`` cells,
    the period-one model into ``Y1=0`` and ``Y1=1`` among controls and the
    treated arm.

    :param data: estimation fold, binary outcome kind.
    :param kernel: covariate kernel, median heuristic when ``None``.
    :param seed: seed of the held-out splits and of the kernel centers.
    """
    if not data.is_binary:
        raise WrongOutcomeKind("cell probabilities need a binary outcome")
    y0 = data.y0.astype(np.int64)
    y1 = data.y1.astype(np.int64)
    a = data.a.astype(np.int64)
    kernel = kernel or default_kernel(data.x)
    return BinaryCellFits(
        time0=fit_cell_classifier(data.x, y0 + 2 * a, 4, kernel, seed),
        time1=fit_cell_classifier(data.x, np.where(a == 1, 2, y1), 3, kernel, seed),
    )


def _log_clamp(clamp):
    return tuple(np.log(clamp))


@dataclass(frozen=True, eq=False)
class CellOddsRatio:
    """``alpha1(y, x) = [p0(1,1) p0(0,0) / (p0(1,0) p0(0,1))]^y``, bounded in log space."""
    cells: BinaryCellFits
    clamp: tuple

    def __call__(self, y, x):
        log_ratio = self.cells.log_odds_ratio(x)
        y = np.broadcast_to(np.asarray(y, dtype=float), log_ratio.shape)
        return np.exp(np.clip(np.where(y == 1, log_ratio, 0.0), *_log_clamp(self.clamp)))


@dataclass(frozen=True, eq=False)
class CellBaselineOdds:
    """``beta0(x) = p0(0,1) / p0(0,0)``, bounded in log space."""
    cells: BinaryCellFits
    clamp: tuple

    def __call__(self, x):
        return np.exp(np.clip(self.cells.log_baseline_odds(x), *_log_clamp(self.clamp)))


@dataclass(frozen=True, eq=False)
class CellControlMass:
    """``sum_y alpha1(y, x) p1(y, x)`` or, with ``outcome_one``, its ``y=1`` term only."""
    cells: BinaryCellFits
    alpha1: CellOddsRatio
    outcome_one: bool = False

    def __call__(self, x):
        table = self.cells.table1(x)
        weighted_one = self.alpha1(np.ones(table.shape[0]), x) * table[:, 1]
        if self.outcome_one:
            return weighted_one
        return table[:, 0] + weighted_one


def binary_plugins(cells, alpha1, clamp):
    """
    Plug-in ``beta1`` and ``mu`` from the cell probabilities.

    ``beta1 = Pr(A=1 | x) / sum_y alpha1(y, x) p1(y, x)`` and
    ``mu = alpha1(1, x) p1(1, x) / sum_y alpha1(y, x) p1(y, x)``.
    """
    mass = CellControlMass(cells, alpha1)
    beta1 = PluginRatio(cells.treated_share, mass, clamp=tuple(clamp), floor=CELL_CLIP[0])
    mu = PluginRatio(CellControlMass(cells, alpha1, outcome_one=True), mass,
                     clamp=PROBABILITY_CLAMP, floor=CELL_CLIP[0])
    return beta1, mu


def fit_binary_nuisances(train, config, seed=0):
    """
    Nuisances of the binary-outcome estimator on one estimation fold.

    The odds ratio and the baseline odds come from the cell probabilities.
    ``beta1`` and ``mu`` solve the minimax programs of the augmented
    moment, which are linear in the unknown function.
    """
    if not train.is_binary:
        raise WrongOutcomeKind("binary nuisances need a binary outcome")
    cells = fit_binary_cells(train, default_kernel(train.x, config.bandwidth), seed=seed)
    alpha1 = CellOddsRatio(cells, config.ratio_clamp)
    beta0 = CellBaselineOdds(cells, config.ratio_clamp)
    logger.debug(f"cell classifiers: C0={cells.time0.inverse_penalty:g} C1={cells.time1.inverse_penalty:g}")

    a = train.a.astype(float)
    weight = alpha1(train.y1, train.x) * (1.0 - a)
    beta1_moments = (-weight, a)
    mu_moments = (-weight, weight * train.y1)
    plugin_beta1, plugin_mu = binary_plugins(cells, alpha1, config.ratio_clamp)

    hp_beta = select_hyperparams(train, config, seed, "beta1", plugin=plugin_beta1,
                                 moments=beta1_moments, clamp=config.ratio_clamp)
    hp_mu = select_hyperparams(train, config, seed, "mu", plugin=plugin_mu,
                               moments=mu_moments, clamp=PROBABILITY_CLAMP)
    if config.beta1_regularization:
        beta1 = regularize_beta1(plugin_beta1, train, None, hp_beta, trigger=config.anchor_trigger,
                                 clamp=config.ratio_clamp, rel_tol=config.pinv_rel_tol, moments=beta1_moments)
    else:
        beta1 = fit_minimax(train.x, *beta1_moments, hp_beta, clamp=config.ratio_clamp, rel_tol=config.pinv_rel_tol)
    mu = fit_minimax(train.x, *mu_moments, hp_mu, clamp=PROBABILITY_CLAMP, rel_tol=config.pinv_rel_tol)

    rates = {"beta1": beta1.clamp_rate(train.x), "mu": mu.clamp_rate(train.x)}
    return NuisanceSet(
        alpha1=alpha1,
        beta0=beta0,
        beta1=beta1,
        mu=mu,
        r1=None,
        r2=None,
        cells=cells,
        hyperparams={"beta1": hp_beta, "mu": hp_mu},
        anchored=beta1.anchored,
        clamp_rates=rates,
        warnings=beta1.warnings + mu.warnings + clamp_warnings(rates),
    )
