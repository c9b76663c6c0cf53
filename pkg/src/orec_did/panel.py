# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import re
from enum import Enum
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .config import STREAM_CV, STREAM_FOLDS, make_rng
from .errors import (
    DegenerateTreatmentArm,
    LengthMismatch,
    NonBinaryTreatment,
    NonFiniteValue,
    ParseError,
    TooFewPoints,
    TooFewUnits,
    WrongOutcomeKind,
)

REQUIRED_COLUMNS = ("y0", "y1", "a")
COVARIATE_PATTERN = re.compile(r"^x([1-9][0-9]*)$")
PRE_PERIOD_PATTERN = re.compile(r"^y_pre([1-9][0-9]*)$")
NAN_LITERALS = {"nan", "+nan", "-nan"}


class OutcomeKind(str, Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


def _frozen(values, dtype=float):
    array = np.array(values, dtype=dtype, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """
    Two-period panel ``(Y0, Y1, A, X)``.

    Instances are immutable: the arrays are read-only copies. Use
    :func:`validate_dataset` to build one from raw columns; the constructor
    itself does not check the invariants so that fold subsets with a single
    arm can still be represented.
    """
    y0: np.ndarray
    y1: np.ndarray
    a: np.ndarray
    x: np.ndarray
    outcome_kind: OutcomeKind = OutcomeKind.CONTINUOUS

    __hash__ = None

    def __eq__(self, other):
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.outcome_kind == other.outcome_kind
            and np.array_equal(self.y0, other.y0)
            and np.array_equal(self.y1, other.y1)
            and np.array_equal(self.a, other.a)
            and self.x.shape == other.x.shape
            and np.array_equal(self.x, other.x)
        )

    @property
    def n(self):
        return self.y0.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def is_binary(self):
        return self.outcome_kind == OutcomeKind.BINARY

    @property
    def treated(self):
        return self.a == 1

    @property
    def control(self):
        return self.a == 0

    @property
    def p_treated(self):
        return float(np.mean(self.a))

    def take(self, indices):
        """Sub-panel on ``indices`` (an index array or a boolean mask)."""
        return PanelDataset(
            y0=_frozen(self.y0[indices]),
            y1=_frozen(self.y1[indices]),
            a=_frozen(self.a[indices], dtype=np.int64),
            x=_frozen(self.x[indices]),
            outcome_kind=self.outcome_kind,
        )

    def points0(self):
        """Stacked ``(Y0, X)`` rows."""
        return stack_points(self.y0, self.x)

    def points1(self):
        """Stacked ``(Y1, X)`` rows."""
        return stack_points(self.y1, self.x)


def stack_points(y, x):
    y = np.asarray(y, dtype=float).reshape(-1, 1)
    x = np.asarray(x, dtype=float).reshape(y.shape[0], -1)
    return np.hstack([y, x])


def _is_binary_column(values):
    return bool(np.all((values == 0) | (values == 1)))


def validate_dataset(y0, y1, a, x=None, outcome_kind=None):
    """
    Build a :class:`PanelDataset` from raw columns and check its invariants.

    :param y0: pre-treatment outcomes.
    :param y1: post-treatment outcomes.
    :param a: treatment indicators.
    :param x: covariate matrix ``N x d``; ``None`` or ``N x 0`` for no covariates.
    :param outcome_kind: force ``"continuous"`` or ``"binary"``. ``None`` infers
        binary iff both outcome columns only take values in ``{0, 1}``.
    :return: a validated :class:`PanelDataset`.
    """
    y0 = np.asarray(y0, dtype=float).ravel()
    y1 = np.asarray(y1, dtype=float).ravel()
    a_raw = np.asarray(a, dtype=float).ravel()
    n = y0.shape[0]
    if x is None:
        x = np.empty((n, 0))
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x.reshape(-1, 1)
    if x.ndim != 2:
        raise LengthMismatch(f"covariates must be a matrix, got {x.ndim} dimensions")

    lengths = {"y0": n, "y1": y1.shape[0], "a": a_raw.shape[0], "x": x.shape[0]}
    if len(set(lengths.values())) != 1:
        detail = ", ".join(f"{name}={length}" for name, length in lengths.items())
        raise LengthMismatch(f"columns have different lengths: {detail}")
    if n < 2:
        raise LengthMismatch(f"at least 2 units are required, got {n}")

    for name, values in (("y0", y0), ("y1", y1), ("a", a_raw), ("x", x)):
        if not np.all(np.isfinite(values)):
            raise NonFiniteValue(f"{name} contains non-finite values")

    if not _is_binary_column(a_raw):
        bad = np.unique(a_raw[(a_raw != 0) & (a_raw != 1)])
        raise NonBinaryTreatment(f"treatment takes values outside {{0, 1}}: {bad[:5].tolist()}")
    a_int = a_raw.astype(np.int64)
    if a_int.sum() == 0:
        raise DegenerateTreatmentArm("no treated unit")
    if a_int.sum() == n:
        raise DegenerateTreatmentArm("no control unit")

    binary_values = _is_binary_column(y0) and _is_binary_column(y1)
    if outcome_kind is None:
        kind = OutcomeKind.BINARY if binary_values else OutcomeKind.CONTINUOUS
    else:
        kind = OutcomeKind(outcome_kind)
        if kind == OutcomeKind.BINARY and not binary_values:
            raise WrongOutcomeKind("binary outcome requested but outcomes are not {0, 1}-valued")

    return PanelDataset(
        y0=_frozen(y0),
        y1=_frozen(y1),
        a=_frozen(a_int, dtype=np.int64),
        x=_frozen(x),
        outcome_kind=kind,
    )


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    fold_of: np.ndarray
    seed: int

    def indices(self, fold):
        return np.flatnonzero(self.fold_of == fold)

    def complement(self, fold):
        return np.flatnonzero(self.fold_of != fold)

    def sizes(self):
        return np.bincount(self.fold_of, minlength=self.k)


def make_folds(n, config, a, seed=None):
    """
    Random partition of ``range(n)`` into ``config.k_folds`` folds, stratified by arm.

    Each arm is permuted with a Philox generator and dealt round-robin over
    the folds, the treated arm starting where the control arm stopped so that
    fold sizes differ by at most one. Every fold therefore holds at least one
    unit of each arm, and so does every estimation complement.
    """
    k = config.k_folds
    seed = config.seed if seed is None else int(seed)
    a = np.asarray(a).ravel()
    if a.shape[0] != n:
        raise LengthMismatch(f"treatment vector has length {a.shape[0]}, expected {n}")
    if n < k:
        raise TooFewUnits(f"{n} units cannot fill {k} folds")

    rng = make_rng(seed, STREAM_FOLDS)
    fold_of = np.empty(n, dtype=np.int64)
    offset = 0
    for arm in (0, 1):
        members = np.flatnonzero(a == arm)
        if members.shape[0] < k:
            raise TooFewUnits(f"arm A={arm} has {members.shape[0]} units, fewer than {k} folds")
        permuted = rng.permutation(members)
        fold_of[permuted] = (offset + np.arange(permuted.shape[0])) % k
        offset = (offset + permuted.shape[0]) % k

    fold_of.setflags(write=False)
    return FoldAssignment(k=k, fold_of=fold_of, seed=seed)


def validation_splits(n, v_folds, seed, *keys):
    """Assignment of ``range(n)`` to ``v_folds`` hyperparameter validation splits of near-equal size."""
    if n < 2 * v_folds:
        raise TooFewPoints(f"{n} units cannot fill {v_folds} validation splits of 2 units")
    order = make_rng(seed, STREAM_CV, *keys).permutation(n)
    split_of = np.empty(n, dtype=np.int64)
    split_of[order] = np.arange(n) % v_folds
    return split_of


@dataclass(frozen=True)
class PanelCsv:
    columns: dict
    x: np.ndarray
    pre_periods: list
    covariate_names: list


def _check_header(names):
    if len(names) < len(REQUIRED_COLUMNS) or tuple(names[:3]) != REQUIRED_COLUMNS:
        for position, expected in enumerate(REQUIRED_COLUMNS):
            found = names[position] if position < len(names) else None
            if found != expected:
                raise ParseError(f"expected column '{expected}' at position {position + 1}",
                                 line=1, column=found if found is not None else expected)
    covariates, pre_periods = [], []
    for name in names[3:]:
        match_x = COVARIATE_PATTERN.match(name)
        match_pre = PRE_PERIOD_PATTERN.match(name)
        if match_x:
            if int(match_x.group(1)) != len(covariates) + 1:
                raise ParseError(f"covariates must be numbered x1..xd in order", line=1, column=name)
            covariates.append(name)
        elif match_pre:
            if int(match_pre.group(1)) != len(pre_periods) + 1:
                raise ParseError(f"pre-periods must be numbered y_pre1..y_preT in order", line=1, column=name)
            pre_periods.append(name)
        else:
            raise ParseError("unknown column", line=1, column=name)
    if len(set(names)) != len(names):
        raise ParseError("duplicated column", line=1)
    return covariates, pre_periods


def _parse_column(name, text):
    stripped = text.str.strip()
    values = pd.to_numeric(stripped, errors="coerce")
    bad = values.isna() & ~stripped.str.lower().isin(NAN_LITERALS)
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        cell = stripped.iloc[row]
        reason = "missing value" if cell == "" else f"not a number: '{cell}'"
        raise ParseError(reason, line=row + 2, column=name)
    return values.to_numpy(dtype=float)


def read_panel_csv(source):
    """
    Read a panel CSV with header ``y0,y1,a,x1,...,xd`` and optional
    ``y_pre1,...,y_preT`` columns.

    :param source: path or open text buffer.
    :return: :class:`PanelCsv` with parsed numeric columns.
    :raises ParseError: with the offending line number (1 is the header) and column.
    """
    try:
        frame = pd.read_csv(source, dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise ParseError("empty input") from exc
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise ParseError(str(exc).strip(), line=int(match.group(1)) if match else None) from exc
    except UnicodeDecodeError as exc:
        raise ParseError("input is not valid UTF-8") from exc

    names = [str(name).strip() for name in frame.columns]
    covariates, pre_periods = _check_header(names)
    frame.columns = names
    if frame.shape[0] == 0:
        raise ParseError("no data rows", line=2)

    columns = {name: _parse_column(name, frame[name]) for name in names}
    n = frame.shape[0]
    x = np.column_stack([columns[name] for name in covariates]) if covariates else np.empty((n, 0))
    return PanelCsv(
        columns={name: columns[name] for name in REQUIRED_COLUMNS},
        x=x,
        pre_periods=[columns[name] for name in pre_periods],
        covariate_names=covariates,
    )


def panel_frame(dataset, pre_periods=None):
    frame = pd.DataFrame({
        "y0": dataset.y0.astype(np.int64) if dataset.is_binary else dataset.y0,
        "y1": dataset.y1.astype(np.int64) if dataset.is_binary else dataset.y1,
        "a": dataset.a.astype(np.int64),
    })
    for j in range(dataset.d):
        frame[f"x{j + 1}"] = dataset.x[:, j]
    for t, values in enumerate(pre_periods or []):
        frame[f"y_pre{t + 1}"] = values
    return frame


def write_panel_csv(dataset, destination, pre_periods=None):
    """Write ``dataset`` in the ingestion format (full float precision)."""
    panel_frame(dataset, pre_periods).to_csv(destination, index=False, lineterminator="\n")
