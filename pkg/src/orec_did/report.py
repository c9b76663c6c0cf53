# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

import math
from dataclasses import dataclass, field

import numpy as np
import toml

SCHEMA = "orec-did.report/1"
SIGNIFICANT_DIGITS = 6


def round_significant(value, digits=SIGNIFICANT_DIGITS):
    if not math.isfinite(value):
        return value
    return float(f"{value:.{digits}g}")


def _clean(value, raw):
    """Plain TOML-ready values: numpy scalars and arrays unwrapped, ``None`` entries of tables dropped."""
    if isinstance(value, dict):
        return {str(key): _clean(item, raw) for key, item in value.items() if item is not None}
    if isinstance(value, np.ndarray):
        value = value.tolist()
    if isinstance(value, (list, tuple)):
        return [_clean(item, raw) for item in value]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return float(value) if raw else round_significant(float(value))
    return value


@dataclass
class RunReport:
    """
    Structured result of one command, serialized as TOML.

    The document carries no timestamp: identical inputs, flags and seed
    give identical bytes.
    """
    command: str
    meta: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, raw=False):
        document = {"schema": SCHEMA, "meta": dict(self.meta, command=self.command)}
        if self.results:
            document["results"] = self.results
        document["diagnostics"] = self.diagnostics
        return _clean(document, raw)

    def dumps(self, raw=False):
        return toml.dumps(self.to_dict(raw))

    def dump(self, destination, raw=False):
        with open(destination, "w", encoding="utf-8", newline="\n") as f:
            toml.dump(self.to_dict(raw), f)


def att_block(estimate):
    return {
        "n": estimate.n,
        "tau_hat": estimate.tau_hat,
        "tau0_hat": estimate.tau0_hat,
        "ase": estimate.ase,
        "ci": list(estimate.ci),
        "sigma_sq": estimate.sigma_sq,
        "sigma0_sq": estimate.sigma0_sq,
        "se_boot": estimate.se_boot,
        "ci_boot": list(estimate.ci_boot) if estimate.ci_boot is not None else None,
        "per_fold_tau0": estimate.per_fold,
        "repetitions": estimate.repetitions,
        "anchored_folds": estimate.anchored_folds,
    }


def qtt_block(estimate):
    return {
        "q": estimate.q,
        "theta_prelim": estimate.theta_prelim,
        "theta_hat": estimate.theta_hat,
        "ase": estimate.ase,
        "ci": list(estimate.ci) if estimate.ci is not None else None,
        "ci_suppressed": estimate.ci is None,
        "density": estimate.density,
        "per_fold_prelim": estimate.per_fold_prelim,
        "per_fold": estimate.per_fold,
        "moment_before": estimate.moment_before,
        "moment_after": estimate.moment_after,
    }


def overlap_block(report):
    block = {
        "kind": report.kind,
        "threshold": report.threshold,
        "violation_rate": report.violation_rate,
        "violation_rates": report.violation_rates,
    }
    if report.summaries:
        block["summaries"] = report.summaries
    if report.grid_range is not None:
        block["grid_range"] = list(report.grid_range)
    return block


def placebo_block(result):
    return {
        "family": result.family,
        "statistic": result.statistic,
        "p_value": result.p_value,
        "df": result.df,
        "coefficients": result.coefficients,
        "std_errors": result.std_errors,
    }


def collect_warnings(*results):
    """Ordered union of the warning codes carried by ``results``."""
    return list(dict.fromkeys(w for result in results for w in getattr(result, "warnings", ())))
