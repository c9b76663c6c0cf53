# Copyright (c) 2025 Nicola Spallanzani
# Licensed under the MIT License. See LICENSE file for details.

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_DATA = 4
EXIT_ESTIMATION = 5

NON_CONVERGENCE = "non-convergence"
SINGULAR_SYSTEM = "singular-system"
DEGENERATE_DENSITY = "degenerate-density"
CLAMP_SATURATION = "clamp-saturation"
SINGLE_REPETITION = "single-repetition"


class OrecError(ValueError):
    """
    Base class of every error raised by orec_did.

    ``code`` is a stable machine-readable identifier written in reports and on
    stderr; ``exit_code`` is the process status used by the command line.
    """
    code = "orec-error"
    exit_code = EXIT_ESTIMATION


class InvalidConfig(OrecError):
    code = "invalid-config"
    exit_code = EXIT_USAGE


class ParseError(OrecError):
    code = "parse-error"
    exit_code = EXIT_INPUT

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")


class LengthMismatch(OrecError):
    code = "length-mismatch"
    exit_code = EXIT_DATA


class NonBinaryTreatment(OrecError):
    code = "non-binary-treatment"
    exit_code = EXIT_DATA


class NonFiniteValue(OrecError):
    code = "non-finite-value"
    exit_code = EXIT_DATA


class DegenerateTreatmentArm(OrecError):
    code = "degenerate-treatment-arm"
    exit_code = EXIT_DATA


class TooFewUnits(OrecError):
    code = "too-few-units"
    exit_code = EXIT_DATA


class WrongOutcomeKind(OrecError):
    code = "wrong-outcome-kind"
    exit_code = EXIT_DATA


class DimensionMismatch(OrecError):
    code = "dimension-mismatch"


class TooFewPoints(OrecError):
    code = "too-few-points"


class NonFiniteInput(OrecError):
    code = "non-finite-input"


class InvalidBandwidth(OrecError):
    code = "invalid-bandwidth"


class EmptySample(OrecError):
    code = "empty-sample"


class EmptyControlSample(OrecError):
    code = "empty-control-sample"


class EmptyGrid(OrecError):
    code = "empty-grid"


class NoClosedForm(OrecError):
    code = "no-closed-form"


class TooFewPeriods(OrecError):
    code = "too-few-periods"
    exit_code = EXIT_DATA


class UnknownDgp(OrecError):
    code = "unknown-dgp"
    exit_code = EXIT_USAGE
