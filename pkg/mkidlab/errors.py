"""
Exception hierarchy for the analysis pipeline.

Every exception carries the CLI exit code it maps to, so the command-line layer can
translate failures without a lookup table:

    2  configuration error
    3  I/O or file-format error
    4  numerical failure (domain violations, fits that cannot proceed)
"""

from __future__ import annotations

from typing import Any, Optional


class MkidError(Exception):
    """Base class for all pipeline errors."""

    exit_code = 4


class ConfigError(MkidError, ValueError):
    """Invalid or inconsistent configuration."""

    exit_code = 2


class DataFormatError(MkidError):
    """Input file missing, unreadable, or malformed."""

    exit_code = 3


class DomainError(MkidError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class RegimeWarning(UserWarning):
    """Inputs outside the validity regime of a low-temperature approximation."""


# ----------------------------
# Fit failures
# ----------------------------

class FitError(MkidError, RuntimeError):
    """A fit or estimator could not produce a usable result."""


class NoDipFoundError(FitError):
    """Sweep shows no resonance dip deep enough to fit."""


class NonConvergenceError(FitError):
    """Optimizer stopped without meeting its convergence criteria.

    The best parameters reached so far are attached as ``best``.
    """

    def __init__(self, message: str, best: Optional[Any] = None) -> None:
        super().__init__(message)
        self.best = best


class IllConditionedError(FitError):
    """Jacobian at the optimum is rank-deficient."""


class DegenerateDataError(FitError):
    """Data carry no information about a fitted parameter."""


class DegenerateConicError(FitError):
    """Points do not determine an ellipse (collinear or hyperbolic best fit)."""


class CircleFitFailedError(FitError):
    """Points do not lie on a circular arc."""


class InsufficientBackgroundError(FitError):
    """Too few off-resonance points to fit the background polynomials."""


class FrequencyOutOfRangeError(FitError):
    """Requested frequency lies outside a tabulated profile."""


class PoleAtUnityError(FitError):
    """Möbius readout evaluated at S21 = 1."""


class NoOnsetError(FitError):
    """No pulse onset found in a record."""


class EmptyHistogramError(FitError):
    """Histogram has no counts."""
