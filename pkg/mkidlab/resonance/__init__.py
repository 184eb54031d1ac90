"""Resonance models (ideal and non-ideal S21) and their complex least-squares fit."""

from mkidlab.resonance.fit import ResonanceFitConfig, estimate_initial, fit_resonance
from mkidlab.resonance.model import (
    ComplexSweep,
    ResonanceParams,
    circle_of,
    q_internal,
    s21_ideal,
    s21_model,
)

__all__ = [
    "ComplexSweep",
    "ResonanceParams",
    "ResonanceFitConfig",
    "circle_of",
    "estimate_initial",
    "fit_resonance",
    "q_internal",
    "s21_ideal",
    "s21_model",
]
