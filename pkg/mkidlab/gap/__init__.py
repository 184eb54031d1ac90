"""Superconducting gap from the temperature dependence of 1/Qi."""

from mkidlab.gap.fit import (
    CombinedGap,
    GapFitConfig,
    GapFitResult,
    combine_gap_results,
    fit_gap,
    qi_series_from_fits,
)
from mkidlab.gap.model import (
    QiSeries,
    inv_qi_model,
    inv_qi_model_kondo,
    kinetic_fraction,
    weighted_mean,
)

__all__ = [
    "CombinedGap",
    "GapFitConfig",
    "GapFitResult",
    "QiSeries",
    "combine_gap_results",
    "fit_gap",
    "inv_qi_model",
    "inv_qi_model_kondo",
    "kinetic_fraction",
    "qi_series_from_fits",
    "weighted_mean",
]
