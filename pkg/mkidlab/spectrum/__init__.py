"""Photon-number spectrum: Poisson-weighted Gaussian mixture, simulation and fit."""

from mkidlab.spectrum.fit import (
    energy_scale_ev,
    fit_spectrum,
    initial_spectrum_model,
    photon_count_estimate,
)
from mkidlab.spectrum.model import (
    Histogram,
    SpectrumModel,
    binned_model,
    count_modes,
    default_n_max,
    expected_spectrum_curve,
    make_histogram,
    model_density,
    simulate_spectrum,
)

__all__ = [
    "Histogram",
    "SpectrumModel",
    "binned_model",
    "count_modes",
    "default_n_max",
    "energy_scale_ev",
    "expected_spectrum_curve",
    "fit_spectrum",
    "initial_spectrum_model",
    "make_histogram",
    "model_density",
    "photon_count_estimate",
    "simulate_spectrum",
]
