"""Optimum (noise-weighted matched) filter for pulse amplitude estimation."""

from mkidlab.optfilter.filter import (
    OfModel,
    average_pulse,
    build_filter,
    estimate_amplitude,
    expected_resolution,
    filtered_trace,
    kernel,
    noise_psd,
    resolution,
)

__all__ = [
    "OfModel",
    "average_pulse",
    "build_filter",
    "estimate_amplitude",
    "expected_resolution",
    "filtered_trace",
    "kernel",
    "noise_psd",
    "resolution",
]
