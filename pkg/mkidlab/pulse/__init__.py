"""Pulse-record smoothing, second-derivative triggering and alignment."""

from mkidlab.pulse.smoothing import SavGolConfig, moving_average, savgol_coefficients, savgol_filter
from mkidlab.pulse.trigger import (
    AlignmentResult,
    Record,
    TriggerConfig,
    align_records,
    classify_record,
    detect_onset,
    records_from_array,
    robust_mad,
    second_derivative,
    stack_records,
)

__all__ = [
    "AlignmentResult",
    "Record",
    "SavGolConfig",
    "TriggerConfig",
    "align_records",
    "classify_record",
    "detect_onset",
    "moving_average",
    "records_from_array",
    "robust_mad",
    "savgol_coefficients",
    "savgol_filter",
    "second_derivative",
    "stack_records",
]
