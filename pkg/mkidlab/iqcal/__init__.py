"""
IQ calibration: cable-delay subtraction, mixer ellipse-to-circle mapping,
background removal, center rotation and asymmetry rotation, plus the readout
transforms applied to calibrated data.
"""

from mkidlab.iqcal.chain import CalibrationChain, CalibrationData, ChainFitConfig, fit_chain
from mkidlab.iqcal.corrections import (
    BackgroundPoly,
    DelayProfile,
    apply_background,
    asymmetry_rotation,
    center_rotation,
    correct_cable_delay,
    fit_background,
    gap_direction,
    inverse_asymmetry,
    mobius_readout,
    phase_amplitude,
    rotate_about,
)
from mkidlab.iqcal.geometry import (
    CircleFit,
    EllipseParams,
    IqTrace,
    circle_to_ellipse,
    ellipse_points,
    ellipse_to_circle,
    fit_circle,
    fit_ellipse,
)

__all__ = [
    "BackgroundPoly",
    "CalibrationChain",
    "CalibrationData",
    "ChainFitConfig",
    "CircleFit",
    "DelayProfile",
    "EllipseParams",
    "IqTrace",
    "apply_background",
    "asymmetry_rotation",
    "center_rotation",
    "circle_to_ellipse",
    "correct_cable_delay",
    "ellipse_points",
    "ellipse_to_circle",
    "fit_background",
    "fit_chain",
    "fit_circle",
    "fit_ellipse",
    "gap_direction",
    "inverse_asymmetry",
    "mobius_readout",
    "phase_amplitude",
    "rotate_about",
]
