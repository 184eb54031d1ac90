"""
Fitted IQ calibration chain.

A calibration data set holds the four acquisitions the chain is built from:

- the line profile with the RF port disconnected (cable delay),
- the mixer circle from two detuned synthesizers (ellipse),
- a wide scan around the resonance (background),
- a resonance scan (center rotation and asymmetry).

Each step is fitted on data already corrected by the previous steps. The
background is fitted excluding the resonance band first, then refined with the
fitted resonance shape divided out so its tails do not bias the polynomials.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Union

import numpy as np

from mkidlab.errors import ConfigError, DataFormatError, FitError
from mkidlab.iqcal.corrections import (
    BackgroundPoly,
    DelayProfile,
    apply_background,
    asymmetry_rotation,
    fit_background,
    gap_rotation,
    phase_amplitude,
    rotate_about,
)
from mkidlab.iqcal.geometry import EllipseParams, IqTrace, ellipse_to_circle, fit_circle, fit_ellipse
from mkidlab.resonance.fit import ResonanceFitConfig, estimate_initial, fit_resonance
from mkidlab.resonance.model import ComplexSweep, ResonanceParams

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class CalibrationData:
    delay_scan: IqTrace
    mixer_circle: np.ndarray
    mixer_frequency: float
    wide_scan: ComplexSweep
    resonance: ComplexSweep


@dataclass(frozen=True)
class ChainFitConfig:
    background_degree: int = 2
    exclude_linewidths: float = 10.0
    background_passes: int = 2
    theta: Optional[float] = None

    def __post_init__(self) -> None:
        if self.background_degree < 0:
            raise ConfigError("iqcal.background_degree must be >= 0")
        if self.exclude_linewidths <= 0:
            raise ConfigError("iqcal.exclude_linewidths must be > 0")
        if self.background_passes < 0:
            raise ConfigError("iqcal.background_passes must be >= 0")
        if self.theta is not None and not abs(self.theta) < np.pi / 2:
            raise ConfigError(f"iqcal.theta must satisfy |theta| < pi/2, got {self.theta}")


@dataclass(frozen=True)
class CalibrationChain:
    delay: DelayProfile
    ellipse: EllipseParams
    background: BackgroundPoly
    rotation_center: complex
    rotation_angle: float
    theta: float
    readout_center: complex = 0j
    readout_radius: float = 1.0
    rest_angle: float = np.pi
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def identity(cls, f_lo: float, f_hi: float) -> "CalibrationChain":
        return cls(
            delay=DelayProfile.zero(f_lo, f_hi),
            ellipse=EllipseParams.unit(),
            background=BackgroundPoly.identity(),
            rotation_center=0j,
            rotation_angle=0.0,
            theta=0.0,
        )

    def apply(self, z: np.ndarray, freqs: ArrayLike) -> np.ndarray:
        """Raw I + jQ at frequency ``freqs`` (broadcast against z) to calibrated S21."""
        freqs = np.asarray(freqs, dtype=float)
        z = np.asarray(z, dtype=complex) - self.delay(freqs)
        z = ellipse_to_circle(z, self.ellipse)
        z = apply_background(z, 2.0 * np.pi * freqs, self.background)
        z = rotate_about(z, self.rotation_center, self.rotation_angle)
        return np.asarray(asymmetry_rotation(z, self.theta))

    def apply_trace(self, trace: IqTrace) -> IqTrace:
        return trace.with_values(self.apply(trace.z, trace.axis))

    def readout(self, z: np.ndarray, freqs: ArrayLike):
        """Phase and amplitude about the calibrated circle, phase measured from the resting point."""
        return phase_amplitude(self.apply(z, freqs), self.readout_center, self.readout_radius, self.rest_angle)

    def to_dict(self) -> dict:
        return {
            "delay": self.delay.to_dict(),
            "ellipse": self.ellipse.to_dict(),
            "background": self.background.to_dict(),
            "center_rotation": {
                "center": [self.rotation_center.real, self.rotation_center.imag],
                "angle": self.rotation_angle,
            },
            "asymmetry_theta": self.theta,
            "readout": {
                "center": [self.readout_center.real, self.readout_center.imag],
                "radius": self.readout_radius,
                "rest_angle": self.rest_angle,
            },
            "diagnostics": dict(sorted(self.diagnostics.items())),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CalibrationChain":
        try:
            rot = data["center_rotation"]
            ro = data["readout"]
            return cls(
                delay=DelayProfile.from_dict(data["delay"]),
                ellipse=EllipseParams.from_dict(data["ellipse"]),
                background=BackgroundPoly.from_dict(data["background"]),
                rotation_center=complex(*rot["center"]),
                rotation_angle=float(rot["angle"]),
                theta=float(data["asymmetry_theta"]),
                readout_center=complex(*ro["center"]),
                readout_radius=float(ro["radius"]),
                rest_angle=float(ro["rest_angle"]),
                diagnostics={k: float(v) for k, v in data.get("diagnostics", {}).items()},
            )
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"Malformed calibration chain: {e}") from e


def _band(fit: ResonanceParams, exclude_linewidths: float):
    half = 0.5 * exclude_linewidths * fit.linewidth
    return fit.f0 - half, fit.f0 + half


def _rest_angle(z: np.ndarray, freqs: np.ndarray, center: complex, fit: ResonanceParams) -> float:
    near = np.abs(freqs - fit.f0) < 0.1 * fit.linewidth
    if not np.any(near):
        near = np.zeros(freqs.size, dtype=bool)
        near[int(np.argmin(np.abs(freqs - fit.f0)))] = True
    u = (z[near] - center) / np.abs(z[near] - center)
    return float(np.angle(np.mean(u)))


def fit_chain(data: CalibrationData, config: Optional[ChainFitConfig] = None) -> CalibrationChain:
    """
    Fit all five corrections from a calibration data set.

    theta defaults to -phi0 of the resonance fitted on the background-corrected
    scan; the center rotation then targets the gap direction -theta, so a chain
    fitted on undistorted data is the identity.

    Raises:
        DegenerateConicError, CircleFitFailedError, InsufficientBackgroundError,
        FrequencyOutOfRangeError: from the individual steps
        FitError: fitted asymmetry outside |theta| < pi/2
    """
    config = config or ChainFitConfig()
    delay = DelayProfile.from_trace(data.delay_scan)

    mixer = np.asarray(data.mixer_circle, dtype=complex) - delay(data.mixer_frequency)
    ellipse = fit_ellipse(mixer)

    def unmix(sweep: ComplexSweep) -> ComplexSweep:
        return ComplexSweep(sweep.freqs, ellipse_to_circle(sweep.s21 - delay(sweep.freqs), ellipse), sweep.meta)

    wide = unmix(data.wide_scan)
    res = unmix(data.resonance)
    omega = 2.0 * np.pi * res.freqs

    seed = estimate_initial(res, background_degree=0)
    background = fit_background(wide, _band(seed, config.exclude_linewidths), config.background_degree)

    res_config = ResonanceFitConfig(background_degree=0)
    fit = seed
    for _ in range(config.background_passes):
        fit = fit_resonance(ComplexSweep(res.freqs, apply_background(res.s21, omega, background)), res_config)
        background = fit_background(
            wide, _band(fit, config.exclude_linewidths), config.background_degree, resonance=fit
        )
    z_bg = np.asarray(apply_background(res.s21, omega, background))
    fit = fit_resonance(ComplexSweep(res.freqs, z_bg), res_config)

    if config.theta is None:
        theta = -fit.phi0
        if not abs(theta) < np.pi / 2:
            raise FitError(
                f"Fitted asymmetry phi0={fit.phi0:.4f} rad lies outside |phi0| < pi/2.\n"
                f"Set iqcal.theta explicitly."
            )
    else:
        theta = float(config.theta)

    circle, angle = gap_rotation(z_bg, target=-theta)
    corrected = np.asarray(asymmetry_rotation(rotate_about(z_bg, circle.center, angle), theta))
    readout = fit_circle(corrected)
    rest = _rest_angle(corrected, res.freqs, readout.center, fit)

    logger.info("calibration chain: ellipse residual %.3g, circle residual %.3g, theta %.4f",
                ellipse.residual, readout.residual, theta)
    return CalibrationChain(
        delay=delay,
        ellipse=ellipse,
        background=background,
        rotation_center=circle.center,
        rotation_angle=angle,
        theta=theta,
        readout_center=readout.center,
        readout_radius=readout.radius,
        rest_angle=rest,
        diagnostics={
            "ellipse_residual": ellipse.residual,
            "circle_residual": readout.residual,
            "f0_hz": fit.f0,
            "linewidth_hz": fit.linewidth,
            "theta_fitted": float(config.theta is None),
        },
    )
