"""
Individual IQ corrections, in the order the calibration chain applies them:

    cable delay -> mixer ellipse -> background -> center rotation -> asymmetry

plus the readout transforms used on calibrated data (Mobius map, phase/amplitude
about the resonance circle).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np
from numpy.polynomial import Polynomial

from mkidlab.errors import (
    CircleFitFailedError,
    DataFormatError,
    DomainError,
    FrequencyOutOfRangeError,
    InsufficientBackgroundError,
    PoleAtUnityError,
)
from mkidlab.iqcal.geometry import CircleFit, IqTrace, fit_circle
from mkidlab.resonance.model import ComplexSweep, ResonanceParams, s21_model, wrap_phase

logger = logging.getLogger(__name__)

ComplexLike = Union[complex, np.ndarray]

MIN_BACKGROUND_POINTS = 10
MAX_CIRCLE_RESIDUAL = 0.1
POLE_TOL = 1e-12


def _out(z: np.ndarray) -> ComplexLike:
    return complex(z) if z.ndim == 0 else z


# ----------------------------
# Cable delay
# ----------------------------

@dataclass(frozen=True)
class DelayProfile:
    """Line offset measured with the RF port disconnected, tabulated against frequency."""

    freqs: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        freqs = np.asarray(self.freqs, dtype=float)
        values = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "values", values)
        if freqs.ndim != 1 or freqs.shape != values.shape or freqs.size < 2:
            raise DataFormatError("Delay profile needs >= 2 frequencies and one value per frequency")
        if not (np.all(np.isfinite(freqs)) and np.all(np.isfinite(values))):
            raise DataFormatError("Delay profile contains non-finite values")
        if np.any(np.diff(freqs) <= 0):
            raise DataFormatError("Delay profile frequencies must be strictly increasing")

    @classmethod
    def zero(cls, f_lo: float, f_hi: float) -> "DelayProfile":
        return cls(freqs=np.array([f_lo, f_hi]), values=np.zeros(2, dtype=complex))

    @classmethod
    def from_trace(cls, trace: IqTrace) -> "DelayProfile":
        return cls(freqs=trace.axis, values=trace.z)

    def __call__(self, f: Union[float, np.ndarray]) -> ComplexLike:
        f = np.asarray(f, dtype=float)
        lo, hi = self.freqs[0], self.freqs[-1]
        if np.any(f < lo) or np.any(f > hi):
            raise FrequencyOutOfRangeError(
                f"Delay profile covers [{lo:.9g}, {hi:.9g}] Hz; requested "
                f"[{np.min(f):.9g}, {np.max(f):.9g}] Hz.\n"
                f"Acquire the line profile over the full band of the measurement."
            )
        re = np.interp(f, self.freqs, self.values.real)
        im = np.interp(f, self.freqs, self.values.imag)
        return _out(np.asarray(re + 1j * im))

    def to_dict(self) -> dict:
        return {
            "freqs_hz": self.freqs.tolist(),
            "re": self.values.real.tolist(),
            "im": self.values.imag.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DelayProfile":
        try:
            re = np.asarray(data["re"], dtype=float)
            im = np.asarray(data["im"], dtype=float)
            return cls(freqs=np.asarray(data["freqs_hz"], dtype=float), values=re + 1j * im)
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"Malformed delay profile: {e}") from e


def correct_cable_delay(trace: IqTrace, profile: DelayProfile) -> IqTrace:
    """Subtract the interpolated line profile point by point; trace.axis is frequency."""
    return trace.with_values(trace.z - profile(trace.axis))


# ----------------------------
# Background
# ----------------------------

def _poly_to_dict(p: Polynomial) -> dict:
    return {"coef": p.coef.tolist(), "domain": p.domain.tolist(), "window": p.window.tolist()}


def _poly_from_dict(data: dict) -> Polynomial:
    return Polynomial(data["coef"], domain=data["domain"], window=data["window"])


@dataclass(frozen=True)
class BackgroundPoly:
    """Amplitude A(omega) and phase phi(omega) polynomials of the off-resonance line."""

    amplitude: Polynomial
    phase: Polynomial

    @classmethod
    def identity(cls) -> "BackgroundPoly":
        return cls(amplitude=Polynomial([1.0]), phase=Polynomial([0.0]))

    def __call__(self, omega: Union[float, np.ndarray]) -> ComplexLike:
        omega = np.asarray(omega, dtype=float)
        return _out(np.asarray(self.amplitude(omega) * np.exp(1j * self.phase(omega))))

    def to_dict(self) -> dict:
        return {"amplitude": _poly_to_dict(self.amplitude), "phase": _poly_to_dict(self.phase)}

    @classmethod
    def from_dict(cls, data: dict) -> "BackgroundPoly":
        try:
            return cls(amplitude=_poly_from_dict(data["amplitude"]), phase=_poly_from_dict(data["phase"]))
        except (KeyError, TypeError, ValueError) as e:
            raise DataFormatError(f"Malformed background polynomials: {e}") from e


def fit_background(
    wide_scan: ComplexSweep,
    exclude_band: Tuple[float, float],
    degree: int = 2,
    resonance: Optional[ResonanceParams] = None,
) -> BackgroundPoly:
    """
    Polynomial fits to |S21| and unwrapped arg S21 of a wide scan, off resonance.

    Args:
        wide_scan: scan extending beyond exclude_band on both sides
        exclude_band: (f_lo, f_hi) in Hz left out of the fit
        degree: polynomial degree for both amplitude and phase
        resonance: optional resonance shape divided out of the scan first, so the
            Lorentzian tails outside the band do not leak into the polynomials

    Raises:
        InsufficientBackgroundError: fewer than 10 points outside exclude_band
    """
    lo, hi = exclude_band
    if not hi > lo:
        raise DomainError(f"exclude_band must satisfy f_lo < f_hi, got {exclude_band!r}")
    f = wide_scan.freqs
    mask = (f < lo) | (f > hi)
    n_out = int(np.count_nonzero(mask))
    if n_out < MIN_BACKGROUND_POINTS:
        raise InsufficientBackgroundError(
            f"Only {n_out} scan points lie outside the excluded band [{lo:.9g}, {hi:.9g}] Hz "
            f"(need >= {MIN_BACKGROUND_POINTS}).\n"
            f"Widen the background scan or narrow the exclusion band."
        )
    width = hi - lo
    if f[0] > lo - width or f[-1] < hi + width:
        logger.warning("background scan extends less than one band width beyond the excluded band")

    s = wide_scan.s21
    if resonance is not None:
        s = s / s21_model(f, resonance.with_updates(background=(1.0 + 0.0j,)))

    omega = 2.0 * np.pi * f
    phase = np.unwrap(np.angle(s))
    amp = Polynomial.fit(omega[mask], np.abs(s[mask]), degree)
    phi = Polynomial.fit(omega[mask], phase[mask], degree)
    return BackgroundPoly(amplitude=amp, phase=phi)


def apply_background(s21: ComplexLike, omega: Union[float, np.ndarray], background: BackgroundPoly) -> ComplexLike:
    """S21(omega) -> S21(omega) e^(-j phi(omega)) / A(omega)."""
    omega = np.asarray(omega, dtype=float)
    a = np.asarray(background.amplitude(omega))
    if np.any(a <= 0):
        raise DomainError("apply_background: amplitude polynomial is not positive over the requested band")
    out = np.asarray(s21, dtype=complex) * np.exp(-1j * background.phase(omega)) / a
    return _out(np.asarray(out))


# ----------------------------
# Rotations
# ----------------------------

def rotate_about(z: ComplexLike, center: complex, angle: float) -> ComplexLike:
    return _out(np.asarray(center + (np.asarray(z, dtype=complex) - center) * np.exp(1j * angle)))


def gap_direction(z: np.ndarray, center: complex) -> float:
    """Direction of the midpoint of the largest angular gap between points, seen from center."""
    a = np.sort(np.angle(np.asarray(z, dtype=complex) - center))
    gaps = np.append(np.diff(a), a[0] + 2.0 * np.pi - a[-1])
    k = int(np.argmax(gaps))
    return wrap_phase(a[k] + 0.5 * gaps[k])


def gap_rotation(z: np.ndarray, target: float = 0.0) -> Tuple[CircleFit, float]:
    """Circle fit plus the rotation about its center that puts the gap at ``target``."""
    circle = fit_circle(z)
    if circle.residual > MAX_CIRCLE_RESIDUAL:
        raise CircleFitFailedError(
            f"Points do not form a circular arc: residual {circle.residual:.3g} of the radius "
            f"(limit {MAX_CIRCLE_RESIDUAL})."
        )
    angle = wrap_phase(target - gap_direction(z, circle.center))
    return circle, angle


def center_rotation(trace: IqTrace, target: float = 0.0) -> Tuple[IqTrace, float]:
    """
    Rotate a resonance circle about its fitted center so that the gap of the arc
    points along ``target`` (default +I).

    Raises:
        CircleFitFailedError: points are not close to a circle
    """
    circle, angle = gap_rotation(trace.z, target)
    return trace.with_values(rotate_about(trace.z, circle.center, angle)), angle


def asymmetry_rotation(s21: ComplexLike, theta: float) -> ComplexLike:
    """S21 -> 1 - cos(theta) e^(j theta) (1 - S21); the point 1 is fixed."""
    if not abs(theta) < np.pi / 2:
        raise DomainError(f"asymmetry_rotation: |theta| must be < pi/2, got {theta!r}")
    z = np.asarray(s21, dtype=complex)
    return _out(1.0 - np.cos(theta) * np.exp(1j * theta) * (1.0 - z))


def inverse_asymmetry(s21: ComplexLike, theta: float) -> ComplexLike:
    if not abs(theta) < np.pi / 2:
        raise DomainError(f"inverse_asymmetry: |theta| must be < pi/2, got {theta!r}")
    z = np.asarray(s21, dtype=complex)
    return _out(1.0 - (1.0 - z) * np.exp(-1j * theta) / np.cos(theta))


# ----------------------------
# Readout
# ----------------------------

def mobius_readout(s21: ComplexLike) -> ComplexLike:
    """S21* = 1/(1 - S21); maps a calibrated resonance circle onto a vertical line."""
    d = 1.0 - np.asarray(s21, dtype=complex)
    if np.any(np.abs(d) < POLE_TOL):
        raise PoleAtUnityError("mobius_readout: S21 = 1 is the pole of the Mobius map")
    return _out(1.0 / d)


def phase_amplitude(
    trace: Union[IqTrace, np.ndarray],
    center: complex,
    radius: float,
    reference_angle: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Phase (unwrapped along the last axis) and amplitude of points about a circle center.

    Phase is measured from ``reference_angle``; amplitude is |z - center| / radius.
    """
    if not radius > 0:
        raise DomainError(f"phase_amplitude: radius must be > 0, got {radius!r}")
    z = trace.z if isinstance(trace, IqTrace) else np.asarray(trace, dtype=complex)
    w = np.asarray((z - center) * np.exp(-1j * reference_angle))
    if w.ndim == 0:
        return np.angle(w), np.abs(w) / radius
    return np.unwrap(np.angle(w), axis=-1), np.abs(w) / radius
