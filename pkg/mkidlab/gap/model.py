"""
Temperature dependence of the internal quality factor.

    1/Qi(T) = 1/Qi(0) + alpha * sigma1(T) / (2 sigma2(T))            (gap model)
    1/Qi(T) = gap model - b * ln(T / T_K)                             (with Kondo term)

sigma1, sigma2 are the Mattis-Bardeen ratios with Delta0 = Delta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from mkidlab.errors import DataFormatError, DomainError
from mkidlab.physics.conductivity import conductivity_ratios

ArrayLike = Union[float, np.ndarray]

MIN_SERIES_POINTS = 5


@dataclass(frozen=True)
class QiSeries:
    """1/Qi measured at a set of bath temperatures for one resonator."""

    temperatures: np.ndarray
    inv_qi: np.ndarray
    inv_qi_err: np.ndarray
    f0: float
    resonator_id: str = "r0"
    meta: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        t = np.asarray(self.temperatures, dtype=float)
        y = np.asarray(self.inv_qi, dtype=float)
        e = np.asarray(self.inv_qi_err, dtype=float)
        object.__setattr__(self, "temperatures", t)
        object.__setattr__(self, "inv_qi", y)
        object.__setattr__(self, "inv_qi_err", e)

        if not (t.ndim == 1 and t.shape == y.shape == e.shape):
            raise DataFormatError("QiSeries arrays must be 1-D and equal length")
        if t.size < MIN_SERIES_POINTS:
            raise DataFormatError(f"QiSeries needs >= {MIN_SERIES_POINTS} temperatures, got {t.size}")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y)) and np.all(np.isfinite(e))):
            raise DataFormatError("QiSeries contains non-finite values")
        if np.any(t <= 0) or np.any(np.diff(t) <= 0):
            raise DataFormatError("QiSeries temperatures must be positive and strictly increasing")
        if np.any(y <= 0):
            raise DataFormatError("QiSeries inv_qi values must be > 0")
        if np.any(e <= 0):
            raise DataFormatError("QiSeries errors must be > 0")
        if not np.isfinite(self.f0) or self.f0 <= 0:
            raise DataFormatError(f"QiSeries f0 must be > 0 Hz, got {self.f0!r}")

    @property
    def omega(self) -> float:
        return 2.0 * np.pi * self.f0

    def __len__(self) -> int:
        return int(self.temperatures.size)


def _check_model_args(T: ArrayLike, delta: float, alpha: float) -> np.ndarray:
    T = np.asarray(T, dtype=float)
    if not np.all(np.isfinite(T)) or np.any(T <= 0):
        raise DomainError(f"temperature must be > 0 K, got {T!r}")
    if not np.isfinite(delta) or delta <= 0:
        raise DomainError(f"delta must be > 0 eV, got {delta!r}")
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha!r}")
    return T


def _loss_ratio(T: np.ndarray, delta: float, omega: float) -> np.ndarray:
    r = conductivity_ratios(T, omega, delta, delta)
    return np.asarray(r.sigma1_over_sigman) / (2.0 * np.asarray(r.sigma2_over_sigman))


def inv_qi_model(T: ArrayLike, delta: float, inv_qi0: float, alpha: float, omega: float) -> ArrayLike:
    """1/Qi(T) from quasiparticle losses on top of a temperature-independent floor."""
    T_arr = _check_model_args(T, delta, alpha)
    if not np.isfinite(omega) or omega <= 0:
        raise DomainError(f"omega must be > 0 rad/s, got {omega!r}")
    out = inv_qi0 + alpha * _loss_ratio(T_arr, delta, omega)
    return float(out) if np.ndim(T) == 0 else out


def inv_qi_model_kondo(
    T: ArrayLike,
    delta: float,
    inv_qi0: float,
    alpha: float,
    omega: float,
    b: float,
    tk: float,
) -> ArrayLike:
    """Gap model with the logarithmic Kondo term -b ln(T/T_K)."""
    if not np.isfinite(tk) or tk <= 0:
        raise DomainError(f"kondo tk must be > 0 K, got {tk!r}")
    base = inv_qi_model(T, delta, inv_qi0, alpha, omega)
    out = base - b * np.log(np.asarray(T, dtype=float) / tk)
    return float(out) if np.ndim(T) == 0 else out


def kinetic_fraction(f_meas: float, f_sim: float) -> float:
    """Kinetic inductance fraction from measured vs geometric-only simulated frequency."""
    if not (np.isfinite(f_meas) and np.isfinite(f_sim)) or f_sim <= 0 or f_meas < 0:
        raise DomainError(f"kinetic_fraction: need 0 <= f_meas and f_sim > 0, got {f_meas!r}, {f_sim!r}")
    if f_meas > f_sim:
        raise DomainError(
            f"kinetic_fraction: f_meas={f_meas!r} exceeds f_sim={f_sim!r}; "
            f"kinetic inductance can only lower the frequency"
        )
    return 1.0 - (f_meas / f_sim) ** 2


def weighted_mean(values: Sequence[float], errors: Sequence[float]) -> Tuple[float, float]:
    """Inverse-variance weighted mean and its one-sigma error (no chi2 inflation)."""
    v = np.asarray(values, dtype=float)
    e = np.asarray(errors, dtype=float)
    if v.size == 0 or v.shape != e.shape:
        raise DomainError("weighted_mean: need equal-length, non-empty values and errors")
    if not np.all(np.isfinite(e)) or np.any(e <= 0):
        raise DomainError("weighted_mean: errors must be finite and > 0")
    w = 1.0 / e**2
    return float(np.sum(w * v) / np.sum(w)), float(1.0 / np.sqrt(np.sum(w)))
