"""
Moving-average and Savitzky-Golay smoothing of pulse records.

All filters act along the last axis, so a (n_records, length) array is filtered
record by record in one call.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

from mkidlab.errors import ConfigError, DomainError


@dataclass(frozen=True)
class SavGolConfig:
    window: int = 51
    poly_order: int = 3
    deriv_order: int = 0
    physical_units: bool = False

    def __post_init__(self) -> None:
        if self.window < 5 or self.window % 2 == 0:
            raise ConfigError(f"savgol window must be an odd integer >= 5, got {self.window}")
        if not 0 <= self.poly_order < self.window:
            raise ConfigError(f"savgol poly_order must satisfy 0 <= order < window, got {self.poly_order}")
        if self.deriv_order not in (0, 1, 2):
            raise ConfigError(f"savgol deriv_order must be 0, 1 or 2, got {self.deriv_order}")
        if self.poly_order < self.deriv_order:
            raise ConfigError("savgol poly_order must be >= deriv_order")


def moving_average(samples: np.ndarray, window: int) -> np.ndarray:
    """
    Centered moving average along the last axis.

    Near the edges the window shrinks symmetrically (half-width min(h, i, n-1-i)),
    so the first and last samples are returned unchanged and the output length
    equals the input length.
    """
    x = np.asarray(samples, dtype=float)
    n = x.shape[-1]
    if window < 1 or window % 2 == 0:
        raise DomainError(f"moving_average: window must be a positive odd integer, got {window}")
    if window > n:
        raise DomainError(f"moving_average: window {window} exceeds record length {n}")
    if window == 1:
        return x.copy()

    h = window // 2
    idx = np.arange(n)
    half = np.minimum(h, np.minimum(idx, n - 1 - idx))
    c = np.concatenate([np.zeros(x.shape[:-1] + (1,)), np.cumsum(x, axis=-1)], axis=-1)
    return (c[..., idx + half + 1] - c[..., idx - half]) / (2 * half + 1)


def savgol_coefficients(config: SavGolConfig) -> np.ndarray:
    """
    Weights w such that dot(w, window_samples) is the least-squares polynomial
    (or its derivative, per sample^deriv) evaluated at the window center.
    """
    return signal.savgol_coeffs(config.window, config.poly_order, deriv=config.deriv_order, use="dot")


def savgol_filter(samples: np.ndarray, config: SavGolConfig, sample_rate: Optional[float] = None) -> np.ndarray:
    """
    Savitzky-Golay smoothing or differentiation along the last axis.

    Edge samples use the polynomial fitted to the first/last full window evaluated
    off-center. With ``config.physical_units`` the derivative is returned per
    second^deriv, which needs ``sample_rate``.
    """
    x = np.asarray(samples, dtype=float)
    if x.shape[-1] < config.window:
        raise DomainError(f"savgol_filter: record length {x.shape[-1]} is shorter than window {config.window}")
    delta = 1.0
    if config.physical_units:
        if sample_rate is None or not sample_rate > 0:
            raise DomainError("savgol_filter: physical units need a positive sample_rate")
        delta = 1.0 / sample_rate
    return signal.savgol_filter(
        x,
        config.window,
        config.poly_order,
        deriv=config.deriv_order,
        delta=delta,
        axis=-1,
        mode="interp",
    )
