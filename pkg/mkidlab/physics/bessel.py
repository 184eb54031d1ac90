"""
Exponentially scaled modified Bessel functions of order zero.

The Mattis-Bardeen ratios need I0 and K0 at xi = hbar*omega / (2 k_B T), which at
GHz frequencies and millikelvin temperatures ranges from ~0.1 to several hundred.
Working with e^-x I0(x) and e^x K0(x) keeps every intermediate finite; the
Cephes-based ``scipy.special.i0e``/``k0e`` provide both forms directly.
"""

from __future__ import annotations

from typing import Union

import numpy as np
from scipy import special

from mkidlab.errors import DomainError

ArrayLike = Union[float, np.ndarray]


def _checked(x: ArrayLike, name: str, allow_zero: bool) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name}: argument must be finite, got {x!r}")
    bad = arr < 0 if allow_zero else arr <= 0
    if np.any(bad):
        bound = "x >= 0" if allow_zero else "x > 0"
        raise DomainError(f"{name}: requires {bound}, got min {float(np.min(arr))!r}")
    return arr


def _unwrap(result: np.ndarray, x: ArrayLike) -> ArrayLike:
    return float(result) if np.ndim(x) == 0 else result


def bessel_i0_scaled(x: ArrayLike) -> ArrayLike:
    """Return e^-x * I0(x) for x >= 0."""
    arr = _checked(x, "bessel_i0_scaled", allow_zero=True)
    return _unwrap(special.i0e(arr), x)


def bessel_k0_scaled(x: ArrayLike) -> ArrayLike:
    """Return e^x * K0(x) for x > 0 (K0 diverges logarithmically at 0)."""
    arr = _checked(x, "bessel_k0_scaled", allow_zero=False)
    return _unwrap(special.k0e(arr), x)
