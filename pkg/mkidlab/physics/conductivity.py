"""
Mattis-Bardeen complex conductivity in the low-temperature, low-frequency limit.

For hbar*omega << Delta0 and k_B*T << Delta0:

    sigma1/sigma_n = (4 Delta / hbar omega) e^(-Delta0/k_B T) sinh(xi) K0(xi)
    sigma2/sigma_n = (pi Delta / hbar omega) [1 - 2 e^(-Delta0/k_B T) e^(-xi) I0(xi)]

with xi = hbar omega / (2 k_B T). Both brackets are evaluated through the scaled
Bessel functions, so no factor e^(+xi) is ever formed.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from typing import Union

import numpy as np

from mkidlab.errors import DomainError, RegimeWarning
from mkidlab.physics.bessel import bessel_i0_scaled, bessel_k0_scaled
from mkidlab.physics.constants import BCS_RATIO, PHYS

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

# hbar*omega or k_B*T above this fraction of Delta0 triggers a RegimeWarning
REGIME_FRACTION = 0.25


@dataclass(frozen=True)
class ConductivityRatios:
    sigma1_over_sigman: ArrayLike
    sigma2_over_sigman: ArrayLike


def _require_positive(**values: ArrayLike) -> None:
    for name, v in values.items():
        arr = np.asarray(v, dtype=float)
        if not np.all(np.isfinite(arr)) or np.any(arr <= 0):
            raise DomainError(f"mattis_bardeen: {name} must be finite and > 0, got {v!r}")


def conductivity_ratios(T: ArrayLike, omega: float, delta: float, delta0: float) -> ConductivityRatios:
    """Evaluate both ratios without domain checks or regime warnings (inner-loop form)."""
    T = np.asarray(T, dtype=float)
    kT = PHYS.k_B * T
    hw = PHYS.hbar * omega
    xi = hw / (2.0 * kT)
    thermal = np.exp(-delta0 / kT)

    # sinh(xi) K0(xi) = 1/2 (1 - e^(-2 xi)) e^xi K0(xi)
    sinh_k0 = 0.5 * (-np.expm1(-2.0 * xi)) * bessel_k0_scaled(xi)
    s1 = (4.0 * delta / hw) * thermal * sinh_k0
    s2 = (np.pi * delta / hw) * (1.0 - 2.0 * thermal * bessel_i0_scaled(xi))

    if s1.ndim == 0:
        return ConductivityRatios(float(s1), float(s2))
    return ConductivityRatios(s1, s2)


def mattis_bardeen(T: ArrayLike, omega: float, delta: float, delta0: float) -> ConductivityRatios:
    """
    Mattis-Bardeen sigma1/sigma_n and sigma2/sigma_n.

    Args:
        T: temperature in K (scalar or array)
        omega: angular readout frequency in rad/s
        delta: gap in eV entering the prefactors
        delta0: zero-temperature gap in eV entering the thermal factor

    Raises:
        DomainError: on non-positive or non-finite inputs

    Inputs outside hbar*omega, k_B*T << Delta0 emit a RegimeWarning and are
    still evaluated. Every temperature is checked and the warning counts the ones
    outside.
    """
    _require_positive(T=T, omega=omega, delta=delta, delta0=delta0)

    hw = PHYS.hbar * omega
    temps = np.atleast_1d(np.asarray(T, dtype=float))
    hot = PHYS.k_B * temps > REGIME_FRACTION * delta0
    if hw > REGIME_FRACTION * delta0 or np.any(hot):
        detail = ""
        if np.any(hot):
            detail = f"; {int(hot.sum())} of {hot.size} temperatures from {temps[hot].min():.4g} K up"
        warnings.warn(
            f"mattis_bardeen outside low-T/low-f regime: hbar*omega/Delta0={hw / delta0:.3g}, "
            f"k_B*T/Delta0 up to {PHYS.k_B * temps.max() / delta0:.3g}{detail}",
            RegimeWarning,
            stacklevel=2,
        )

    return conductivity_ratios(T, omega, delta, delta0)


def delta_to_tc(delta: float) -> float:
    """Critical temperature in K from 2*Delta = 3.5 k_B Tc."""
    if not np.isfinite(delta) or delta <= 0:
        raise DomainError(f"delta_to_tc: gap must be > 0 eV, got {delta!r}")
    return 2.0 * delta / (BCS_RATIO * PHYS.k_B)
