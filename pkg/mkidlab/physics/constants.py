"""Physical constants in the eV-K-s unit system used throughout the package."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysConstants:
    k_B: float = 8.617333262e-5  # eV/K
    hbar: float = 6.582119569e-16  # eV*s


PHYS = PhysConstants()

# Bardeen-Cooper-Schrieffer weak-coupling ratio, 2*Delta = BCS_RATIO * k_B * Tc
BCS_RATIO = 3.5

# Energy of the near-infrared photons used for the single-photon runs (eV)
IR_PHOTON_EV = 0.8
