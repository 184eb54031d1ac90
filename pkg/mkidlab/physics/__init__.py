"""
Physics core: constants, scaled modified Bessel functions, Mattis-Bardeen
conductivity ratios and the gap / critical-temperature relation.
"""

from mkidlab.physics.bessel import bessel_i0_scaled, bessel_k0_scaled
from mkidlab.physics.conductivity import (
    ConductivityRatios,
    delta_to_tc,
    mattis_bardeen,
)
from mkidlab.physics.constants import PHYS, PhysConstants

__all__ = [
    "PHYS",
    "PhysConstants",
    "ConductivityRatios",
    "bessel_i0_scaled",
    "bessel_k0_scaled",
    "mattis_bardeen",
    "delta_to_tc",
]
