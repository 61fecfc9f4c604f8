"""Cavity-QED figures of merit for a colour centre in an optical cavity.

All mode volumes are carried in units of (lambda/n)**3.  Use
:meth:`CavityParams.from_absolute_volume` when the volume is known in m**3.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class CavityParams:
    wavelength_freespace: float  # m
    refractive_index: float
    quality_factor: float
    mode_volume: float  # (lambda/n)**3
    dipole_overlap: float = 1.0

    def __post_init__(self):
        if not self.wavelength_freespace > 0:
            raise ValueError("wavelength must be positive")
        if not self.refractive_index >= 1:
            raise ValueError("refractive index must be >= 1")
        if not self.quality_factor > 0:
            raise ValueError("quality factor must be positive")
        if not self.mode_volume > 0:
            raise ValueError("mode volume must be positive")
        if not 0 <= self.dipole_overlap <= 1:
            raise ValueError("dipole overlap must lie in [0, 1]")

    @classmethod
    def from_absolute_volume(cls, wavelength_freespace, refractive_index,
                             quality_factor, volume_m3, dipole_overlap=1.0):
        """Build from a mode volume given in cubic metres."""
        unit = (wavelength_freespace / refractive_index) ** 3
        return cls(wavelength_freespace, refractive_index, quality_factor,
                   volume_m3 / unit, dipole_overlap)


@dataclass(frozen=True)
class DefectOptics:
    branching_ratio: float  # gamma_ZPL / gamma_tot
    zpl_wavelength: float = 1278e-9  # m

    def __post_init__(self):
        if not 0 < self.branching_ratio <= 1:
            raise ValueError("branching ratio must lie in (0, 1]")


@dataclass(frozen=True)
class CavityResponse:
    reflect: float
    transmit: float
    scatter: float


def optical_enhancement(cavity: CavityParams) -> float:
    """Q/V with V in (lambda/n)**3, i.e. the cavity's optical enhancement."""
    if cavity.quality_factor <= 0 or cavity.mode_volume <= 0:
        raise ValueError("Q and V must be positive")
    return cavity.quality_factor / cavity.mode_volume


def spontaneous_emission_factor(cavity: CavityParams, defect: DefectOptics) -> float:
    upsilon = optical_enhancement(cavity)
    return 3.0 / (4.0 * math.pi**2) * upsilon * defect.branching_ratio * cavity.dipole_overlap**2


def cooperativity(f_se: float) -> float:
    if f_se < 0:
        raise ValueError("F_SE must be non-negative")
    return f_se / 2.0


def cavity_response(c: float) -> CavityResponse:
    """Resonant reflection, transmission and scattering of a symmetric lossless cavity.

    Valid far below saturation.  The three fractions sum to one.
    """
    if c < 0 or math.isnan(c):
        raise ValueError("cooperativity must be non-negative")
    denom = 2.0 * c + 1.0
    transmit = 1.0 / denom**2
    scatter = 4.0 * c / denom**2
    reflect = (2.0 * c / denom) ** 2
    return CavityResponse(reflect=reflect, transmit=transmit, scatter=scatter)
