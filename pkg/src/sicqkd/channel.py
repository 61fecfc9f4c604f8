"""Link-budget primitives: fibre loss, detectors, node optics and timing."""

from __future__ import annotations

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class FiberSpec:
    attenuation: float  # dB/km
    length: float  # km

    def __post_init__(self):
        if self.attenuation < 0 or self.length < 0:
            raise ValueError("fibre attenuation and length must be non-negative")


@dataclass(frozen=True)
class DetectorSpec:
    efficiency: float = 0.85
    dark_rate: float = 100.0  # Hz
    timing_jitter: float = 50e-12  # s, FWHM
    background_rate: float = 0.0  # Hz

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise ValueError("detector efficiency must lie in [0, 1]")
        if self.dark_rate < 0 or self.background_rate < 0:
            raise ValueError("count rates must be non-negative")


@dataclass(frozen=True)
class NodeOptics:
    circulator_loss: float = 0.8  # dB
    switch_loss: float = 0.6  # dB
    switch_rise_fall: float = 8e-9  # s
    switch_min_pulse: float = 90e-9  # s

    def __post_init__(self):
        if min(self.circulator_loss, self.switch_loss,
               self.switch_rise_fall, self.switch_min_pulse) < 0:
            raise ValueError("node optics losses and times must be non-negative")


def db_to_efficiency(loss: float) -> float:
    if loss < 0:
        raise ValueError("insertion loss must be non-negative")
    return 10.0 ** (-loss / 10.0)


def transmittance(fiber: FiberSpec) -> float:
    return 10.0 ** (-fiber.attenuation * fiber.length / 10.0)


def dark_click_prob(det: DetectorSpec, window: float, n_detectors: int = 1) -> float:
    """Probability that at least one of ``n_detectors`` fires spuriously in ``window``.

    Uses the exact Poisson form so large rates saturate at 1.
    """
    if not window > 0:
        raise ValueError("detection window must be positive")
    rate = (det.dark_rate + det.background_rate) * n_detectors
    return -math.expm1(-rate * window)


def repetition_rate(tau_pi: float, tau_p: float) -> float:
    """Upper bound on the photon repetition rate set by the write sequence."""
    if tau_pi <= 0 or tau_p < 0:
        raise ValueError("pulse durations must be positive")
    return 1.0 / (2.0 * tau_pi + 2.0 * tau_p)
