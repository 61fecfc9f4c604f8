"""Parameter records for the SiC memory node and the optical link.

Defaults describe a vanadium-in-SiC device at the telecom O-band.  All
values are SI (seconds, hertz) except fibre attenuation (dB/km) and insertion
losses (dB).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Optional

from .channel import DetectorSpec, FiberSpec, NodeOptics, repetition_rate
from .spin_photon import DecoherenceParams


@dataclass(frozen=True)
class DeviceParams:
    t1: float = 30.0
    t2: float = 10e-3
    t1n: float = 30.0
    t2n: float = 10.0
    t_en: float = 10e-6
    tau_r: float = 400e-9
    tau_pi: float = 100e-9
    tau_init: Optional[float] = None  # None: tau_r + tau_pi
    eta_up: float = 1.0
    eta_down: float = 0.0
    gamma_linewidth: float = 100e6
    tau_p: float = 11.2e-9
    eta_w: float = 0.13
    eta_r0: float = 1.0
    memory_cutoff: Optional[float] = None  # None: t2
    pipelining: bool = True

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or v is None:
                continue
            if math.isnan(v) or v < 0:
                raise ValueError(f"{f.name} must be non-negative")
        for name in ("t1", "t2", "t1n", "t2n", "t_en", "tau_r", "tau_pi", "tau_p"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("eta_up", "eta_down", "eta_w", "eta_r0"):
            if getattr(self, name) > 1:
                raise ValueError(f"{name} must not exceed 1")
        if self.t2 > 2 * self.t1:
            raise ValueError("t2 cannot exceed 2*t1")
        if self.memory_cutoff is not None and self.memory_cutoff <= 0:
            raise ValueError("memory_cutoff must be positive")

    @property
    def init_time(self) -> float:
        return self.tau_r + self.tau_pi if self.tau_init is None else self.tau_init

    @property
    def cutoff_time(self) -> float:
        return self.t2 if self.memory_cutoff is None else self.memory_cutoff

    @property
    def round_time(self) -> float:
        return 1.0 / repetition_rate(self.tau_pi, self.tau_p)

    @property
    def decoherence(self) -> DecoherenceParams:
        return DecoherenceParams(self.t1, self.t2, self.t1n, self.t2n, self.t_en)


@dataclass(frozen=True)
class LinkConfig:
    alpha_ob: float = 0.3  # dB/km
    detector: DetectorSpec = field(default_factory=DetectorSpec)
    node: NodeOptics = field(default_factory=NodeOptics)
    e_a: float = 0.0
    e_b: float = 0.0
    f: float = 1.16

    def __post_init__(self):
        if self.alpha_ob < 0:
            raise ValueError("fibre attenuation must be non-negative")
        if not (0 <= self.e_a <= 1 and 0 <= self.e_b <= 1):
            raise ValueError("misalignment probabilities must lie in [0, 1]")
        if not self.f >= 1:
            raise ValueError("error-correction inefficiency must be >= 1")

    def arms(self, total_km: float) -> tuple[FiberSpec, FiberSpec]:
        """Alice and Bob fibres for a symmetric link of total length ``total_km``."""
        half = total_km / 2.0
        return FiberSpec(self.alpha_ob, half), FiberSpec(self.alpha_ob, half)

    @property
    def misalignment(self) -> float:
        """Probability that exactly one of the two senders' qubits is flipped."""
        return self.e_a * (1 - self.e_b) + self.e_b * (1 - self.e_a)
