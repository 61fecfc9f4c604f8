"""Exact state-vector model of one electron spin and one time-bin photon.

Basis ordering for joint states is (down t0, down t1, up t0, up t1).  The
write map keeps the photon only in the combinations where it is reflected
off the cavity, i.e. ``a|t0>`` survives with the spin down and ``b|t1>`` with
the spin up.  Reflection contrast defaults to unity; the two reflectivities
can be degraded for sensitivity studies.

Amplitudes are plain Python complex numbers: the Monte Carlo node simulator
calls these functions once per heralded event, and numpy's per-call overhead
dominates at this size.
"""

from __future__ import annotations

import cmath
import enum
import math
from dataclasses import dataclass
from typing import Optional

NORM_TOL = 1e-10
_SQRT_HALF = math.sqrt(0.5)


class Port(enum.Enum):
    PLUS = "plus_port"
    MINUS = "minus_port"


class BellLabel(enum.Enum):
    PHI_PLUS = "Phi+"
    PHI_MINUS = "Phi-"


def _check_norm(norm_sq: float, what: str) -> None:
    if abs(norm_sq - 1.0) > NORM_TOL:
        raise ValueError(f"{what} is not normalized (|psi|^2 = {norm_sq!r})")


@dataclass(frozen=True)
class SpinState:
    amp_down: complex
    amp_up: complex

    def __post_init__(self):
        _check_norm(abs(self.amp_down) ** 2 + abs(self.amp_up) ** 2, "spin state")

    @property
    def relative_phase(self) -> float:
        """arg(amp_up / amp_down) in [0, 2pi)."""
        return cmath.phase(self.amp_up / self.amp_down) % (2 * math.pi)


@dataclass(frozen=True)
class PhotonState:
    amp_t0: complex
    amp_t1: complex

    def __post_init__(self):
        _check_norm(abs(self.amp_t0) ** 2 + abs(self.amp_t1) ** 2, "photon state")


@dataclass(frozen=True)
class JointState:
    down_t0: complex
    down_t1: complex
    up_t0: complex
    up_t1: complex

    def __post_init__(self):
        _check_norm(sum(abs(a) ** 2 for a in self.amplitudes), "joint state")

    @property
    def amplitudes(self) -> tuple:
        return (self.down_t0, self.down_t1, self.up_t0, self.up_t1)


@dataclass(frozen=True)
class HeraldOutcome:
    detector_id: Optional[Port]
    success: bool

    def __post_init__(self):
        if self.success != (self.detector_id is not None):
            raise ValueError("detector_id is set exactly when the herald succeeded")


@dataclass(frozen=True)
class DecoherenceParams:
    t1_amplitude: float = 30.0
    t2_dephase: float = 10e-3
    t1_nuclear: float = 30.0
    t2_nuclear: float = 10.0
    conv_time_e_n: float = 10e-6

    def __post_init__(self):
        if min(self.t1_amplitude, self.t2_dephase, self.t1_nuclear,
               self.t2_nuclear, self.conv_time_e_n) <= 0:
            raise ValueError("decoherence times must be positive")
        if self.t2_dephase > 2 * self.t1_amplitude:
            raise ValueError("T2 cannot exceed 2*T1")


def _normalized_spin(down: complex, up: complex) -> SpinState:
    scale = max(abs(down), abs(up))
    if scale == 0:
        raise ValueError("projection onto a zero-probability branch")
    down, up = down / scale, up / scale
    norm = math.sqrt(abs(down) ** 2 + abs(up) ** 2)
    return SpinState(down / norm, up / norm)


def init_spin() -> SpinState:
    return SpinState(_SQRT_HALF, _SQRT_HALF)


def time_bin_photon(phase: float) -> PhotonState:
    """(|t0> + e^{i phase}|t1>)/sqrt(2)."""
    return PhotonState(_SQRT_HALF, _SQRT_HALF * cmath.exp(1j * phase))


def _reflected(spin: SpinState, photon: PhotonState, eta_up: float, eta_down: float):
    # coupled reflectivity eta_up, uncoupled eta_down; the mid-sequence
    # pi-pulse swaps which spin component is resonant with which time bin
    hi, lo = math.sqrt(eta_up), math.sqrt(eta_down)
    a, b = photon.amp_t0, photon.amp_t1
    return (spin.amp_down * a * hi, spin.amp_down * b * lo,
            spin.amp_up * a * lo, spin.amp_up * b * hi)


def reflection_probability(spin: SpinState, photon: PhotonState,
                           eta_up: float = 1.0, eta_down: float = 0.0) -> float:
    """Probability that the photon is reflected (kept) by the spin-dependent cavity."""
    return sum(abs(x) ** 2 for x in _reflected(spin, photon, eta_up, eta_down))


def write_photon(spin: SpinState, photon: PhotonState,
                 eta_up: float = 1.0, eta_down: float = 0.0) -> JointState:
    """Post-selected joint state after reflection and the mid-sequence pi-pulse."""
    amps = _reflected(spin, photon, eta_up, eta_down)
    scale = max(abs(x) for x in amps)
    if scale == 0:
        raise ValueError("photon cannot be reflected for this spin state")
    # rescale first so tiny reflectivities do not underflow the norm
    amps = [x / scale for x in amps]
    norm = math.sqrt(sum(abs(x) ** 2 for x in amps))
    return JointState(*(x / norm for x in amps))


def mzi_probabilities(joint: JointState) -> dict:
    """Output-slot and port probabilities of the imbalanced interferometer.

    The middle slot (t0 via the long arm overlapping t1 via the short arm)
    realises the X-basis measurement and carries half of the probability.
    """
    d0, d1, u0, u1 = joint.amplitudes
    early = (abs(d0) ** 2 + abs(u0) ** 2) / 4
    late = (abs(d1) ** 2 + abs(u1) ** 2) / 4
    mid_plus = (abs(d0 + d1) ** 2 + abs(u0 + u1) ** 2) / 4
    mid_minus = (abs(d0 - d1) ** 2 + abs(u0 - u1) ** 2) / 4
    return {
        "early_plus": early, "early_minus": early,
        "middle_plus": mid_plus, "middle_minus": mid_minus,
        "late_plus": late, "late_minus": late,
    }


def herald_measure(joint: JointState, rng_draw: float) -> tuple[SpinState, HeraldOutcome]:
    """Project the photon on the X basis and compensate the minus-port phase.

    ``rng_draw`` is a uniform number in [0, 1) that selects the port with its
    Born probability (conditioned on a middle-slot detection).
    """
    d0, d1, u0, u1 = joint.amplitudes
    p_plus = abs(d0 + d1) ** 2 + abs(u0 + u1) ** 2
    p_minus = abs(d0 - d1) ** 2 + abs(u0 - u1) ** 2
    if rng_draw < p_plus / (p_plus + p_minus):
        return _normalized_spin(d0 + d1, u0 + u1), HeraldOutcome(Port.PLUS, True)
    # Z correction on the spin removes the sign picked up at the minus port
    return _normalized_spin(d0 - d1, -(u0 - u1)), HeraldOutcome(Port.MINUS, True)


def write_branches(spin: SpinState, photon: PhotonState,
                   eta_up: float = 1.0, eta_down: float = 0.0) -> list:
    """Complete outcome map of one write attempt.

    Returns ``(label, probability, spin_or_None)`` for the exhaustive set of
    outcomes: ``lost`` (not reflected), ``unheralded`` (reflected but in an
    outer interferometer slot), and ``plus``/``minus`` heralds carrying the
    corrected spin state.  Probabilities sum to one.
    """
    p_refl = reflection_probability(spin, photon, eta_up, eta_down)
    branches = [("lost", 1.0 - p_refl, None)]
    if p_refl == 0:
        return branches + [("unheralded", 0.0, None), ("plus", 0.0, None), ("minus", 0.0, None)]
    joint = write_photon(spin, photon, eta_up, eta_down)
    probs = mzi_probabilities(joint)
    side = probs["early_plus"] + probs["early_minus"] + probs["late_plus"] + probs["late_minus"]
    branches.append(("unheralded", p_refl * side, None))
    for label, key, draw in (("plus", "middle_plus", 0.0), ("minus", "middle_minus", 1.0)):
        p = p_refl * probs[key]
        state = herald_measure(joint, draw)[0] if p > 0 else None
        branches.append((label, p, state))
    return branches


def write_success_probability(spin: SpinState, photon: PhotonState,
                              eta_up: float = 1.0, eta_down: float = 0.0) -> float:
    """Probability of a heralded write: reflection times middle-slot detection."""
    return sum(p for label, p, _ in write_branches(spin, photon, eta_up, eta_down)
               if label in ("plus", "minus"))


def async_bsm_accumulate(spin: SpinState, photon2: PhotonState,
                         rng_draw: float) -> tuple[SpinState, HeraldOutcome]:
    """Write a second photon into an already loaded spin; phases add."""
    return herald_measure(write_photon(spin, photon2), rng_draw)


def readout_x(spin: SpinState, rng_draw: float) -> BellLabel:
    p_plus = abs(spin.amp_down + spin.amp_up) ** 2 / 2
    return BellLabel.PHI_PLUS if rng_draw < p_plus else BellLabel.PHI_MINUS


def phase_flip(spin: SpinState) -> SpinState:
    return SpinState(spin.amp_down, -spin.amp_up)


def dephase_error_prob(elapsed: float, t2: float) -> float:
    """Phase-flip probability after storing for ``elapsed`` seconds."""
    if elapsed < 0:
        raise ValueError("elapsed time must be non-negative")
    if t2 <= 0:
        raise ValueError("T2 must be positive")
    return -math.expm1(-elapsed / t2) / 2


def dephase(spin: SpinState, elapsed: float, t2: float, rng_draw: float) -> SpinState:
    """Apply the phase-flip channel as a single stochastic trajectory."""
    if rng_draw < dephase_error_prob(elapsed, t2):
        return phase_flip(spin)
    return spin


def retrieval_efficiency(elapsed: float, params: DecoherenceParams, eta_r0: float = 1.0) -> float:
    if elapsed < 0:
        raise ValueError("elapsed time must be non-negative")
    return eta_r0 * math.exp(-elapsed / params.t1_amplitude)


def timing_windows(tau_pi: float, tau_p: float, tau_r: float) -> tuple[float, float, float]:
    """Writing, reading and initialisation times of the spin memory."""
    if min(tau_pi, tau_p, tau_r) <= 0:
        raise ValueError("durations must be positive")
    return 2 * (tau_p + tau_pi), tau_r + tau_pi, tau_r + tau_pi
