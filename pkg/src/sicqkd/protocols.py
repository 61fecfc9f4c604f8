"""Asymptotic secure-key-rate models for BB84, MDI-QKD and memory-assisted MDI-QKD.

All three protocols assume ideal single-photon sources.  Distances are total
Alice-to-Bob kilometres; for the MDI variants the node sits at the midpoint.

Memory-assisted node
--------------------
Two SiC devices sit behind an optical switch.  A *cycle* of the node is:

1. both fibres are listened to until the first herald (per-round probability
   ``1 - (1 - p)**2``); the switch then toggles so that the loaded memory
   faces the other sender;
2. the loaded memory waits at most ``n_max = floor(cutoff / round_time)``
   rounds for the partner herald (per-round probability ``p``);
3. success triggers the spin readout (BSM) and a reset; a timeout only resets.

With pipelining the two devices alternate cycles, so the readout/reset dead
time of one device is hidden behind the next cycle of the other; a cycle
cannot start before its device is free again, which makes the mean cycle
length an expectation over a small Markov chain of leftover dead time.
Without pipelining dead time is serialised after every cycle.  Dead times are rounded up to whole rounds.

The BSM ceiling follows the state-vector model: each write succeeds with at
most 1/4, so two writes give 1/16 = 6.25 %.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .channel import (FiberSpec, db_to_efficiency, dark_click_prob, repetition_rate,
                      transmittance)
from .params import DeviceParams, LinkConfig


class Region(str, enum.Enum):
    I = "I"
    II = "II"
    III = "III"
    ZERO = "zero"


@dataclass(frozen=True)
class ProtocolConfig:
    device: DeviceParams = field(default_factory=DeviceParams)
    link: LinkConfig = field(default_factory=LinkConfig)
    source_rate: Optional[float] = None  # Hz; None: pi-pulse-limited rate

    def __post_init__(self):
        if self.source_rate is not None and not self.source_rate > 0:
            raise ValueError("source rate must be positive")

    @property
    def rate(self) -> float:
        if self.source_rate is not None:
            return self.source_rate
        return repetition_rate(self.device.tau_pi, self.device.tau_p)

    @property
    def f(self) -> float:
        return self.link.f

    @property
    def memory_cutoff(self) -> float:
        return self.device.cutoff_time

    def replace(self, **device_changes) -> "ProtocolConfig":
        return dataclasses.replace(self, device=dataclasses.replace(self.device, **device_changes))

    def digest(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True, default=repr)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RatePoint:
    distance: float
    skr: float
    yield_per_round: float
    qber_x: float
    qber_z: float
    cycle_time: float
    region: Optional[Region] = None

    def __post_init__(self):
        if self.skr < 0:
            raise ValueError("secure key rate must be non-negative")


@dataclass(frozen=True)
class RegionSummary:
    boundary_1_2: Optional[float]
    boundary_2_3: Optional[float]
    labels: tuple
    slopes: tuple
    tolerance: float
    zero_distance: Optional[float]

    @property
    def has_regions(self) -> bool:
        return any(lab is not Region.ZERO for lab in self.labels)


@dataclass(frozen=True)
class RateCurve:
    points: tuple
    protocol: str
    digest: str = ""
    label: str = ""

    def __post_init__(self):
        d = [p.distance for p in self.points]
        if any(b <= a for a, b in zip(d, d[1:])):
            raise ValueError("distances must be strictly increasing")

    @property
    def distances(self) -> np.ndarray:
        return np.array([p.distance for p in self.points])

    @property
    def skr(self) -> np.ndarray:
        return np.array([p.skr for p in self.points])

    def zero_distance(self) -> Optional[float]:
        """First grid distance with zero key rate, or None."""
        for p in self.points:
            if p.skr == 0:
                return p.distance
        return None


def binary_entropy(p: float) -> float:
    if not 0 <= p <= 1:
        raise ValueError("probability outside [0, 1]")
    if p == 0 or p == 1:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def _key_fraction(e_phase: float, e_bit: float, f: float) -> float:
    return max(0.0, 1.0 - binary_entropy(e_phase) - f * binary_entropy(e_bit))


def _herald_dark_prob(cfg: ProtocolConfig) -> float:
    # two detectors per measurement, integrated over the optical pulse
    return dark_click_prob(cfg.link.detector, cfg.device.tau_p, n_detectors=2)


def skr_bb84(cfg: ProtocolConfig, distance: float) -> RatePoint:
    link = cfg.link
    eta = transmittance(FiberSpec(link.alpha_ob, distance)) * link.detector.efficiency
    p_dark = _herald_dark_prob(cfg)
    p_click = eta + (1 - eta) * p_dark
    e = (link.misalignment * eta + 0.5 * (1 - eta) * p_dark) / p_click
    kf = max(0.0, 1.0 - (1 + link.f) * binary_entropy(e))
    yld = 0.5 * p_click
    return RatePoint(distance, cfg.rate * yld * kf, yld, e, e, 1.0 / cfg.rate)


def skr_mdi(cfg: ProtocolConfig, distance: float) -> RatePoint:
    link = cfg.link
    arm_a, arm_b = link.arms(distance)
    eta_a = transmittance(arm_a) * link.detector.efficiency
    eta_b = transmittance(arm_b) * link.detector.efficiency
    p_dark = _herald_dark_prob(cfg)
    p_a = eta_a + (1 - eta_a) * p_dark
    p_b = eta_b + (1 - eta_b) * p_dark
    both_real = (eta_a / p_a) * (eta_b / p_b)
    e_x = 0.5 * (1 - both_real)
    e_z = 0.5 * (1 - both_real) + both_real * link.misalignment
    yld = 0.5 * p_a * p_b  # linear-optics BSM identifies half of the Bell states
    kf = _key_fraction(e_x, e_z, link.f)
    return RatePoint(distance, cfg.rate * yld * kf, yld, e_x, e_z, 1.0 / cfg.rate)


# --------------------------------------------------------------------------
# memory-assisted node


@dataclass(frozen=True)
class CycleModel:
    """Closed-form statistics of the two-device toggling node.

    ``wait`` is the number of rounds the loaded memory spends waiting for the
    partner herald; it is truncated-geometric on [1, n_max] (a timeout is
    recorded as n_max).
    """

    p: float
    n_max: float  # may be math.inf
    dead_success: int
    dead_timeout: int
    pipelining: bool
    success_prob: float
    mean_first_rounds: float
    mean_wait: float
    var_wait: float
    mean_wait_success: float
    mean_cycle_rounds: float

    @property
    def yield_per_round(self) -> float:
        if self.mean_cycle_rounds == math.inf or self.p == 0:
            return 0.0
        return self.success_prob / self.mean_cycle_rounds

    def wait_pmf(self, k: np.ndarray) -> np.ndarray:
        """Probability that the wait phase lasts exactly ``k`` rounds."""
        k = np.asarray(k, dtype=float)
        q = 1.0 - self.p
        pmf = self.p * q ** (k - 1)
        if math.isfinite(self.n_max):
            pmf = np.where(k == self.n_max, q ** (self.n_max - 1), pmf)
            pmf = np.where(k > self.n_max, 0.0, pmf)
        return np.where(k < 1, 0.0, pmf)

    def discounted_success(self, rate_per_round: float) -> float:
        """E[exp(-rate * wait); success], the success-weighted decay factor."""
        return _discounted_success(self.p, self.n_max, rate_per_round)


def _pow_q(p: float, n: float) -> float:
    """(1 - p)**n, robust for tiny p and huge or infinite n."""
    if p >= 1:
        return 0.0 if n > 0 else 1.0
    if n == math.inf:
        return 0.0 if p > 0 else 1.0
    return math.exp(n * math.log1p(-p))


def _discounted_success(p: float, n: float, s: float) -> float:
    # sum_{k=1}^{n} p (1-p)^{k-1} e^{-s k}
    if p == 0:
        return 0.0
    if s == 0:
        return 1.0 - _pow_q(p, n)
    log_b = -s + (math.log1p(-p) if p < 1 else -math.inf)
    b_n = 0.0 if n == math.inf else math.exp(n * log_b)
    return p * math.exp(-s) * (1.0 - b_n) / (-math.expm1(log_b))


def _joint_cycle_pmf(p: float, n_max: float, upto: int) -> tuple[np.ndarray, np.ndarray]:
    """P(cycle = c, success) and P(cycle = c, timeout) for c = 0..upto."""
    size = upto + 1
    q = 1.0 - p
    q1 = p * (2.0 - p)
    g = np.arange(size)
    first = np.where(g >= 1, q1 * (1.0 - q1) ** np.maximum(g - 1, 0), 0.0)
    w_ok = np.where((g >= 1) & (g <= n_max), p * q ** np.maximum(g - 1, 0), 0.0)
    w_to = np.zeros(size)
    if math.isfinite(n_max) and n_max <= upto:
        w_to[int(n_max)] = q ** n_max
    return np.convolve(first, w_ok)[:size], np.convolve(first, w_to)[:size]


def _pipelined_mean_cycle(p: float, n_max: float, mean_cycle: float, ps: float,
                          dead_success: int, dead_timeout: int) -> float:
    """Exact long-run mean cycle length when two devices alternate.

    The state carried between cycles is the dead time the *next* device still
    has left when a cycle starts; it lives on {0, ..., max dead time}.
    """
    dmax = max(dead_success, dead_timeout)
    if dmax == 0:
        return mean_cycle
    f_ok, f_to = _joint_cycle_pmf(p, n_max, dmax)
    tail_ok = max(ps - f_ok.sum(), 0.0)
    tail_to = max((1.0 - ps) - f_to.sum(), 0.0)
    trans = np.zeros((dmax + 1, dmax + 1))
    for r in range(dmax + 1):
        for pmf, tail, dead in ((f_ok, tail_ok, dead_success), (f_to, tail_to, dead_timeout)):
            trans[r, dead] += tail
            for c in range(dmax + 1):
                nxt = dead if c >= r else max(0, dead - (r - c))
                trans[r, nxt] += pmf[c]
    # stationary distribution: left eigenvector for eigenvalue one
    a = np.vstack([trans.T - np.eye(dmax + 1), np.ones(dmax + 1)])
    rhs = np.zeros(dmax + 2)
    rhs[-1] = 1.0
    pi = np.linalg.lstsq(a, rhs, rcond=None)[0]
    cdf = np.cumsum(f_ok + f_to)
    # E[max(C, r)] = E[C] + sum_{j<r} P(C <= j)
    extra = np.array([cdf[:r].sum() for r in range(dmax + 1)])
    return mean_cycle + float(pi @ extra)


def cycle_model(p: float, n_max: float, dead_success: int = 0, dead_timeout: int = 0,
                pipelining: bool = True) -> CycleModel:
    """Closed-form cycle statistics for per-round herald probability ``p``."""
    if not 0 <= p <= 1:
        raise ValueError("herald probability outside [0, 1]")
    if not n_max >= 1:
        raise ValueError("n_max must be at least one round")
    if p == 0:
        return CycleModel(p, n_max, dead_success, dead_timeout, pipelining,
                          0.0, math.inf, 0.0, 0.0, 0.0, math.inf)
    q = 1.0 - p
    qn = _pow_q(p, n_max)
    ps = 1.0 - qn
    q1 = p * (2.0 - p)
    mean_first = 1.0 / q1
    # E[min(G, n)] and E[min(G, n)^2] for G ~ Geometric(p) on {1, 2, ...}
    mean_wait = ps / p
    second = _second_moment_truncated(p, n_max)
    var_wait = max(second - mean_wait**2, 0.0)
    # E[G; G <= n] / P(G <= n)
    if math.isfinite(n_max):
        mean_wait_success = ((1 - (n_max + 1) * qn + n_max * qn * q) / p) / ps
    else:
        mean_wait_success = 1.0 / p
    mean_cycle = mean_first + mean_wait
    if pipelining:
        mean_cycle = _pipelined_mean_cycle(p, n_max, mean_cycle, ps, dead_success, dead_timeout)
    else:
        mean_cycle += ps * dead_success + (1 - ps) * dead_timeout
    return CycleModel(p, n_max, dead_success, dead_timeout, pipelining, ps, mean_first,
                      mean_wait, var_wait, mean_wait_success, mean_cycle)


def _second_moment_truncated(p: float, n: float) -> float:
    # E[X^2] = sum_{k>=0} (2k+1) P(X > k), with P(min(G, n) > k) = q^k for k < n
    q = 1.0 - p
    if n == math.inf:
        return (2.0 - p) / p**2
    qn = _pow_q(p, n)
    s0 = (1 - qn) / p
    s1 = (q - n * qn + (n - 1) * qn * q) / p**2
    return 2 * s1 + s0


@dataclass(frozen=True)
class MaMdiYield:
    distance: float
    p_real: float
    p_dark: float
    p_click: float
    round_time: float
    cycle: CycleModel
    retrieval_factor: float
    dephase_error: float  # E[phase-flip prob | success]

    @property
    def real_fraction(self) -> float:
        return self.p_real / self.p_click if self.p_click > 0 else 0.0

    @property
    def yield_per_round(self) -> float:
        return self.cycle.yield_per_round

    @property
    def bsm_rate(self) -> float:
        return self.yield_per_round / self.round_time

    @property
    def cycle_time(self) -> float:
        return self.cycle.mean_cycle_rounds * self.round_time


def memory_herald_prob(cfg: ProtocolConfig, distance: float) -> float:
    """Per-round probability that one sender's photon is written and heralded."""
    arm, _ = cfg.link.arms(distance)
    return transmittance(arm) * db_to_efficiency(cfg.link.node.switch_loss) * cfg.device.eta_w


def dead_rounds(device: DeviceParams) -> tuple[int, int]:
    """(after success, after timeout) dead time in whole rounds."""
    tau = device.round_time
    # readout needs two pi/2 pulses around the optical readout
    after_success = device.tau_r + device.tau_pi + device.init_time
    eps = 1e-9
    return math.ceil(after_success / tau - eps), math.ceil(device.init_time / tau - eps)


def n_max_rounds(device: DeviceParams) -> float:
    cutoff = device.cutoff_time
    if cutoff == math.inf:
        return math.inf
    return max(1, math.floor(cutoff / device.round_time + 1e-9))


def ma_mdi_yield(cfg: ProtocolConfig, distance: float) -> MaMdiYield:
    dev = cfg.device
    tau = dev.round_time
    p_real = memory_herald_prob(cfg, distance)
    p_dark = _herald_dark_prob(cfg)
    p_click = p_real + (1 - p_real) * p_dark
    d_s, d_t = dead_rounds(dev)
    cyc = cycle_model(p_click, n_max_rounds(dev), d_s, d_t, dev.pipelining)
    if cyc.success_prob > 0:
        coh = cyc.discounted_success(tau / dev.t2) / cyc.success_prob
        ret = dev.eta_r0 * cyc.discounted_success(tau / dev.t1) / cyc.success_prob
    else:
        coh, ret = 1.0, dev.eta_r0
    return MaMdiYield(distance, p_real, p_dark, p_click, tau, cyc, ret, (1.0 - coh) / 2)


def ma_mdi_qber(cfg: ProtocolConfig, distance: float,
                wait: Optional[MaMdiYield] = None) -> tuple[float, float]:
    """(e_x, e_z) of sifted BSM events.

    Any event with a dark-count herald carries a random outcome.  Dephasing of
    the stored spin only flips X-basis results; Z-basis results only suffer
    from sender misalignment.
    """
    if wait is None:
        wait = ma_mdi_yield(cfg, distance)
    both_real = wait.real_fraction**2
    floor = 0.5 * (1 - both_real)
    e_x = floor + both_real * wait.dephase_error
    e_z = floor + both_real * cfg.link.misalignment
    return e_x, e_z


def skr_ma_mdi(cfg: ProtocolConfig, distance: float) -> RatePoint:
    y = ma_mdi_yield(cfg, distance)
    e_x, e_z = ma_mdi_qber(cfg, distance, y)
    kf = _key_fraction(e_x, e_z, cfg.link.f)
    skr = y.bsm_rate * y.retrieval_factor * kf
    return RatePoint(distance, skr, y.yield_per_round, e_x, e_z, y.cycle_time)


PROTOCOLS: dict[str, Callable[[ProtocolConfig, float], RatePoint]] = {
    "bb84": skr_bb84,
    "mdi": skr_mdi,
    "ma_mdi": skr_ma_mdi,
}


def apply_multiplexing(point: RatePoint, n_wavelength: int, n_polarization: int) -> RatePoint:
    """Scale the key rate by the number of parallel channels."""
    if n_wavelength < 1 or n_polarization < 1:
        raise ValueError("channel counts must be >= 1")
    return dataclasses.replace(point, skr=point.skr * n_wavelength * n_polarization)


def multiplex_curve(curve: RateCurve, n_wavelength: int, n_polarization: int) -> RateCurve:
    pts = tuple(apply_multiplexing(p, n_wavelength, n_polarization) for p in curve.points)
    return dataclasses.replace(curve, points=pts)


# --------------------------------------------------------------------------
# curve assembly and analysis


class EvaluationError(ValueError):
    """A rate evaluation failed; carries the protocol and distance."""

    def __init__(self, protocol: str, distance: float, message: str):
        super().__init__(protocol, distance, message)
        self.protocol, self.distance, self.message = protocol, distance, message

    def __str__(self):
        return f"{self.protocol} at {self.distance:g} km: {self.message}"


def _evaluate(args):
    protocol, cfg, distance = args
    try:
        return PROTOCOLS[protocol](cfg, distance)
    except (ValueError, ArithmeticError) as exc:
        raise EvaluationError(protocol, distance, str(exc)) from exc


def rate_curve(protocol: str, cfg: ProtocolConfig, distances: Sequence[float],
               workers: int = 1, label: str = "", alpha: Optional[float] = None) -> RateCurve:
    """Evaluate ``protocol`` on a distance grid and attach region labels.

    Points are computed independently and assembled by index, so the result
    does not depend on ``workers``.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}")
    tasks = [(protocol, cfg, float(d)) for d in distances]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_evaluate, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        points = [_evaluate(t) for t in tasks]
    curve = RateCurve(tuple(points), protocol, cfg.digest(), label or protocol)
    return label_regions(curve, cfg.link.alpha_ob if alpha is None else alpha)


def _log_slopes(d: np.ndarray, skr: np.ndarray) -> np.ndarray:
    slopes = np.full(len(d), np.nan)
    pos = np.flatnonzero(skr > 0)
    if len(pos) >= 2:
        slopes[pos] = np.gradient(np.log10(skr[pos]), d[pos])
    return slopes


def classify_regions(curve: RateCurve, alpha: float = 0.3, tolerance: float = 0.3) -> RegionSummary:
    """Split a curve into memory-, dephasing- and noise-dominated bands.

    Reference slopes are -alpha/20 (region I, one half-link per round) and
    -alpha/10 (region II) decades per km; anything steeper than twice the
    region-II slope is region III.  Each point is first put in the band whose
    reference it is nearest to; the boundaries are then the first distances
    from which every later positive point lies in region II-or-later,
    respectively region III, which makes the bands contiguous.
    """
    d, skr = curve.distances, curve.skr
    n = len(d)
    zero_idx = np.flatnonzero(skr <= 0)
    zero_distance = float(d[zero_idx[0]]) if len(zero_idx) else None
    slopes = _log_slopes(d, skr)
    pos = np.flatnonzero(skr > 0)
    if len(pos) < 2:
        labels = tuple(Region.ZERO for _ in range(n))
        return RegionSummary(None, None, labels, tuple(slopes), tolerance, zero_distance)
    s1, s2 = -alpha / 20.0, -alpha / 10.0
    raw = np.empty(n, dtype=int)  # 1, 2, 3
    for i in pos:
        s = slopes[i]
        if s < 2 * s2:
            raw[i] = 3
        elif abs(s - s1) <= tolerance * abs(s1):
            raw[i] = 1
        elif abs(s - s2) <= tolerance * abs(s2):
            raw[i] = 2
        else:
            # between bands: nearest reference (region III reference is 2*s2)
            refs = np.array([s1, s2, 2 * s2])
            raw[i] = int(np.argmin(np.abs(refs - s))) + 1
    raw_pos = raw[pos]
    # suffix minimum: from index j on every positive point has label >= k
    suffix_min = np.minimum.accumulate(raw_pos[::-1])[::-1]
    b12 = b23 = None
    j2 = np.flatnonzero(suffix_min >= 2)
    j3 = np.flatnonzero(suffix_min >= 3)
    if len(j2):
        b12 = float(d[pos[j2[0]]])
    if len(j3):
        b23 = float(d[pos[j3[0]]])
    labels = []
    for i in range(n):
        if skr[i] <= 0:
            labels.append(Region.ZERO)
        elif b23 is not None and d[i] >= b23:
            labels.append(Region.III)
        elif b12 is not None and d[i] >= b12:
            labels.append(Region.II)
        else:
            labels.append(Region.I)
    return RegionSummary(b12, b23, tuple(labels), tuple(slopes), tolerance, zero_distance)


def label_regions(curve: RateCurve, alpha: float = 0.3) -> RateCurve:
    summary = classify_regions(curve, alpha)
    pts = tuple(dataclasses.replace(p, region=lab) for p, lab in zip(curve.points, summary.labels))
    return dataclasses.replace(curve, points=pts)


def crossover_distance(curve_a: RateCurve, curve_b: RateCurve, persist: int = 3) -> Optional[float]:
    """Smallest distance where ``a`` delivers key at a rate >= ``b`` for ``persist`` more points."""
    da, db = curve_a.distances, curve_b.distances
    if len(da) != len(db) or not np.allclose(da, db, rtol=0, atol=1e-9):
        raise ValueError("curves must share a distance grid")
    a, b = curve_a.skr, curve_b.skr
    n = len(a)
    for i in range(n):
        if a[i] > 0 and a[i] >= b[i] and all(a[j] >= b[j] for j in range(i + 1, min(n, i + 1 + persist))):
            return float(da[i])
    return None
