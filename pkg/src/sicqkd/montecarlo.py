"""Event-driven Monte Carlo of the memory-assisted measurement node.

Rounds are not stepped one by one: waiting times are drawn from their
geometric laws, and the spin/photon state vector is only evolved when a herald
actually happens.  Heralded photons are sampled from the Bayesian posterior
over the sender's BB84 preparation, which is exact because the per-round herald
probability does not depend on the stored spin state when averaged over the
sender's uniform choice.

Each trial is driven by its own counter-based ``Philox`` stream keyed by the
seed, so trials are reproducible and independent of how they are scheduled
across worker processes.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats as sps

from .protocols import (MaMdiYield, ProtocolConfig, _herald_dark_prob, cycle_model,
                        dead_rounds, ma_mdi_qber, memory_herald_prob, n_max_rounds)
from .spin_photon import (BellLabel, PhotonState, SpinState, dephase_error_prob,
                          herald_measure, init_spin, phase_flip, readout_x,
                          reflection_probability, time_bin_photon, write_photon)

# (basis, bit) -> photon; Z encodes in the time bin, X in the relative phase
BB84_STATES = (("Z", 0), ("Z", 1), ("X", 0), ("X", 1))
_PHOTONS = {
    ("Z", 0): PhotonState(1.0, 0.0),
    ("Z", 1): PhotonState(0.0, 1.0),
    ("X", 0): time_bin_photon(0.0),
    ("X", 1): time_bin_photon(math.pi),
}
Z_THRESHOLD = 3.0


class _Uniforms:
    """Buffered uniform draws from a Philox stream."""

    def __init__(self, seed: int, block: int = 8192):
        self._gen = np.random.Generator(np.random.Philox(key=seed))
        self._block = block
        self._buf = self._gen.random(block)
        self._i = 0

    def __call__(self) -> float:
        if self._i == self._block:
            self._buf = self._gen.random(self._block)
            self._i = 0
        u = self._buf[self._i]
        self._i += 1
        return float(u)

    def geometric(self, p: float) -> int:
        """Trial index of the first success, support {1, 2, ...}."""
        if p >= 1:
            return 1
        u = 1.0 - self()  # (0, 1]
        return int(math.log(u) / math.log1p(-p)) + 1


@dataclass
class NodeState:
    """Bookkeeping for the two memory devices behind the optical switch."""

    free_at: list = field(default_factory=lambda: [0, 0])
    active: int = 0  # device that receives the next cycle
    clock: int = 0  # round at which the previous cycle ended


@dataclass
class TrialStats:
    """Counters of one or more merged trials.

    Every field is a sum (or a histogram of sums), so :func:`merge` is
    associative and commutative.
    """

    p_real: float
    p_dark: float
    n_max: float
    dead_success: int
    dead_timeout: int
    pipelining: bool
    seeds: tuple = ()
    rounds: int = 0
    cycles: int = 0
    bsm_successes: int = 0
    timeouts: int = 0
    dark_heralds: int = 0
    sum_wait: int = 0
    sum_wait_sq: int = 0
    wait_histogram: Counter = field(default_factory=Counter)
    # ratio-estimator moments over cycles: S = success flag, T = cycle length
    sum_t: int = 0
    sum_t_sq: int = 0
    sum_st: int = 0
    lag_ss: int = 0
    lag_st: int = 0
    lag_tt: int = 0
    x_sifted: int = 0
    x_errors: int = 0
    z_sifted: int = 0
    z_errors: int = 0
    bell_counts: Counter = field(default_factory=Counter)

    @property
    def p_click(self) -> float:
        return self.p_real + (1 - self.p_real) * self.p_dark

    @property
    def yield_per_round(self) -> float:
        return self.bsm_successes / self.rounds if self.rounds else math.nan

    @property
    def mean_wait(self) -> float:
        return self.sum_wait / self.cycles if self.cycles else math.nan

    @property
    def e_x(self) -> float:
        return self.x_errors / self.x_sifted if self.x_sifted else math.nan

    @property
    def e_z(self) -> float:
        return self.z_errors / self.z_sifted if self.z_sifted else math.nan

    def _key(self):
        return (self.p_real, self.p_dark, self.n_max, self.dead_success,
                self.dead_timeout, self.pipelining)


_SUM_FIELDS = ("rounds", "cycles", "bsm_successes", "timeouts", "dark_heralds",
               "sum_wait", "sum_wait_sq", "sum_t", "sum_t_sq", "sum_st",
               "lag_ss", "lag_st", "lag_tt", "x_sifted", "x_errors", "z_sifted", "z_errors")


def merge(a: TrialStats, b: TrialStats) -> TrialStats:
    """Pool two trials run with identical node parameters."""
    if a._key() != b._key():
        raise ValueError("cannot merge trials with different node parameters")
    out = TrialStats(*a._key(), seeds=tuple(sorted(a.seeds + b.seeds)))
    for name in _SUM_FIELDS:
        setattr(out, name, getattr(a, name) + getattr(b, name))
    out.wait_histogram = a.wait_histogram + b.wait_histogram
    out.bell_counts = a.bell_counts + b.bell_counts
    return out


def _draw_sent(spin: SpinState, flip_prob: float, eta_up: float, eta_down: float,
               u: float) -> tuple:
    """Sample (intended state, transmitted photon) given that the photon was kept."""
    options = []
    for state in BB84_STATES:
        for flipped in (False, True):
            w = flip_prob if flipped else 1.0 - flip_prob
            if w == 0:
                continue
            ph = _PHOTONS[state]
            if flipped:
                ph = PhotonState(ph.amp_t1, ph.amp_t0)
            w *= reflection_probability(spin, ph, eta_up, eta_down)
            if w > 0:
                options.append((w, state, ph))
    total = sum(w for w, _, _ in options)
    acc = 0.0
    for w, state, ph in options:
        acc += w
        if u * total < acc:
            return state, ph
    return options[-1][1], options[-1][2]


def _write(spin: SpinState, flip_prob: float, eta: tuple, rng: _Uniforms):
    state, ph = _draw_sent(spin, flip_prob, eta[0], eta[1], rng())
    new_spin, _ = herald_measure(write_photon(spin, ph, eta[0], eta[1]), rng())
    return state, new_spin


def _tally(st: TrialStats, a_state, b_state, label: BellLabel) -> None:
    st.bell_counts[(a_state, b_state, label.value)] += 1
    if a_state[0] != b_state[0]:
        return
    same = a_state[1] == b_state[1]
    if a_state[0] == "Z":
        st.z_sifted += 1
        st.z_errors += not same
    else:
        st.x_sifted += 1
        st.x_errors += same != (label is BellLabel.PHI_PLUS)


def simulate_cycles(p_real: float, n_max: float, n_rounds: int, seed: int, *,
                    p_dark: float = 0.0, dead: tuple = (0, 0), pipelining: bool = True,
                    round_time: float = 1.0, t2: float = math.inf,
                    misalignment: tuple = (0.0, 0.0), eta: tuple = (1.0, 0.0)) -> TrialStats:
    """Run the node for ``n_rounds`` source rounds.

    ``p_real`` is the per-round probability that a sender's photon is written
    and heralded, ``p_dark`` the probability of a spurious herald.  Only cycles
    that finish within the round budget are tallied.
    """
    if not (0 <= p_real <= 1 and 0 <= p_dark <= 1):
        raise ValueError("probabilities must lie in [0, 1]")
    if n_rounds < 0:
        raise ValueError("n_rounds must be non-negative")
    if not n_max >= 1:
        raise ValueError("n_max must be at least one round")
    rng = _Uniforms(seed)
    st = TrialStats(p_real, p_dark, n_max, dead[0], dead[1], pipelining, seeds=(seed,))
    st.rounds = n_rounds
    p = st.p_click
    if p == 0 or n_rounds == 0:
        return st
    real_frac = p_real / p
    q1 = p * (2 - p)
    node = NodeState()
    prev = None
    while True:
        dev = node.active
        start = max(node.clock, node.free_at[dev])
        g1 = rng.geometric(q1)
        k = rng.geometric(p)
        success = k <= n_max
        wait = k if success else int(n_max)
        end = start + g1 + wait
        if end > n_rounds:
            break
        # the first herald may arrive on either side; a same-round double
        # herald keeps only one photon
        a_first = rng() < 0.5
        flips = misalignment if a_first else misalignment[::-1]
        if rng() < real_frac:
            first_state, spin = _write(init_spin(), flips[0], eta, rng)
        else:
            st.dark_heralds += 1
            first_state = BB84_STATES[int(rng() * 4)]
            spin = init_spin() if rng() < 0.5 else phase_flip(init_spin())
        st.cycles += 1
        st.sum_wait += wait
        st.sum_wait_sq += wait * wait
        st.wait_histogram[wait] += 1
        if success:
            st.bsm_successes += 1
            if t2 != math.inf and rng() < dephase_error_prob(wait * round_time, t2):
                spin = phase_flip(spin)
            if rng() < real_frac:
                second_state, spin = _write(spin, flips[1], eta, rng)
            else:
                st.dark_heralds += 1
                second_state = BB84_STATES[int(rng() * 4)]
                if rng() < 0.5:
                    spin = phase_flip(spin)
            label = readout_x(spin, rng())
            a_state, b_state = ((first_state, second_state) if a_first
                                else (second_state, first_state))
            _tally(st, a_state, b_state, label)
        else:
            st.timeouts += 1
        busy = dead[0] if success else dead[1]
        if pipelining:
            node.free_at[dev] = end + busy
            node.active = 1 - dev
            node.clock = end
        else:
            node.free_at[dev] = end + busy
            node.clock = end + busy
        # the cycle's share of the timeline runs until the next cycle can start
        nxt = max(node.clock, node.free_at[node.active])
        t = min(nxt, n_rounds) - start
        s = int(success)
        st.sum_t += t
        st.sum_t_sq += t * t
        st.sum_st += s * t
        if prev is not None:
            st.lag_ss += s * prev[0]
            st.lag_st += s * prev[1] + t * prev[0]
            st.lag_tt += t * prev[1]
        prev = (s, t)
    return st


def node_parameters(cfg: ProtocolConfig, distance: float) -> dict:
    """Keyword arguments of :func:`simulate_cycles` for a configured link."""
    dev = cfg.device
    return dict(
        p_real=memory_herald_prob(cfg, distance),
        p_dark=_herald_dark_prob(cfg),
        n_max=n_max_rounds(dev),
        dead=dead_rounds(dev),
        pipelining=dev.pipelining,
        round_time=dev.round_time,
        t2=dev.t2,
        misalignment=(cfg.link.e_a, cfg.link.e_b),
        eta=(dev.eta_up, dev.eta_down),
    )


def simulate_node(cfg: ProtocolConfig, distance: float, n_rounds: int, seed: int) -> TrialStats:
    kw = node_parameters(cfg, distance)
    p_real, n_max = kw.pop("p_real"), kw.pop("n_max")
    return simulate_cycles(p_real, n_max, n_rounds, seed, **kw)


def _run_one(args):
    cfg, distance, n_rounds, seed = args
    return simulate_node(cfg, distance, n_rounds, seed)


def simulate_seeds(cfg: ProtocolConfig, distance: float, n_rounds: int,
                   seeds: Sequence[int], workers: int = 1) -> list:
    """One trial per seed, returned in seed order whatever the worker count."""
    jobs = [(cfg, distance, n_rounds, s) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(j) for j in jobs]


def merge_all(trials: Iterable[TrialStats]) -> TrialStats:
    trials = list(trials)
    if not trials:
        raise ValueError("nothing to merge")
    out = trials[0]
    for t in trials[1:]:
        out = merge(out, t)
    return out


@dataclass(frozen=True)
class Prediction:
    """Analytic expectations for the quantities tallied by a trial."""

    yield_per_round: float
    mean_wait: float
    var_wait: float
    e_x: float
    e_z: float
    # (p_click, n_max, dead_success, dead_timeout, pipelining) it was computed for
    node: Optional[tuple] = None


def predict(p_real: float, n_max: float, *, p_dark: float = 0.0, dead: tuple = (0, 0),
            pipelining: bool = True, round_time: float = 1.0, t2: float = math.inf,
            misalignment: tuple = (0.0, 0.0), eta: tuple = (1.0, 0.0)) -> Prediction:
    """Closed-form counterpart of :func:`simulate_cycles` with the same arguments."""
    p = p_real + (1 - p_real) * p_dark
    cyc = cycle_model(p, n_max, dead[0], dead[1], pipelining)
    r2 = (p_real / p) ** 2 if p > 0 else 0.0
    if cyc.success_prob > 0 and t2 != math.inf:
        coh = cyc.discounted_success(round_time / t2) / cyc.success_prob
    else:
        coh = 1.0
    e_a, e_b = misalignment
    mis = e_a * (1 - e_b) + e_b * (1 - e_a)
    floor = 0.5 * (1 - r2)
    return Prediction(cyc.yield_per_round, cyc.mean_wait, cyc.var_wait,
                      floor + r2 * (1 - coh) / 2, floor + r2 * mis,
                      (p, n_max, dead[0], dead[1], pipelining))


def predict_node(cfg: ProtocolConfig, distance: float,
                 analytic: Optional[MaMdiYield] = None) -> Prediction:
    if analytic is None:
        kw = node_parameters(cfg, distance)
        return predict(kw.pop("p_real"), kw.pop("n_max"), **kw)
    e_x, e_z = ma_mdi_qber(cfg, distance, analytic)
    c = analytic.cycle
    return Prediction(c.yield_per_round, c.mean_wait, c.var_wait, e_x, e_z,
                      (c.p, c.n_max, c.dead_success, c.dead_timeout, c.pipelining))


@dataclass(frozen=True)
class AgreementReport:
    z_scores: dict  # metric -> z or None when undefined
    status: str  # "pass", "fail" or "insufficient data"
    threshold: float = Z_THRESHOLD

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _z(observed: float, expected: float, se: float) -> float:
    diff = observed - expected
    if se > 0:
        return diff / se
    return 0.0 if abs(diff) < 1e-12 else math.copysign(math.inf, diff)


def _binomial_z(errors: int, n: int, expected: float) -> Optional[float]:
    """Normal score of an error count via the exact binomial mid-p value.

    Error rates near zero give a handful of counts, where the plain normal
    approximation overstates significance.
    """
    if n == 0:
        return None
    if expected <= 0 or expected >= 1:
        return _z(errors / n, expected, 0.0)
    mid = sps.binom.cdf(errors - 1, n, expected) + 0.5 * sps.binom.pmf(errors, n, expected)
    return float(sps.norm.ppf(min(max(mid, 1e-300), 1 - 1e-16)))


def compare_to_analytic(stats: TrialStats, expected: Prediction,
                        threshold: float = Z_THRESHOLD) -> AgreementReport:
    """z-scores of the empirical yield, mean wait and error rates."""
    if expected.node is not None:
        p, n_max, d_s, d_t, pipe = expected.node
        if not (math.isclose(p, stats.p_click, rel_tol=1e-12, abs_tol=1e-15)
                and n_max == stats.n_max and (d_s, d_t, pipe) == (
                    stats.dead_success, stats.dead_timeout, stats.pipelining)):
            raise ValueError("trial and prediction describe different nodes")
    z = {"yield": None, "mean_wait": None, "e_x": None, "e_z": None}
    n = stats.cycles
    if stats.rounds > 0 and n > 1 and stats.sum_t > 0:
        y = stats.bsm_successes / stats.sum_t
        # delta-method variance of a ratio estimator with lag-1 correction,
        # since consecutive cycles share dead time under pipelining
        g0 = (stats.bsm_successes - 2 * y * stats.sum_st + y * y * stats.sum_t_sq) / n
        g1 = (stats.lag_ss - y * stats.lag_st + y * y * stats.lag_tt) / (n - 1)
        var = max(g0 + 2 * g1, g0 / 10)
        mean_t = stats.sum_t / n
        z["yield"] = _z(y, expected.yield_per_round, math.sqrt(var / n) / mean_t)
    if n > 0:
        z["mean_wait"] = _z(stats.mean_wait, expected.mean_wait,
                            math.sqrt(expected.var_wait / n))
    z["e_x"] = _binomial_z(stats.x_errors, stats.x_sifted, expected.e_x)
    z["e_z"] = _binomial_z(stats.z_errors, stats.z_sifted, expected.e_z)
    defined = [v for v in z.values() if v is not None]
    if not defined:
        status = "insufficient data"
    elif all(abs(v) < threshold for v in defined):
        status = "pass"
    else:
        status = "fail"
    return AgreementReport(z, status, threshold)


def wait_histogram_pvalue(stats: TrialStats, min_expected: float = 5.0) -> float:
    """Chi-squared goodness of fit of the waiting-time histogram.

    Bins are merged from the left until each holds at least ``min_expected``
    expected counts.
    """
    n = stats.cycles
    if n == 0:
        raise ValueError("no cycles recorded")
    cyc = cycle_model(stats.p_click, stats.n_max)
    top = max(stats.wait_histogram)
    ks = np.arange(1, top + 1)
    expected = cyc.wait_pmf(ks) * n
    # everything beyond the largest observed wait joins the last bin
    expected[-1] += n - expected.sum()
    observed = np.array([stats.wait_histogram.get(int(k), 0) for k in ks], dtype=float)
    obs_bins, exp_bins = [], []
    o_acc = e_acc = 0.0
    for o, e in zip(observed, expected):
        o_acc += o
        e_acc += e
        if e_acc >= min_expected:
            obs_bins.append(o_acc)
            exp_bins.append(e_acc)
            o_acc = e_acc = 0.0
    if obs_bins:
        obs_bins[-1] += o_acc
        exp_bins[-1] += e_acc
    if len(obs_bins) < 2:
        return 1.0
    exp_arr = np.array(exp_bins)
    exp_arr *= sum(obs_bins) / exp_arr.sum()
    return float(sps.chisquare(obs_bins, exp_arr).pvalue)
