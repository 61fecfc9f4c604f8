"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line that is echoed in the terminal summary,
whether or not the assertion holds.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE
from sicqkd.channel import repetition_rate
from sicqkd.cli import main
from sicqkd.device import (CavityParams, DefectOptics, cavity_response, cooperativity,
                           optical_enhancement, spontaneous_emission_factor)
from sicqkd.montecarlo import compare_to_analytic, predict, simulate_cycles
from sicqkd.protocols import (ProtocolConfig, Region, classify_regions, crossover_distance,
                              multiplex_curve, rate_curve, skr_ma_mdi, skr_mdi)
from sicqkd.spin_photon import (PhotonState, async_bsm_accumulate, herald_measure, init_spin,
                                time_bin_photon, write_branches, write_photon)

GRID = np.arange(0, 701, 1.0)
ALPHA = 0.3


def record(n, ok, detail):
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def test_1_cavity_unitarity():
    t0 = time.perf_counter()
    worst = 0.0
    for c in np.logspace(-6, 9, 10_000):
        r = cavity_response(float(c))
        worst = max(worst, abs(r.reflect + r.transmit + r.scatter - 1))
    dt = time.perf_counter() - t0
    ok = worst < 1e-12 and dt < 1.0
    assert record(1, ok, f"max |R+T+S-1| = {worst:.2e} (< 1e-12), {dt:.3f} s (< 1 s)")


def test_2_enhancement_benchmark():
    cav = CavityParams(1278e-9, 2.6, 6.3e5, 2.1)
    upsilon = optical_enhancement(cav)
    c = cooperativity(spontaneous_emission_factor(cav, DefectOptics(0.09)))
    ok = upsilon == 3e5 and 1e2 <= c <= 1.1e3
    assert record(2, ok, f"Upsilon = {upsilon:.6g} (== 3e5), C = {c:.1f} (in [100, 1100])")


def test_3_repetition_bound():
    r = repetition_rate(100e-9, 11.2e-9)
    r0 = repetition_rate(100e-9, 0.0)
    ok = 4.45e6 <= r <= 4.55e6 and r0 == 5e6
    assert record(3, ok, f"{r / 1e6:.4f} MHz (in [4.45, 4.55]), tau_p = 0: {r0 / 1e6:.6g} MHz (== 5)")


def test_4_phase_bookkeeping():
    rng = np.random.default_rng(2024)
    worst_phase = worst_port = 0.0
    for a, b in rng.uniform(0, 2 * math.pi, size=(1000, 2)):
        joint = write_photon(init_spin(), time_bin_photon(a))
        s_plus, _ = herald_measure(joint, 0.0)
        s_minus, _ = herald_measure(joint, 1.0 - 1e-12)
        worst_port = max(worst_port, abs(s_plus.amp_down - s_minus.amp_down),
                         abs(s_plus.amp_up - s_minus.amp_up))
        for s in (s_plus, s_minus):
            final, _ = async_bsm_accumulate(s, time_bin_photon(b), rng.random())
            diff = (final.relative_phase - a - b) % (2 * math.pi)
            worst_phase = max(worst_phase, min(diff, 2 * math.pi - diff))
    ok = worst_phase < 1e-10 and worst_port < 1e-10
    assert record(4, ok, f"max phase error {worst_phase:.1e} rad, max port mismatch {worst_port:.1e} (< 1e-10)")


def test_5_write_ceiling():
    t0 = time.perf_counter()
    photons = [time_bin_photon(0.0), time_bin_photon(math.pi), time_bin_photon(math.pi / 2),
               time_bin_photon(3 * math.pi / 2), PhotonState(1, 0), PhotonState(0, 1)]
    labels = ("lost", "unheralded", "plus", "minus")
    cum, states = [], []
    for ph in photons:
        branches = {label: (p, s) for label, p, s in write_branches(init_spin(), ph)}
        cum.append(np.cumsum([branches[lab][0] for lab in labels]))
        states.append((branches["plus"][1], branches["minus"][1]))
    cum = np.array(cum)
    rng = np.random.default_rng(5)
    n = 1_000_000
    which = rng.integers(0, len(photons), n)
    u = rng.random(n)
    outcome = (u[:, None] >= cum[which]).sum(axis=1)  # index into labels
    hits = int(np.isin(outcome, (2, 3)).sum())
    # both ports leave the same corrected spin
    same = all(abs(a.amp_down - b.amp_down) < 1e-12 and abs(a.amp_up - b.amp_up) < 1e-12
               for a, b in states)
    est = hits / n
    sigma = math.sqrt(0.25 * 0.75 / n)
    dt = time.perf_counter() - t0
    ok = abs(est - 0.25) < 3 * sigma and same and dt < 60
    assert record(5, ok, f"herald-and-correct fraction {est:.5f} vs 0.25 "
                         f"(3 sigma = {3 * sigma:.5f}), ports agree: {same}, {dt:.1f} s")


def test_6_analytic_vs_monte_carlo():
    t0 = time.perf_counter()
    parts, ok = [], True
    for p, n in [(0.5, 5), (0.1, 10), (0.01, 100)]:
        kw = dict(dead=(5, 3), round_time=1.0, t2=20.0 * n)
        stats = simulate_cycles(p, n, 1_000_000, seed=6, **kw)
        report = compare_to_analytic(stats, predict(p, n, **kw))
        z = {k: report.z_scores[k] for k in ("yield", "mean_wait", "e_x")}
        good = all(v is not None and abs(v) < 3 for v in z.values())
        ok &= good
        parts.append(f"({p}, {n}): " + " ".join(f"{k} z={v:+.2f}" for k, v in z.items()))
    dt = time.perf_counter() - t0
    ok &= dt < 300
    assert record(6, ok, "; ".join(parts) + f"; {dt:.0f} s (< 300 s)")


def _median_slope(summary, region):
    s = [sl for sl, lab in zip(summary.slopes, summary.labels) if lab is region]
    return float(np.median(s)) if s else math.nan


def test_7_region_structure():
    curve = rate_curve("ma_mdi", ProtocolConfig(), GRID)
    s = classify_regions(curve, ALPHA)
    order = [Region.I, Region.II, Region.III, Region.ZERO]
    ranks = [order.index(lab) for lab in s.labels]
    contiguous = ranks == sorted(ranks) and {Region.I, Region.II, Region.III} <= set(s.labels)
    s1, s2 = _median_slope(s, Region.I), _median_slope(s, Region.II)
    ok1 = abs(s1 + ALPHA / 20) <= 0.3 * ALPHA / 20
    ok2 = abs(s2 + ALPHA / 10) <= 0.3 * ALPHA / 10
    ok = contiguous and ok1 and ok2
    assert record(7, ok, f"I->II at {s.boundary_1_2:g} km, II->III at {s.boundary_2_3:g} km; "
                         f"slope I {s1:.4f} (target -0.0150 +-30%), slope II {s2:.4f} (target -0.0300 +-30%)")


def test_8_t2_shift():
    edges = []
    for t2 in (10e-3, 100e-3, 1.0, 10.0):
        curve = rate_curve("ma_mdi", ProtocolConfig().replace(t2=t2), GRID)
        edges.append(classify_regions(curve, ALPHA).boundary_2_3)
    shifts = [b - a for a, b in zip(edges, edges[1:])]
    ok = 30 <= shifts[0] <= 70 and all(s > 0 for s in shifts[1:])
    assert record(8, ok, f"II->III edges {edges} km; shifts {shifts} "
                         f"(first must be 50 +- 20, later ones > 0)")


@pytest.fixture(scope="module")
def reference_curves():
    cfg = ProtocolConfig()  # 4.5 MHz source for the references
    return {name: rate_curve(name, cfg, GRID) for name in ("bb84", "mdi")}


def test_9a_mdi_zero_before_bb84(reference_curves):
    z_mdi = reference_curves["mdi"].zero_distance()
    z_bb84 = reference_curves["bb84"].zero_distance()
    ok = z_mdi is not None and z_bb84 is not None and z_mdi < z_bb84
    assert record("9a", ok, f"MDI zero at {z_mdi} km, BB84 zero at {z_bb84} km (need MDI first)")


def test_9b_short_pulses_beat_bb84(reference_curves):
    fast = rate_curve("ma_mdi", ProtocolConfig().replace(tau_pi=10e-9), GRID)
    x = crossover_distance(fast, reference_curves["bb84"])
    ok = x is not None
    assert record("9b", ok, f"MA-MDI (tau_pi = 10 ns) crosses above BB84 at {x} km")


def test_9c_memory_node_below_mdi_at_zero():
    cfg = ProtocolConfig()
    ma, mdi = skr_ma_mdi(cfg, 0.0).skr, skr_mdi(cfg, 0.0).skr
    ok = ma < mdi
    assert record("9c", ok, f"L = 0: MA-MDI {ma:.4g} bit/s < MDI {mdi:.4g} bit/s")


def test_10_multiplexing():
    curve = rate_curve("ma_mdi", ProtocolConfig(), GRID)
    big = multiplex_curve(curve, 88, 2)
    exact = all(b.skr == a.skr * 88 * 2 for a, b in zip(curve.points, big.points))
    scaled = all(b.skr / a.skr == pytest.approx(176, rel=1e-15)
                 for a, b in zip(curve.points, big.points) if a.skr > 0)
    same_zero = big.zero_distance() == curve.zero_distance()
    ok = exact and scaled and same_zero
    assert record(10, ok, f"x176 on every nonzero point: {scaled}; zero distance "
                          f"{curve.zero_distance()} -> {big.zero_distance()} km")


def test_11_determinism(tmp_path):
    outs = []
    for i, workers in enumerate((1, 1, 4)):
        out = tmp_path / f"run{i}"
        assert main(["sweep", "--out", str(out), "--workers", str(workers), "--no-plots"]) == 0
        outs.append({p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix == ".csv"})
    ok = outs[0] == outs[1] == outs[2] and len(outs[0]) >= 3
    assert record(11, ok, f"{len(outs[0])} CSV files byte-identical across 2 serial runs and 4 workers: {ok}")
