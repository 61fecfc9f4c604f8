import dataclasses
import math
import pickle

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sicqkd.channel import DetectorSpec
from sicqkd.params import DeviceParams, LinkConfig
from sicqkd.protocols import (EvaluationError, ProtocolConfig, RateCurve, RatePoint, Region,
                              apply_multiplexing, binary_entropy, classify_regions,
                              crossover_distance, cycle_model, dead_rounds, ma_mdi_qber,
                              ma_mdi_yield, multiplex_curve, n_max_rounds, rate_curve,
                              skr_bb84, skr_ma_mdi, skr_mdi)

IDEAL = ProtocolConfig(link=LinkConfig(detector=DetectorSpec(efficiency=1.0, dark_rate=0.0)))


def synthetic(slope, d=np.arange(0, 200, 1.0)):
    pts = tuple(RatePoint(float(x), 10 ** (6 + slope * x), 0.1, 0, 0, 1e-6) for x in d)
    return RateCurve(pts, "synthetic")


def test_binary_entropy_examples():
    assert binary_entropy(0) == 0 and binary_entropy(1) == 0
    assert binary_entropy(0.5) == 1
    assert binary_entropy(0.11) == pytest.approx(0.4999, abs=1e-4)
    with pytest.raises(ValueError):
        binary_entropy(1.5)


@given(st.floats(0, 1))
def test_binary_entropy_symmetric(p):
    assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-12)


def test_bb84_lossless_limit():
    pt = skr_bb84(IDEAL, 0.0)
    assert pt.skr == pytest.approx(IDEAL.rate / 2, rel=1e-15)
    assert pt.qber_x == 0


def test_bb84_zero_distance_is_finite():
    cfg = ProtocolConfig()
    curve = rate_curve("bb84", cfg, np.arange(0, 701, 1.0))
    zero = curve.zero_distance()
    # root found on the implemented formula, 1 km grid
    assert zero == 166.0
    assert 100 <= zero <= 400


@given(st.floats(0, 300), st.sampled_from(["bb84", "mdi"]))
def test_source_rate_linearity(d, proto):
    from sicqkd.protocols import PROTOCOLS
    a = PROTOCOLS[proto](dataclasses.replace(IDEAL, source_rate=1e6), d)
    b = PROTOCOLS[proto](dataclasses.replace(IDEAL, source_rate=2e6), d)
    assert b.skr == pytest.approx(2 * a.skr, rel=1e-12)


def test_mdi_ideal_and_slope():
    assert skr_mdi(IDEAL, 0).skr == pytest.approx(IDEAL.rate * 0.5, rel=1e-15)
    cfg = ProtocolConfig()
    r50, r100 = skr_mdi(cfg, 50).skr, skr_mdi(cfg, 100).skr
    slope = (math.log10(r100) - math.log10(r50)) / 50
    assert slope == pytest.approx(-0.03, rel=0.01)


def test_cycle_model_examples():
    c = cycle_model(0.1, 10)
    assert c.success_prob == pytest.approx(1 - 0.9**10)
    assert c.success_prob == pytest.approx(0.6513, abs=5e-5)
    c = cycle_model(1.0, 3)
    assert (c.success_prob, c.mean_first_rounds, c.mean_wait) == (1.0, 1.0, 1.0)
    assert c.mean_cycle_rounds == 2.0
    assert cycle_model(0.0, 10).yield_per_round == 0.0


def test_cycle_moments_against_direct_sums():
    for p, n in [(0.5, 5), (0.1, 10), (0.01, 100), (0.3, 1)]:
        k = np.arange(1, n + 1)
        pmf = p * (1 - p) ** (k - 1)
        pmf[-1] = (1 - p) ** (n - 1)
        c = cycle_model(p, n)
        assert c.mean_wait == pytest.approx((k * pmf).sum(), rel=1e-12)
        assert c.var_wait == pytest.approx((k**2 * pmf).sum() - (k * pmf).sum() ** 2, rel=1e-9, abs=1e-12)
        assert np.allclose(c.wait_pmf(k), pmf)
        succ = p * (1 - p) ** (k - 1)
        assert c.mean_wait_success == pytest.approx((k * succ).sum() / succ.sum(), rel=1e-12)


def test_pipelined_deterministic_schedule():
    # p = 1: every cycle is two rounds; dead time 5 alternates durations 2 and 5
    c = cycle_model(1.0, 3, dead_success=5, dead_timeout=5, pipelining=True)
    assert c.mean_cycle_rounds == pytest.approx(3.5)
    c = cycle_model(1.0, 3, dead_success=5, dead_timeout=5, pipelining=False)
    assert c.mean_cycle_rounds == pytest.approx(7.0)


def _schedule_oracle(p, n, d_s, d_t, cycles, seed):
    """Sampled two-device schedule: cycle k waits for its device to be free."""
    rng = np.random.default_rng(seed)
    q1 = p * (2 - p)
    first = rng.geometric(q1, cycles)
    wait = rng.geometric(p, cycles)
    ok = wait <= n
    length = first + np.minimum(wait, n)
    dead = np.where(ok, d_s, d_t)
    free = [0, 0]
    clock = 0
    for i in range(cycles):
        dev = i % 2
        start = max(clock, free[dev])
        end = start + length[i]
        free[dev] = end + dead[i]
        clock = end
    return clock / cycles, ok.mean()


@pytest.mark.parametrize("p,n,d_s,d_t", [(0.5, 5, 5, 3), (0.3, 4, 9, 2), (0.9, 2, 6, 6)])
def test_pipelined_mean_cycle_matches_sampled_schedule(p, n, d_s, d_t):
    mean, _ = _schedule_oracle(p, n, d_s, d_t, 200_000, 11)
    c = cycle_model(p, n, d_s, d_t, pipelining=True)
    assert c.mean_cycle_rounds == pytest.approx(mean, rel=5e-3)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 1), st.integers(1, 200), st.integers(0, 12), st.integers(0, 12))
def test_pipelining_only_hides_dead_time(p, n, d_s, d_t):
    on = cycle_model(p, n, d_s, d_t, True)
    off = cycle_model(p, n, d_s, d_t, False)
    bare = on.mean_first_rounds + on.mean_wait
    assert bare - 1e-9 <= on.mean_cycle_rounds <= off.mean_cycle_rounds + 1e-9


def test_dead_and_cutoff_rounds():
    dev = DeviceParams()
    assert dead_rounds(dev) == (5, 3)
    assert n_max_rounds(dev) == 44964
    assert n_max_rounds(dataclasses.replace(dev, memory_cutoff=math.inf)) == math.inf


def test_ma_mdi_examples():
    y = ma_mdi_yield(ProtocolConfig(), 0.0)
    assert y.p_real**2 == pytest.approx(0.0128, rel=0.01)
    dev = DeviceParams(t1=1e9, t2=1e9)
    cfg = ProtocolConfig(device=dev, link=LinkConfig(detector=DetectorSpec(dark_rate=0.0)))
    e_x, e_z = ma_mdi_qber(cfg, 100.0)
    assert e_x < 1e-6 and e_z == 0
    # nearly instant partner herald
    cfg = ProtocolConfig(link=LinkConfig(detector=DetectorSpec(dark_rate=0.0)),
                         device=DeviceParams(eta_w=1.0))
    assert ma_mdi_qber(cfg, 0.0)[0] < 1e-3


def test_ma_mdi_below_mdi_at_zero():
    cfg = ProtocolConfig()
    assert 0 < skr_ma_mdi(cfg, 0).skr < skr_mdi(cfg, 0).skr


def test_tau_pi_ordering_at_zero():
    rates = [skr_ma_mdi(ProtocolConfig().replace(tau_pi=t), 0.0).skr
             for t in (10e-9, 25e-9, 50e-9, 100e-9)]
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_region_one_slope():
    cfg = ProtocolConfig()
    r20, r80 = skr_ma_mdi(cfg, 20).skr, skr_ma_mdi(cfg, 80).skr
    slope = (math.log10(r80) - math.log10(r20)) / 60
    assert slope == pytest.approx(-0.015, rel=0.3)


def test_synthetic_regions():
    s = classify_regions(synthetic(-0.3 / 20))
    assert set(s.labels) == {Region.I}
    s = classify_regions(synthetic(-0.3 / 10))
    assert set(s.labels) == {Region.II}
    s = classify_regions(synthetic(-0.3 / 3))
    assert set(s.labels) == {Region.III}


def test_default_curve_has_ordered_regions():
    curve = rate_curve("ma_mdi", ProtocolConfig(), np.arange(0, 701, 1.0))
    labels = [p.region for p in curve.points]
    order = [Region.I, Region.II, Region.III, Region.ZERO]
    ranks = [order.index(lab) for lab in labels]
    assert ranks == sorted(ranks)
    assert set(labels) == set(order)


def test_crossover_examples():
    a = synthetic(-0.02)
    assert crossover_distance(a, a) == 0
    twice = RateCurve(tuple(dataclasses.replace(p, skr=2 * p.skr) for p in a.points), "x")
    assert crossover_distance(twice, a) == 0
    assert crossover_distance(a, twice) is None
    with pytest.raises(ValueError):
        crossover_distance(a, synthetic(-0.02, np.arange(0, 100, 1.0)))


def test_multiplexing_examples():
    pt = skr_ma_mdi(ProtocolConfig(), 50.0)
    assert apply_multiplexing(pt, 1, 1) == pt
    big = apply_multiplexing(pt, 88, 2)
    assert big.skr == pytest.approx(176 * pt.skr, rel=1e-15)
    assert (big.qber_x, big.qber_z) == (pt.qber_x, pt.qber_z)
    with pytest.raises(ValueError):
        apply_multiplexing(pt, 0, 1)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 100), st.integers(1, 4))
def test_multiplex_keeps_zero_distance(nw, npol):
    curve = rate_curve("ma_mdi", ProtocolConfig(), np.arange(150, 300, 5.0))
    assert multiplex_curve(curve, nw, npol).zero_distance() == curve.zero_distance()


def test_workers_do_not_change_curve():
    d = np.arange(0, 400, 7.0)
    one = rate_curve("ma_mdi", ProtocolConfig(), d, workers=1)
    many = rate_curve("ma_mdi", ProtocolConfig(), d, workers=3)
    assert one == many


def test_rate_point_invariants():
    with pytest.raises(ValueError):
        RatePoint(0, -1, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        synthetic(-0.01, np.array([0.0, 2.0, 1.0]))


def test_evaluation_error_names_point_and_pickles():
    err = EvaluationError("ma_mdi", 12.5, "bad")
    assert "ma_mdi" in str(err) and "12.5" in str(err)
    again = pickle.loads(pickle.dumps(err))
    assert str(again) == str(err)


@given(st.floats(0, 700))
def test_rate_points_are_physical(d):
    for fn in (skr_bb84, skr_mdi, skr_ma_mdi):
        pt = fn(ProtocolConfig(), d)
        assert pt.skr >= 0
        assert 0 <= pt.qber_x <= 0.5 and 0 <= pt.qber_z <= 0.5


def test_digest_is_stable_and_sensitive():
    assert ProtocolConfig().digest() == ProtocolConfig().digest()
    assert ProtocolConfig().digest() != ProtocolConfig().replace(t2=0.1).digest()
