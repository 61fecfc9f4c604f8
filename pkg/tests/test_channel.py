import math

import pytest
from hypothesis import given, strategies as st

from sicqkd.channel import (DetectorSpec, FiberSpec, dark_click_prob, db_to_efficiency,
                            repetition_rate, transmittance)


def test_transmittance_examples():
    assert transmittance(FiberSpec(0.3, 0)) == 1
    assert transmittance(FiberSpec(0.3, 100)) == pytest.approx(1e-3, rel=1e-12)
    assert transmittance(FiberSpec(0.2, 100)) == pytest.approx(1e-2, rel=1e-12)


def test_db_examples():
    assert db_to_efficiency(0) == 1
    assert db_to_efficiency(0.8) == pytest.approx(0.8318, abs=5e-5)
    assert db_to_efficiency(0.6) == pytest.approx(0.8710, abs=5e-5)
    with pytest.raises(ValueError):
        db_to_efficiency(-1)


def test_dark_click_examples():
    assert dark_click_prob(DetectorSpec(dark_rate=0), 11.2e-9) == 0
    assert dark_click_prob(DetectorSpec(dark_rate=100), 11.2e-9) == pytest.approx(1.12e-6, rel=1e-6)
    assert dark_click_prob(DetectorSpec(dark_rate=100), 1.0) == pytest.approx(1.0, abs=1e-40)
    # two detectors double the rate
    two = dark_click_prob(DetectorSpec(dark_rate=100, background_rate=50), 1e-8, n_detectors=2)
    assert two == pytest.approx(-math.expm1(-300e-8))
    with pytest.raises(ValueError):
        dark_click_prob(DetectorSpec(), 0)


def test_repetition_examples():
    assert repetition_rate(100e-9, 11.2e-9) == pytest.approx(4.496e6, rel=1e-4)
    assert repetition_rate(100e-9, 0) == pytest.approx(5e6, rel=1e-15)
    assert repetition_rate(10e-9, 11.2e-9) == pytest.approx(23.58e6, rel=1e-3)
    with pytest.raises(ValueError):
        repetition_rate(0, 1e-9)


def test_invalid_specs():
    with pytest.raises(ValueError):
        FiberSpec(-0.1, 10)
    with pytest.raises(ValueError):
        DetectorSpec(efficiency=1.2)
    with pytest.raises(ValueError):
        DetectorSpec(dark_rate=-1)


@given(st.floats(0, 1), st.floats(0, 500), st.floats(0, 500))
def test_transmittance_multiplicative(alpha, l1, l2):
    whole = transmittance(FiberSpec(alpha, l1 + l2))
    parts = transmittance(FiberSpec(alpha, l1)) * transmittance(FiberSpec(alpha, l2))
    assert whole == pytest.approx(parts, rel=1e-9, abs=1e-300)


@given(st.floats(0, 1e6), st.floats(1e-12, 1.0))
def test_dark_prob_is_probability(rate, window):
    p = dark_click_prob(DetectorSpec(dark_rate=rate), window)
    assert 0 <= p <= 1
