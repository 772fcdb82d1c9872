import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from skg.gaussian import (
    PowerAllocation,
    achievable_rate,
    dof,
    dof_upper,
    gauss_upper_bound,
    layer_rates,
    layer_rates_from_interference,
    rate_from_interference,
)
from skg.profiles import GainProfile, StateProfile, db_to_linear

from .oracles import achievable_direct, layer_rates_direct, upper_bound_direct

H = (0.1, 1.0, 10.0)
THIRDS = StateProfile.uniform(3)


@st.composite
def instances(draw, max_layers=5):
    s = draw(st.integers(1, max_layers))
    db = sorted(draw(st.lists(st.floats(-10, 30), min_size=s + 1, max_size=s + 1, unique=True)))
    assume(all(b - a > 1e-3 for a, b in zip(db, db[1:])))
    p_max = draw(st.sampled_from([0.01, 1.0, 10.0, 100.0]))
    w = np.array(draw(st.lists(st.floats(0.01, 1), min_size=s + 1, max_size=s + 1)))
    frac = np.array(draw(st.lists(st.floats(0, 1), min_size=s, max_size=s)))
    powers = p_max * frac / frac.sum() if frac.sum() > 0 else np.zeros(s)
    return GainProfile.from_db(db, p_max), StateProfile(w / w.sum()), PowerAllocation(powers, p_max)


def test_profiles_validate():
    with pytest.raises(ValueError):
        StateProfile([0.5, 0.4])
    with pytest.raises(ValueError):
        StateProfile([1.2, -0.2])
    with pytest.raises(ValueError):
        GainProfile([1.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        GainProfile([0.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        GainProfile([1.0, 2.0], -1.0)
    p = StateProfile([0.2, 0.3, 0.5])
    assert p.thetas[1:] == pytest.approx([0.2, 0.5])
    assert p.weights[1:] == pytest.approx([0.16, 0.25])
    assert db_to_linear([10.0, 0.0]).tolist() == [10.0, 1.0]


def test_allocation_interference():
    a = PowerAllocation([9.0, 1.0], 10.0)
    assert a.interference.tolist() == [10.0, 1.0, 0.0]
    assert a.fractions.tolist() == [0.9, 0.1]
    assert PowerAllocation.from_interference([10.0, 1.0, 0.0]).powers == (9.0, 1.0)
    with pytest.raises(ValueError):
        PowerAllocation([6.0, 5.0], 10.0)
    with pytest.raises(ValueError):
        PowerAllocation([-1.0, 1.0])


def test_layer_rates_two_forms_agree():
    gains = GainProfile(H, 10.0)
    alloc = PowerAllocation([9.0, 1.0], 10.0)
    r = layer_rates(alloc, gains)
    assert r == pytest.approx(layer_rates_direct(H, [9.0, 1.0]), rel=1e-12)
    assert r == pytest.approx(layer_rates_from_interference([10.0, 1.0, 0.0], gains), rel=1e-12)


def test_layer_rates_degenerate_cases():
    gains = GainProfile([1e-12, 4.0], 3.0)
    r = layer_rates(PowerAllocation([3.0]), gains)[0]
    assert r == pytest.approx(0.5 * math.log2(1 + 12.0), rel=1e-9)
    assert not np.any(layer_rates(PowerAllocation([0.0, 0.0], 10.0), GainProfile(H, 10.0)))
    with pytest.raises(ValueError):
        layer_rates(PowerAllocation([1.0]), GainProfile(H, 10.0))


def test_achievable_rate_examples():
    gains = GainProfile(H, 10.0)
    alloc = PowerAllocation([9.0, 1.0], 10.0)
    assert achievable_rate(alloc, gains, THIRDS) == pytest.approx(
        achievable_direct(H, [1 / 3] * 3, [9.0, 1.0]), rel=1e-12)
    assert achievable_rate(alloc, gains, StateProfile([0.0, 0.0, 1.0])) == 0.0
    tiny = GainProfile(H, 1e-12)
    assert achievable_rate(PowerAllocation([1e-12, 0.0]), tiny, THIRDS) < 1e-11


def test_complex_channel_doubles_rates():
    gains = GainProfile(H, 10.0)
    alloc = PowerAllocation([9.0, 1.0], 10.0)
    assert achievable_rate(alloc, gains, THIRDS, complex_channel=True) == pytest.approx(
        2 * achievable_rate(alloc, gains, THIRDS), rel=1e-14)
    assert gauss_upper_bound(gains, THIRDS, True) == pytest.approx(2 * gauss_upper_bound(gains, THIRDS), rel=1e-14)


def test_upper_bound_examples():
    assert gauss_upper_bound(GainProfile(H, 0.0), THIRDS) == 0.0
    single = gauss_upper_bound(GainProfile([2.0], 5.0), StateProfile([1.0]))
    assert single == pytest.approx(0.5 * math.log2(1 + 10 / 11), rel=1e-14)
    assert gauss_upper_bound(GainProfile(H, 10.0), THIRDS) == pytest.approx(
        upper_bound_direct(H, [1 / 3] * 3, 10.0), rel=1e-12)


@given(instances())
@settings(max_examples=100, deadline=None)
def test_rates_nonnegative_and_bounded(case):
    gains, profile, alloc = case
    r = layer_rates(alloc, gains)
    assert np.all(r >= -1e-15)
    assert np.all(r[np.asarray(alloc.powers) > 1e-9] > 0)
    rate = achievable_rate(alloc, gains, profile)
    assert rate == pytest.approx(rate_from_interference(alloc.interference, gains, profile), rel=1e-9, abs=1e-15)
    assert rate <= gauss_upper_bound(gains, profile) + 1e-12
    assert rate == pytest.approx(achievable_direct(gains.h, profile.deltas, list(alloc.powers)), rel=1e-9, abs=1e-15)


@given(st.floats(0.01, 100), st.lists(st.floats(0, 10), min_size=1, max_size=6))
@settings(max_examples=60, deadline=None)
def test_successive_decoding_telescopes(h, powers):
    p = np.asarray(powers)
    interference = np.concatenate((np.cumsum(p[::-1])[::-1][1:], [0.0]))
    total = np.sum(0.5 * np.log2(1 + h * p / (1 + h * interference)))
    assert total == pytest.approx(0.5 * math.log2(1 + h * p.sum()), rel=1e-12, abs=1e-15)


def test_dof_examples():
    assert dof(THIRDS, [0.1, 1.0, 2.0]) == pytest.approx(19 / 45, abs=1e-15)
    assert dof(THIRDS, [1e-9, 1.0, 2.0]) == pytest.approx(4 / 9, abs=1e-9)
    # single layer: gap times delta_0 (1 - delta_0), largest at delta_0 = 1/2
    vals = [dof(StateProfile([d, 1 - d]), [1.0, 3.0]) for d in np.linspace(0, 1, 101)]
    assert int(np.argmax(vals)) == 50 and max(vals) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        dof(THIRDS, [1.0, 0.5, 2.0])
    with pytest.raises(ValueError):
        dof(THIRDS, [0.0, 1.0, 2.0])


@given(st.integers(1, 8), st.data())
@settings(max_examples=100, deadline=None)
def test_dof_lower_equals_upper(s, data):
    w = np.array(data.draw(st.lists(st.floats(0.01, 1), min_size=s + 1, max_size=s + 1)))
    g = np.cumsum(data.draw(st.lists(st.floats(0.01, 3), min_size=s + 1, max_size=s + 1)))
    profile = StateProfile(w / w.sum())
    L = data.draw(st.integers(1, 4))
    assert dof(profile, g, L) == pytest.approx(dof_upper(profile, g, L), rel=1e-12, abs=1e-12)
