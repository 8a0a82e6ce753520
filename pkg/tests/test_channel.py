import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nomafd.channel import (Budgets, ChannelSet, Scenario, ScenarioConfig, dbm_to_watt,
                            fairness_weights, generate_channels, generate_scenario,
                            large_scale_gain, rayleigh_coefficients, watt_to_dbm)


def test_dbm_reference_points():
    assert dbm_to_watt(30.0) == pytest.approx(1.0, rel=1e-15)
    assert dbm_to_watt(0.0) == pytest.approx(1e-3, rel=1e-15)
    assert dbm_to_watt(20.0) == pytest.approx(0.1, rel=1e-15)


@given(st.floats(min_value=-150, max_value=60))
def test_dbm_roundtrip(dbm):
    assert watt_to_dbm(dbm_to_watt(dbm)) == pytest.approx(dbm, abs=1e-9)


def test_large_scale_gain_values():
    assert large_scale_gain(1.0, 4.0) == 1.0
    assert large_scale_gain(10.0, 4.0) == pytest.approx(1e-4)
    assert large_scale_gain(10.0, 4.0, 10.0) == pytest.approx(1e-3)
    # below the 1 m reference the gain saturates
    assert large_scale_gain(0.2, 4.0) == 1.0


@given(st.integers(0, 2**32), st.integers(1, 5), st.integers(1, 5))
def test_positions_in_annulus(seed, m, n):
    cfg = ScenarioConfig(num_uplink=m, num_downlink=n)
    sc = generate_scenario(cfg, seed)
    d = sc.distances
    assert d.shape == (m + n,)
    assert np.all(d >= cfg.min_distance_m - 1e-9)
    assert np.all(d <= cfg.cell_radius_m + 1e-9)


def test_radius_distribution_uniform_area():
    # P(r <= r0) = (r0^2 - rmin^2) / (R^2 - rmin^2) for uniform placement over the annulus
    cfg = ScenarioConfig(num_uplink=50, num_downlink=50)
    d = np.concatenate([generate_scenario(cfg, s).distances for s in range(100)])
    r0 = 70.0
    expect = (r0**2 - 30.0**2) / (100.0**2 - 30.0**2)
    frac = np.mean(d <= r0)
    assert abs(frac - expect) < 5 * math.sqrt(expect * (1 - expect) / d.size)


def test_rayleigh_unit_power(rng):
    h = rayleigh_coefficients(rng, 200_000)
    p = np.abs(h) ** 2
    assert abs(p.mean() - 1.0) < 5 * 1.0 / math.sqrt(p.size)
    # |h|^2 is exponential: P(|h|^2 > 1) = e^-1
    assert abs(np.mean(p > 1.0) - math.exp(-1)) < 0.01
    assert abs(np.mean(h)) < 0.01


def test_channel_structure(instance):
    inst = instance(seed=5)
    H = inst.channels
    h = H.gains
    m, k = inst.m, inst.m + inst.n
    assert h.shape == (inst.f, k, k)
    for f in range(inst.f):
        for i in range(k):
            for j in range(k):
                if j < m and i < m:
                    # uplink interferer reaches the BS over its own link
                    assert h[f, j, i] == h[f, j, j]
                elif j >= m and i >= m:
                    # downlink streams reach receiver i over i's link
                    assert h[f, j, i] == h[f, i, i]
                elif j >= m and i < m:
                    assert h[f, j, i] == pytest.approx(H.si_raw[f] * 10 ** (-110 / 20), rel=1e-12)


def test_shadowing_shared_across_subcarriers(instance):
    inst = instance(seed=2, num_subcarriers=4000, shadowing_sigma_db=8.0)
    g = np.abs(inst.channels.direct) ** 2
    d = inst.scenario.distances
    # averaging the fading leaves the per-user large-scale gain: ratio to d^-4 is 10^(S/10)
    shadow_db = 10 * np.log10(g.mean(axis=0) * d**4)
    assert np.all(np.abs(shadow_db) < 40)
    # the per-user fading average is consistent across the two halves of the band
    a, b = g[:2000].mean(axis=0), g[2000:].mean(axis=0)
    assert np.all(np.abs(np.log(a / b)) < 0.2)


def test_determinism_and_stream_separation():
    cfg = ScenarioConfig()
    a = generate_channels(generate_scenario(cfg, 11))
    b = generate_channels(generate_scenario(cfg, 11))
    c = generate_channels(generate_scenario(cfg, 12))
    assert a.digest() == b.digest()
    assert a.digest() != c.digest()
    np.testing.assert_array_equal(a.gains, b.gains)


def test_gains_read_only(instance):
    H = instance().channels
    with pytest.raises(ValueError):
        H.gains[0, 0, 0] = 1.0
    with pytest.raises(ValueError):
        H.power_gains[0, 0, 0] = 1.0


def test_serialization_roundtrip(instance):
    inst = instance(seed=9)
    H = inst.channels
    H2 = ChannelSet.from_dict(H.to_dict())
    np.testing.assert_array_equal(H.gains, H2.gains)
    assert H2.digest() == H.digest()
    sc = Scenario.from_dict(inst.scenario.to_dict())
    np.testing.assert_array_equal(sc.positions, inst.scenario.positions)
    assert sc.config == inst.config


def test_fairness_weights(instance):
    inst = instance(seed=4)
    a = fairness_weights(inst.scenario).alpha
    d = inst.scenario.distances
    assert a.max() == pytest.approx(1.0)
    np.testing.assert_allclose(a, d**2 / d.max() ** 2)


@pytest.mark.parametrize("bad", [
    dict(num_uplink=0), dict(num_subcarriers=0), dict(min_distance_m=200.0),
    dict(noise_power_dbm=float("nan")), dict(path_loss_exponent=-1.0),
])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        ScenarioConfig(**bad).validate()


def test_budgets_positive():
    with pytest.raises(ValueError):
        Budgets(0.0, 1.0)
    with pytest.raises(ValueError):
        Budgets(1.0, -1.0)
