import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import j0

from femtosched import channel as ch


def test_path_loss_examples():
    assert ch.path_loss_db(1.0) == 128.1
    assert ch.path_loss_db(0.1) == pytest.approx(90.5, abs=1e-12)
    assert ch.path_loss_db(2.0) == pytest.approx(128.1 + 37.6 * math.log10(2), abs=1e-12)
    assert ch.path_loss_db(2.0) == pytest.approx(139.418, abs=1e-3)


def test_path_loss_floor_and_domain():
    assert ch.path_loss_db(0.001) == ch.path_loss_db(0.01)
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            ch.path_loss_db(bad)


@given(st.floats(0.01, 50), st.floats(0.01, 50))
def test_path_loss_strictly_increasing(a, b):
    if a == b:
        return
    lo, hi = sorted((a, b))
    assert ch.path_loss_db(lo) < ch.path_loss_db(hi)


def test_shadowing_zero_sigma():
    rng = np.random.default_rng(1)
    assert ch.shadowing_db(rng, 0.0) == 0.0
    assert np.all(ch.shadowing_db(rng, 0.0, size=10) == 0.0)


def test_shadowing_moments():
    x = ch.shadowing_db(np.random.default_rng(7), 8.0, size=100_000)
    assert abs(x.mean()) < 0.1
    assert abs(x.std() - 8.0) < 0.1


def _fading(n_ues, doppler, seed=0, n_rbs=25):
    rngs = [np.random.default_rng([seed, u]) for u in range(n_ues)]
    return ch.JakesFading(rngs, n_rbs, doppler)


def test_jakes_zero_doppler_is_frozen():
    fad = _fading(3, 0.0)
    p = fad.power(np.arange(50))
    assert np.all(p == p[0])


def test_jakes_mean_power_is_unity():
    fad = _fading(40, ch.doppler_hz(3 / 3.6))
    p = fad.power(np.arange(1000))  # 1000 x 40 x 25 = 1e6 samples
    assert p.size == 1_000_000
    assert abs(p.mean() - 1.0) < 0.05


def test_jakes_autocorrelation_tracks_bessel():
    fd = ch.doppler_hz(3 / 3.6)
    fad = _fading(200, fd, seed=3)
    h = fad.complex_gain(np.arange(400))  # (K, U, R)
    lags = np.arange(0, int(1 / fd / 1e-3))  # fd * tau < 1
    k = h.shape[0] - lags[-1]
    ref = h[:k]
    for lag in lags[::5]:
        r = np.mean(np.real(h[lag:lag + k] * np.conj(ref)))
        assert abs(r - j0(2 * np.pi * fd * lag * 1e-3)) < 0.05, lag


def test_jakes_gain_db_matches_vectorised_power():
    fad = _fading(2, 10.0)
    p = fad.power([17])
    assert fad.gain_db(17, 4, 1) == pytest.approx(10 * np.log10(p[0, 1, 4]), abs=1e-9)


def test_jakes_deterministic_given_seed():
    a = _fading(3, 5.0, seed=9).power(np.arange(20))
    b = _fading(3, 5.0, seed=9).power(np.arange(20))
    assert np.array_equal(a, b)


def test_sinr_examples():
    assert ch.sinr_db(0.0, [], -100.0) == pytest.approx(100.0, abs=1e-9)
    assert ch.sinr_db(-50.0, [-50.0], -300.0) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(-120, -40), st.floats(-120, -40), st.floats(0.1, 20))
def test_sinr_decreases_with_interference(signal, interferer, bump):
    assert ch.sinr_db(signal, [interferer + bump], -110) < ch.sinr_db(signal, [interferer], -110)


def test_noise_per_rb():
    assert ch.noise_dbm(180e3) == pytest.approx(-174 + 10 * math.log10(180e3) + 9)


def test_cqi_extremes():
    assert ch.sinr_to_cqi(-30.0) == 0
    assert ch.sinr_to_cqi(30.0) == 15


def test_cqi_thresholds_are_closed_lower_bounds():
    table = ch.default_cqi_table()
    for c in range(1, 16):
        t = table.thresholds_db[c]
        assert table.sinr_to_cqi(t) == c
        assert table.sinr_to_cqi(np.nextafter(t, -np.inf)) == c - 1


def test_cqi_thresholds_are_capacity_fitted():
    table = ch.default_cqi_table()
    fitted = 10 * np.log10(2.0 ** table.efficiency[1:] - 1)
    assert np.allclose(table.thresholds_db[1:], fitted, atol=1e-3)


@given(st.floats(-60, 60))
def test_cqi_saturates_under_large_shifts(s):
    assert ch.sinr_to_cqi(s + 100) == 15
    assert ch.sinr_to_cqi(s - 100) == 0


@given(st.lists(st.floats(-40, 40), min_size=2, max_size=2))
def test_cqi_monotone_in_sinr(pair):
    lo, hi = sorted(pair)
    assert ch.sinr_to_cqi(lo) <= ch.sinr_to_cqi(hi)


def test_rb_capacity_examples():
    assert ch.rb_capacity_bits(0) == 0
    assert ch.rb_capacity_bits(15) == math.floor(5.5547 * 12 * 11) == 733
    caps = [ch.rb_capacity_bits(c) for c in range(16)]
    assert all(a <= b for a, b in zip(caps, caps[1:]))
    with pytest.raises(ValueError):
        ch.rb_capacity_bits(16)


def test_link_state_wideband_rate_is_per_rb_sum():
    sinr = np.linspace(-12, 25, 25)
    link = ch.LinkState.from_sinr(sinr)
    oracle = sum(ch.rb_capacity_bits(int(ch.sinr_to_cqi(s))) for s in sinr) / 1e-3
    assert link.wideband_rate_bps == oracle
    assert link.per_rb_cqi.min() >= 0 and link.per_rb_cqi.max() <= 15


def test_cqi_table_loader_rejects_incomplete(tmp_path):
    p = tmp_path / "t.txt"
    p.write_text("# cqi thr eff\n0 -inf 0\n1 -9 0.15\n")
    with pytest.raises(ValueError):
        ch.CqiTable.load(p)
