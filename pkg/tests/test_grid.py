import numpy as np
import pytest
from hypothesis import given, strategies as st

from femtosched.errors import ConfigError
from femtosched.grid import FRAME_TTIS, GridConfig, RbAllocation, n_ttis, rbs_for_bandwidth, tti_clock


@pytest.mark.parametrize("bw,n", [(1.4, 6), (3, 15), (5, 25), (10, 50), (15, 75), (20, 100)])
def test_rbs_for_bandwidth_table(bw, n):
    assert rbs_for_bandwidth(bw) == n


def test_five_mhz_packs_into_band():
    assert rbs_for_bandwidth(5) * 180e3 <= 5e6


def test_unsupported_bandwidth_names_valid_set():
    with pytest.raises(ConfigError) as err:
        rbs_for_bandwidth(7)
    msg = str(err.value)
    for bw in ("1.4", "3", "5", "10", "15", "20"):
        assert bw in msg
    assert err.value.key == "grid.bandwidth_mhz"


def test_grid_config_invariants():
    g = GridConfig(5)
    assert g.n_rbs == 25
    assert g.subcarriers_per_rb * g.subcarrier_spacing_hz == pytest.approx(g.rb_width_hz)
    assert g.frame_s == pytest.approx(10 * g.tti_s)
    assert g.slot_s == pytest.approx(0.5e-3)
    with pytest.raises(ConfigError):
        GridConfig(5, n_rbs=50)
    with pytest.raises(ConfigError):
        GridConfig(5, subcarrier_spacing_hz=30e3)
    with pytest.raises(ConfigError):
        GridConfig(5, frame_s=0.02)


def test_tti_clock_one_frame():
    ticks = list(tti_clock(0.01))
    assert [t.tti_index for t in ticks] == list(range(10))
    assert [t.frame_boundary for t in ticks] == [True] + [False] * 9


def test_tti_clock_single_tti():
    assert len(list(tti_clock(0.001))) == 1


def test_tti_clock_one_second():
    ticks = list(tti_clock(1.0))
    assert len(ticks) == 1000
    assert sum(t.frame_boundary for t in ticks) == 100


def test_tti_clock_rejects_non_positive():
    with pytest.raises(ValueError):
        list(tti_clock(0))


def test_n_ttis_does_not_lose_a_tti_to_float_error():
    assert n_ttis(0.03) == 30
    assert n_ttis(30.0) == 30000


@given(st.integers(1, 400), st.integers(1, 400))
def test_tti_clock_is_duration_additive(a, b):
    first = list(tti_clock(a * 1e-3))
    second = list(tti_clock(b * 1e-3, offset=len(first)))
    whole = list(tti_clock((a + b) * 1e-3))
    assert first + second == whole
    assert all(t.frame_boundary == (t.tti_index % FRAME_TTIS == 0) for t in whole)


def test_allocation_disjoint_and_complete():
    alloc = RbAllocation(3)
    owner = np.array([0, 0, -1, 2, 1])
    alloc.assign(0, owner)
    alloc.validate(5)
    got = list(alloc.assignments())
    assert got == [(0, 0, 0), (0, 1, 0), (0, 3, 2), (0, 4, 1)]
    assert alloc.n_assigned(0) + int(np.sum(owner < 0)) == 5
    rbs = [rb for _, rb, _ in got]
    assert len(rbs) == len(set(rbs))


def test_allocation_validate_rejects_wrong_width():
    alloc = RbAllocation(0)
    alloc.assign(0, np.full(24, -1))
    with pytest.raises(AssertionError):
        alloc.validate(25)
