import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from femtosched.channel import default_cqi_table
from femtosched.grid import GridConfig
from femtosched.sched import (EMA_WINDOW_TTIS, FlowContext, SchedulerKind, UserContext, allocate_tti,
                              drain_frames, fls_quota, greedy_allocate, initial_avg_rate, logrule_metric,
                              logrule_weight, metric_matrix, parse_scheduler, pf_metric, schedule_cell,
                              update_avg_rate)
from femtosched.traffic import FlowKind, FlowQueue

TABLE = default_cqi_table()
TTI = 1e-3


def fixture(rng, n_flows=None, n_rbs=None):
    n_flows = n_flows or int(rng.integers(1, 7))
    n_rbs = n_rbs or int(rng.integers(1, 10))
    cqi = rng.integers(0, 16, (n_flows, n_rbs))
    cap = TABLE.capacity_bits[cqi]
    avg = rng.uniform(1e4, 2e6, n_flows)
    backlog = np.where(rng.random(n_flows) < 0.2, 0, rng.integers(1, 20000, n_flows))
    return cqi, cap, avg, backlog


def naive_per_rb(metric, cap, backlog):
    """Straight-line reference for the per-RB rule: each RB in order goes to the
    best-metric flow that can still use it (residual backlog, non-zero capacity)."""
    n_flows, n_rbs = metric.shape
    residual = [int(b) for b in backlog]
    owner = []
    for r in range(n_rbs):
        best, best_m = -1, -math.inf
        for f in range(n_flows):
            if residual[f] > 0 and cap[f, r] > 0 and metric[f, r] > best_m:
                best, best_m = f, metric[f, r]
        owner.append(best)
        if best >= 0:
            residual[best] -= int(cap[best, r])
    return np.array(owner)


def naive_fls(cqi, cap, avg, backlog, quota, is_rt):
    """Straight-line reference for the two-phase FLS rule."""
    n_flows, n_rbs = cqi.shape
    owner = [-1] * n_rbs
    quota = [int(q) for q in quota]
    left = [int(b) for b in backlog]
    pairs = sorted(((-int(cqi[f, r]), f, r) for f in range(n_flows) for r in range(n_rbs)
                    if is_rt[f] and cap[f, r] > 0))
    for _, f, r in pairs:
        if owner[r] >= 0 or quota[f] <= 0 or left[f] <= 0:
            continue
        bits = min(int(cap[f, r]), left[f])
        owner[r] = f
        quota[f] -= bits
        left[f] -= bits
    free = [r for r in range(n_rbs) if owner[r] < 0]
    be_backlog = np.array([0 if is_rt[f] else backlog[f] for f in range(n_flows)])
    metric = cap / TTI / avg[:, None]
    sub = naive_per_rb(metric[:, free], cap[:, free], be_backlog)
    for r, o in zip(free, sub):
        owner[r] = o
    return np.array(owner), np.array(quota)


# --- metrics ------------------------------------------------------------------

def test_parse_scheduler():
    assert parse_scheduler("FLS") is SchedulerKind.FLS
    with pytest.raises(ValueError, match="pf, logrule, fls"):
        parse_scheduler("exp")


def test_pf_metric_examples():
    assert pf_metric(5.0, 5.0) == 1.0
    assert pf_metric(10.0, 5.0) == 2.0


def test_pf_argmax_matches_exhaustive_search():
    rng = np.random.default_rng(0)
    inst, avg = rng.uniform(1, 100, 5), rng.uniform(1, 100, 5)
    best = max(range(5), key=lambda i: inst[i] / avg[i])
    assert int(np.argmax(pf_metric(inst, avg))) == best


def test_logrule_examples():
    assert logrule_metric(3.0, 1.0, 0.0, 0.1) == 0.0
    assert logrule_metric(1.0, 1.0, 0.02, 0.1) == pytest.approx(math.log(2), abs=1e-12)


@given(st.floats(1e-4, 10), st.floats(1e-3, 1), st.floats(0.01, 10))
def test_logrule_monotone_in_queue(q, d, ratio):
    assert logrule_metric(ratio, 1.0, 2 * q, d) >= logrule_metric(ratio, 1.0, q, d)


def test_logrule_argmax_invariant_under_log_base():
    rng = np.random.default_rng(1)
    for _ in range(200):
        inst, avg = rng.uniform(1, 100, 6), rng.uniform(1, 100, 6)
        q, d = rng.uniform(0.001, 0.2, 6), rng.choice([0.1, 0.15], 6)
        ln = logrule_metric(inst, avg, q, d)
        log10 = np.log10(1 + 5 / d * q) * inst / avg
        assert np.argmax(ln) == np.argmax(log10)


# --- per-RB allocation -------------------------------------------------------------

def test_greedy_matches_naive_reference():
    rng = np.random.default_rng(2)
    for _ in range(1000):
        cqi, cap, avg, backlog = fixture(rng)
        metric = metric_matrix(SchedulerKind.PF, cap, avg, TTI)
        assert np.array_equal(greedy_allocate(metric, cap, backlog), naive_per_rb(metric, cap, backlog))


def test_three_flows_four_rbs_exhaustive():
    rng = np.random.default_rng(3)
    for _ in range(300):
        cqi, cap, avg, _ = fixture(rng, 3, 4)
        backlog = np.full(3, 10 ** 9)
        metric = metric_matrix(SchedulerKind.PF, cap, avg, TTI)
        owner = greedy_allocate(metric, cap, backlog)
        for r in range(4):
            scores = [metric[f, r] if cap[f, r] > 0 else -math.inf for f in range(3)]
            expect = int(np.argmax(scores)) if max(scores) > -math.inf else -1
            assert owner[r] == expect


def test_single_backlogged_flow_takes_every_rb():
    cap = np.full((3, 25), 733)
    owner = greedy_allocate(np.ones((3, 25)), cap, np.array([0, 10 ** 6, 0]))
    assert np.all(owner == 1)


def test_tie_goes_to_lowest_flow_id():
    cap = np.full((2, 1), 500)
    metric = metric_matrix(SchedulerKind.PF, cap, np.array([1e5, 1e5]), TTI)
    assert greedy_allocate(metric, cap, np.array([10 ** 6, 10 ** 6]))[0] == 0


def test_never_grants_empty_queue_or_cqi_zero():
    rng = np.random.default_rng(4)
    for _ in range(500):
        cqi, cap, avg, backlog = fixture(rng)
        for kind in SchedulerKind:
            rt = rng.random(len(backlog)) < 0.5
            owner = schedule_cell(kind, cap, cqi, avg, backlog, TTI, is_rt=rt,
                                  weight=rng.uniform(0.1, 2, len(backlog)),
                                  quota=rng.integers(0, 5000, len(backlog)) * rt)
            for r, f in enumerate(owner):
                if f >= 0:
                    assert backlog[f] > 0 and cap[f, r] > 0


def test_pf_scale_invariance():
    rng = np.random.default_rng(5)
    for _ in range(300):
        cqi, cap, avg, backlog = fixture(rng)
        c = rng.uniform(0.01, 100)
        a = greedy_allocate(pf_metric(cap / TTI, avg[:, None]), cap, backlog)
        b = greedy_allocate(pf_metric(c * cap / TTI, c * avg[:, None]), cap, backlog)
        assert np.array_equal(a, b)


def test_logrule_with_equal_delays_selects_pf_winner():
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(1000):
        cqi, cap, avg, backlog = fixture(rng)
        weight = np.full(len(avg), logrule_weight(rng.uniform(0.001, 0.3), 0.15))
        log = schedule_cell(SchedulerKind.LOGRULE, cap, cqi, avg, backlog, TTI, weight=weight)
        pf = schedule_cell(SchedulerKind.PF, cap, cqi, avg, backlog, TTI)
        mismatches += not np.array_equal(log, pf)
    assert mismatches == 0


def test_fls_with_zero_quotas_is_pf_over_best_effort():
    rng = np.random.default_rng(6)
    mismatches = 0
    for _ in range(1000):
        cqi, cap, avg, backlog = fixture(rng)
        rt = rng.random(len(avg)) < 0.5
        fls = schedule_cell(SchedulerKind.FLS, cap, cqi, avg, backlog, TTI, is_rt=rt,
                            quota=np.zeros(len(avg), dtype=np.int64))
        pf = schedule_cell(SchedulerKind.PF, cap, cqi, avg, np.where(rt, 0, backlog), TTI)
        mismatches += not np.array_equal(fls, pf)
    assert mismatches == 0


def test_fls_matches_naive_two_phase_reference():
    rng = np.random.default_rng(7)
    for _ in range(500):
        cqi = rng.integers(0, 16, (4, 6))
        cap = TABLE.capacity_bits[cqi]
        avg = rng.uniform(1e4, 1e6, 4)
        backlog = rng.integers(0, 6000, 4)
        is_rt = np.array([True, True, False, False])
        quota = np.array([rng.integers(0, 4000), rng.integers(0, 4000), 0, 0])
        q = quota.copy()
        got = schedule_cell(SchedulerKind.FLS, cap, cqi, avg, backlog, TTI, is_rt=is_rt, quota=q)
        expect, expect_quota = naive_fls(cqi, cap, avg, backlog, quota, is_rt)
        assert np.array_equal(got, expect)
        assert np.array_equal(q, expect_quota)


def test_fls_big_quota_monopolises_grid():
    cqi = np.full((2, 25), 9)
    cap = TABLE.capacity_bits[cqi]
    quota = np.array([10 ** 7, 0])
    owner = schedule_cell(SchedulerKind.FLS, cap, cqi, np.ones(2), np.array([10 ** 7, 10 ** 7]), TTI,
                          is_rt=np.array([True, False]), quota=quota)
    assert np.all(owner == 0)


# --- FLS quota law --------------------------------------------------------------

def test_fls_quota_examples():
    assert fls_quota(0, 10) == 0
    assert drain_frames(0.1) == 10 and drain_frames(0.15) == 15 and drain_frames(0.001) == 1
    assert fls_quota(10000, drain_frames(0.1)) == 1000
    with pytest.raises(ValueError):
        fls_quota(10, 0)


@given(st.integers(0, 10 ** 7), st.integers(1, 50), st.integers(0, 10 ** 7))
def test_fls_quota_never_exceeds_queue(q, m, expiring):
    assert 0 <= fls_quota(q, m, min(expiring, q)) <= q


def test_fixed_queue_drains_in_exactly_m_frames():
    q = FlowQueue()
    q.push(10000, 0.0)
    frames = 0
    while q.queued_bits:
        now = frames * 0.01
        assert q.drop_expired(now, 0.1) == 0
        q.dequeue_bits(fls_quota(q.queued_bits, 10, q.expiring_bits(now + 0.01, 0.1)))
        frames += 1
    assert frames == 10


# --- average rate ------------------------------------------------------------------

def test_ema_converges_to_constant_rate():
    avg = 0.0
    for _ in range(20 * EMA_WINDOW_TTIS):
        avg = update_avg_rate(avg, 500, TTI)
    assert avg == pytest.approx(500 / TTI, rel=1e-6)


def test_ema_decays_when_unscheduled():
    avg = update_avg_rate(1e6, 0, TTI)
    assert avg == pytest.approx(1e6 * (1 - 1 / 1000), rel=1e-15)


def test_ema_replay():
    rng = np.random.default_rng(8)
    served = rng.integers(0, 10000, 100)
    avg, ref = initial_avg_rate(), initial_avg_rate()
    for s in served:
        avg = update_avg_rate(avg, s, TTI)
        ref = ref - ref / 1000 + s / TTI / 1000
        assert abs(avg - ref) <= 1e-12 * max(1.0, abs(ref))


def test_initial_average_is_cqi1_rb_per_tti():
    assert initial_avg_rate() == TABLE.rb_capacity_bits(1) / TTI > 0


def test_pf_equalises_served_bits_on_identical_static_channels():
    rng = np.random.default_rng(9)
    n_flows = 5
    cqi = np.tile(rng.integers(1, 16, 25), (n_flows, 1))
    cap = TABLE.capacity_bits[cqi]
    avg = np.full(n_flows, initial_avg_rate())
    backlog = np.full(n_flows, 10 ** 12)
    total = np.zeros(n_flows)
    for _ in range(10_000):
        owner = schedule_cell(SchedulerKind.PF, cap, cqi, avg, backlog, TTI)
        served = np.bincount(owner[owner >= 0], weights=cap[owner[owner >= 0], np.nonzero(owner >= 0)[0]],
                             minlength=n_flows)
        total += served
        avg = update_avg_rate(avg, served, TTI)
    assert total.max() / total.min() - 1 <= 0.02


# --- object-level API -------------------------------------------------------------

def test_allocate_tti_single_flow():
    grid = GridConfig(5)
    ue = UserContext(0, np.full(25, 10), [FlowContext(7, FlowKind.BE, 1e5, 10 ** 6)])
    alloc = allocate_tti("pf", [ue], grid, tti_index=4)
    assert alloc.tti_index == 4
    assert np.all(alloc.owners[0] == 7)


def test_allocate_tti_fls_decrements_quota():
    grid = GridConfig(1.4)
    video = FlowContext(0, FlowKind.VIDEO, 1e5, 5000, delay_target_s=0.15, quota_bits=1000)
    be = FlowContext(1, FlowKind.BE, 1e5, 10 ** 6)
    ue = UserContext(0, np.full(6, 15), [video, be])
    alloc = allocate_tti(SchedulerKind.FLS, [ue], grid)
    owners = alloc.owners[0]
    # 1000 quota bits need two CQI-15 RBs; the overshoot is bounded by one RB
    assert np.all(owners[:2] == 0) and np.all(owners[2:] == 1)
    assert video.quota_bits == 1000 - 2 * 733


def test_allocate_tti_logrule_uses_hol_delay():
    grid = GridConfig(1.4)
    waiting = FlowContext(0, FlowKind.VIDEO, 1e5, 5000, hol_delay_s=0.1, delay_target_s=0.15)
    fresh = FlowContext(1, FlowKind.VIDEO, 1e5, 5000, hol_delay_s=0.0, delay_target_s=0.15)
    ues = [UserContext(0, np.full(6, 8), [waiting]), UserContext(1, np.full(6, 15), [fresh])]
    alloc = allocate_tti("logrule", ues, grid)
    assert alloc.owners[0][0] == 0  # q = 0 zeroes the fresh flow's metric


def test_allocate_tti_no_flows():
    alloc = allocate_tti("pf", [], GridConfig(5))
    assert np.all(alloc.owners[0] == -1)
