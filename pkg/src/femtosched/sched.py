"""Downlink schedulers: PF, Log-Rule and the two-level FLS.

Scheduling is per flow. The array-level functions take one row per flow and
one column per RB:

* ``cap``      bits each flow would get on each RB this TTI (0 = CQI 0)
* ``avg``      smoothed wideband served rate of each flow, bps
* ``backlog``  queued bits of each flow

and return ``owner``: for each RB, the row index of the flow it is granted
to, or -1. Ties go to the lowest row index, so rows must be sorted by flow id.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import CqiTable, default_cqi_table
from .grid import GridConfig, RbAllocation
from .traffic import FlowKind

EMA_WINDOW_TTIS = 1000
LOGRULE_GAIN = 5.0


class SchedulerKind(str, enum.Enum):
    PF = "pf"
    LOGRULE = "logrule"
    FLS = "fls"


def parse_scheduler(token: str) -> SchedulerKind:
    try:
        return SchedulerKind(str(token).lower())
    except ValueError:
        valid = ", ".join(k.value for k in SchedulerKind)
        raise ValueError(f"unknown scheduler {token!r}; expected one of: {valid}") from None


def pf_metric(inst_rate_bps, avg_rate_bps):
    return np.divide(inst_rate_bps, avg_rate_bps)


def logrule_weight(queue_term, delay_target_s):
    return np.log1p(np.divide(LOGRULE_GAIN, delay_target_s) * queue_term)


def logrule_metric(inst_rate_bps, avg_rate_bps, hol_delay_s, delay_target_s):
    """``log(1 + (5/d) q) * inst/avg`` with the natural log."""
    return logrule_weight(hol_delay_s, delay_target_s) * pf_metric(inst_rate_bps, avg_rate_bps)


def update_avg_rate(avg_rate_bps, served_bits, tti_s: float = 1e-3, window: int = EMA_WINDOW_TTIS):
    beta = 1.0 / window
    return (1.0 - beta) * avg_rate_bps + beta * (np.asarray(served_bits) / tti_s)


def initial_avg_rate(table: CqiTable | None = None, tti_s: float = 1e-3) -> float:
    """Bootstrap average: one RB at CQI 1 per TTI."""
    table = table or default_cqi_table()
    return table.rb_capacity_bits(1) / tti_s


def drain_frames(delay_target_s: float, frame_s: float = 0.01) -> int:
    return max(1, int(math.floor(delay_target_s / frame_s + 1e-9)))


def fls_quota(queue_bits: int, drain_frames_: int, expiring_bits: int = 0) -> int:
    """Frame quota: linear drain over ``drain_frames_`` frames plus bits about to expire."""
    if drain_frames_ < 1:
        raise ValueError("drain_frames must be >= 1")
    if queue_bits <= 0:
        return 0
    return int(min(queue_bits, math.ceil(queue_bits / drain_frames_) + expiring_bits))


# --- array-level allocation ------------------------------------------------

def greedy_allocate(metric: np.ndarray, cap: np.ndarray, backlog: np.ndarray) -> np.ndarray:
    """Give every RB to the flow with the highest metric, in RB order.

    A flow whose backlog is already covered by its grants on lower-indexed
    RBs this TTI is treated as empty for the remaining RBs, as is any flow
    with an empty queue or a zero-capacity RB.
    """
    n_flows, n_rbs = metric.shape
    owner = np.full(n_rbs, -1, dtype=np.int64)
    if n_flows == 0 or n_rbs == 0:
        return owner
    backlog = np.asarray(backlog)
    live = np.nonzero(backlog > 0)[0]
    if live.size == 0:
        return owner
    if live.size < n_flows:
        # drop empty rows up front; row order, and so tie-breaking, is unchanged
        sub = greedy_allocate(metric[live], cap[live], backlog[live])
        return np.where(sub >= 0, live[np.maximum(sub, 0)], -1)
    m = np.where(cap > 0, metric, -np.inf)
    residual = backlog.astype(np.float64)
    start = 0
    while start < n_rbs:
        sub = m[:, start:]
        cols = np.arange(n_rbs - start)
        w = np.argmax(sub, axis=0)
        valid = sub[w, cols] > -np.inf
        bits = np.where(valid, cap[w, start + cols], 0)
        grants = np.zeros_like(sub)
        grants[w[valid], cols[valid]] = bits[valid]
        before = np.cumsum(grants, axis=1) - grants
        wasted = valid & (before[w, cols] >= residual[w])
        if not wasted.any():
            owner[start:] = np.where(valid, w, -1)
            break
        j = int(np.argmax(wasted))
        owner[start:start + j] = np.where(valid[:j], w[:j], -1)
        residual -= grants[:, :j].sum(axis=1)
        m[w[j], :] = -np.inf
        start += j
    return owner


def metric_matrix(kind: SchedulerKind, cap: np.ndarray, avg: np.ndarray, tti_s: float,
                  weight: np.ndarray | None = None) -> np.ndarray:
    metric = pf_metric(cap / tti_s, avg[:, None])
    if kind is SchedulerKind.LOGRULE and weight is not None:
        metric = metric * weight[:, None]
    return metric


def fls_phase_one(cqi: np.ndarray, cap: np.ndarray, quota: np.ndarray, backlog: np.ndarray,
                  owner: np.ndarray) -> np.ndarray:
    """Serve residual RT quotas on the best-CQI (flow, RB) pairs first.

    ``quota`` holds residual frame quotas (0 for BE rows) and is decremented
    in place by the bits each grant carries. ``owner`` is filled in place.
    Returns the bits granted per row.
    """
    n_flows, n_rbs = cqi.shape
    granted = np.zeros(n_flows, dtype=np.int64)
    rows = np.nonzero((quota > 0) & (np.asarray(backlog) > 0))[0]
    if rows.size == 0:
        return granted
    backlog_left = np.asarray(backlog, dtype=np.int64)[rows]
    sub_cap = cap[rows]
    # only eligible rows take part; row order (and so tie-breaking) is preserved
    cand = np.where((sub_cap > 0) & (owner[None, :] < 0), cqi[rows], -1)
    while True:
        idx = int(cand.argmax())
        i, r = divmod(idx, n_rbs)
        if cand[i, r] < 1:
            break
        f = rows[i]
        bits = min(int(sub_cap[i, r]), int(backlog_left[i]))
        owner[r] = f
        granted[f] += bits
        backlog_left[i] -= bits
        quota[f] -= bits
        cand[:, r] = -1
        if quota[f] <= 0 or backlog_left[i] <= 0:
            cand[i, :] = -1
    return granted


def schedule_cell(kind: SchedulerKind, cap: np.ndarray, cqi: np.ndarray, avg: np.ndarray,
                  backlog: np.ndarray, tti_s: float = 1e-3, *, is_rt: np.ndarray | None = None,
                  weight: np.ndarray | None = None, quota: np.ndarray | None = None) -> np.ndarray:
    """Allocate one cell's RBs for one TTI.

    ``weight`` is the Log-Rule queue weight per row (use 1 for BE rows).
    ``quota`` is the FLS residual quota per row, decremented in place.
    """
    backlog = np.asarray(backlog)
    if kind is SchedulerKind.FLS:
        owner = np.full(cap.shape[1], -1, dtype=np.int64)
        if quota is not None:
            fls_phase_one(cqi, cap, quota, backlog, owner)
        be = ~is_rt if is_rt is not None else np.ones(len(backlog), dtype=bool)
        free = owner < 0
        if free.any() and be.any():
            metric = metric_matrix(SchedulerKind.PF, cap, avg, tti_s)
            metric[~be, :] = -np.inf
            metric[:, ~free] = -np.inf
            phase2 = greedy_allocate(metric, cap, np.where(be, backlog, 0))
            owner = np.where(free, phase2, owner)
        return owner
    metric = metric_matrix(kind, cap, avg, tti_s, weight)
    return greedy_allocate(metric, cap, backlog)


# --- object-level API ------------------------------------------------------

@dataclass
class FlowContext:
    flow_id: int
    kind: FlowKind
    avg_rate_bps: float
    backlog_bits: int
    hol_delay_s: float = 0.0
    delay_target_s: float = 0.0
    quota_bits: float = 0.0


@dataclass
class UserContext:
    ue_id: int
    per_rb_cqi: np.ndarray
    flows: list[FlowContext] = field(default_factory=list)
    inst_rate_bps: float = 0.0


@dataclass
class FlsState:
    drain_frames: np.ndarray
    quota_bits: np.ndarray
    frame_index: int = -1


def _flatten(contexts: list[UserContext], table: CqiTable):
    rows = sorted(((f, u) for u in contexts for f in u.flows), key=lambda fu: fu[0].flow_id)
    if not rows:
        return [], np.zeros((0, 0), dtype=np.int64), np.zeros((0, 0), dtype=np.int64)
    cqi = np.array([u.per_rb_cqi for _, u in rows], dtype=np.int64).reshape(len(rows), -1)
    cap = table.rb_capacity_bits(cqi) if cqi.size else np.zeros_like(cqi)
    return [f for f, _ in rows], cqi, np.asarray(cap)


def allocate_tti(kind, contexts: list[UserContext], grid: GridConfig, tti_index: int = 0,
                 cell_id: int = 0, table: CqiTable | None = None, queue_metric: str = "hol_delay"):
    """Schedule one cell from per-UE contexts; returns an :class:`RbAllocation`.

    For FLS each flow's ``quota_bits`` is its residual frame quota and is
    decremented by what this TTI grants.
    """
    kind = parse_scheduler(kind) if not isinstance(kind, SchedulerKind) else kind
    table = table or default_cqi_table()
    flows, cqi, cap = _flatten(contexts, table)
    alloc = RbAllocation(tti_index)
    if not flows:
        alloc.assign(cell_id, np.full(grid.n_rbs, -1))
        return alloc
    avg = np.array([f.avg_rate_bps for f in flows], dtype=float)
    backlog = np.array([f.backlog_bits for f in flows], dtype=np.int64)
    is_rt = np.array([f.kind.realtime for f in flows])
    weight = None
    if kind is SchedulerKind.LOGRULE:
        weight = np.ones(len(flows))
        for i, f in enumerate(flows):
            if f.kind.realtime:
                q = f.hol_delay_s if queue_metric == "hol_delay" else f.backlog_bits / 8
                weight[i] = logrule_weight(q, f.delay_target_s)
    quota = None
    if kind is SchedulerKind.FLS:
        quota = np.array([f.quota_bits if f.kind.realtime else 0 for f in flows], dtype=np.int64)
    owner = schedule_cell(kind, cap, cqi, avg, backlog, grid.tti_s, is_rt=is_rt, weight=weight, quota=quota)
    if quota is not None:
        for f, q in zip(flows, quota):
            f.quota_bits = q
    ids = np.array([f.flow_id for f in flows])
    alloc.assign(cell_id, np.where(owner >= 0, ids[np.maximum(owner, 0)], -1))
    return alloc
