"""Per-TTI simulation loop tying channel, traffic and schedulers together."""

from __future__ import annotations

import hashlib
import math
from typing import Optional, TextIO

import numpy as np

from . import channel as ch
from .config import ScenarioConfig
from .errors import InvariantViolation
from .grid import FRAME_TTIS, GridConfig, RbAllocation, n_ttis
from .metrics import FlowMetrics, MetricsReport, summarize
from .scenario import FADING, VIDEO, VOIP, Topology, build_topology, large_scale_gain_db, substream
from .sched import (SchedulerKind, drain_frames, fls_quota, initial_avg_rate, logrule_weight,
                    parse_scheduler, schedule_cell, update_avg_rate)
from .traffic import (BestEffortSource, FlowKind, FlowQueue, VideoSource, VoipSource,
                      load_video_trace, synthetic_video_trace)

FADING_CHUNK = 100


class Simulation:
    """One run: owns the topology, link state, queues and scheduler state.

    ``event_log`` receives one line per granted RB: ``tti cell rb flow cqi bits``.
    With ``check_invariants`` every TTI verifies byte conservation, RB
    disjointness and per-cell capacity, raising :class:`InvariantViolation`.
    """

    def __init__(self, cfg: ScenarioConfig, seed: Optional[int] = None, topology: Optional[Topology] = None,
                 event_log: Optional[TextIO] = None, check_invariants: bool = False):
        self.cfg = cfg
        self.seed = cfg.seed if seed is None else seed
        self.grid = GridConfig(cfg.grid.bandwidth_mhz)
        self.table = ch.CqiTable.load(cfg.channel.cqi_table)
        self.kind = parse_scheduler(cfg.sched)
        self.topo = topology if topology is not None else build_topology(cfg, self.seed)
        self.event_log = event_log
        self.check_invariants = check_invariants
        self.tti = 0
        self.tti_s = self.grid.tti_s
        self.warmup_ttis = n_ttis(cfg.warmup_s, self.tti_s) if cfg.warmup_s > 0 else 0
        self._init_radio()
        self._init_flows()

    # --- setup -----------------------------------------------------------

    def _init_radio(self):
        cfg, topo, n_rbs = self.cfg, self.topo, self.grid.n_rbs
        cells = topo.cells
        self.n_cells = len(cells)
        n = topo.n_ues
        tx_rb_dbm = np.array([c.tx_dbm for c in cells]) - 10 * math.log10(n_rbs)
        gain_db = large_scale_gain_db(topo, cfg) if n else np.zeros((0, self.n_cells))
        rx_mw = ch.dbm_to_mw(tx_rb_dbm[None, :] + gain_db)
        serving = topo.ue_cell.astype(np.int64)
        self.rx_dbm = tx_rb_dbm[None, :] + gain_db
        self.signal_mw = rx_mw[np.arange(n), serving] if n else np.zeros(0)
        self.interferer_mw = rx_mw.copy()
        if n:
            self.interferer_mw[np.arange(n), serving] = 0.0
        self.noise_mw = float(ch.dbm_to_mw(ch.noise_dbm(self.grid.rb_width_hz, cfg.channel.noise_density_dbm_hz,
                                                        cfg.channel.noise_figure_db)))
        # first TTI: every cell assumed active on every RB
        self.active = np.ones((self.n_cells, n_rbs), dtype=bool)
        self.fading = None
        if cfg.channel.fading and n:
            doppler = ch.doppler_hz(cfg.channel.ue_speed_kmh / 3.6, cfg.channel.carrier_hz)
            rngs = [substream(self.seed, FADING, u) for u in range(n)]
            self.fading = ch.JakesFading(rngs, n_rbs, doppler, self.tti_s, cfg.channel.n_sinusoids)
        self._fade_start = -FADING_CHUNK - 1
        self._fade_block = None

    def _init_flows(self):
        cfg, topo = self.cfg, self.topo
        tr = cfg.traffic
        n_flows = topo.n_flows
        self.flow_ue = topo.flow_ue.astype(np.int64)
        self.flow_kind = list(topo.flow_kind)
        self.flow_cell = topo.ue_cell[self.flow_ue] if n_flows else np.zeros(0, dtype=np.int64)
        self.is_rt = np.array([k.realtime for k in self.flow_kind], dtype=bool)
        target = {FlowKind.VIDEO: tr.video_delay_s, FlowKind.VOIP: tr.voip_delay_s, FlowKind.BE: 0.0}
        self.delay_target = np.array([target[k] for k in self.flow_kind], dtype=float)
        self.drain = np.array([drain_frames(d, self.grid.frame_s) if d > 0 else 1 for d in self.delay_target],
                              dtype=np.int64)
        measure_from = self.warmup_ttis * self.tti_s
        rt_cap = tr.rt_queue_bytes * 8 if tr.rt_queue_bytes > 0 else None
        be_cap = tr.be_queue_bytes * 8 if tr.be_queue_bytes > 0 else None
        self.queues = [FlowQueue(rt_cap if k.realtime else be_cap, measure_from) for k in self.flow_kind]
        trace = None
        if any(k is FlowKind.VIDEO for k in self.flow_kind):
            trace = (load_video_trace(tr.video_trace, tr.video_rate_bps) if tr.video_trace
                     else synthetic_video_trace(tr.video_rate_bps))
        tti_ms = max(1, int(round(self.tti_s * 1e3)))
        self.sources = []
        for f, kind in enumerate(self.flow_kind):
            if kind is FlowKind.VIDEO:
                src = VideoSource(trace, substream(self.seed, VIDEO, f), tti_ms)
            elif kind is FlowKind.VOIP:
                src = VoipSource(substream(self.seed, VOIP, f), tr.voip_on_mean_s, tr.voip_off_mean_s, self.tti_s)
            else:
                src = BestEffortSource(tr.be_rate_bps, self.tti_s)
            self.sources.append(src)
        self.next_tti = np.array([s.next_tti for s in self.sources], dtype=np.int64)
        self.backlog = np.zeros(n_flows, dtype=np.int64)
        self.hol_arrival = np.full(n_flows, np.inf)
        self.avg = np.full(n_flows, initial_avg_rate(self.table, self.tti_s))
        self.quota = np.zeros(n_flows, dtype=np.int64)
        self.window_delivered = np.zeros(n_flows, dtype=np.int64)
        self.cell_rows = [np.nonzero(self.flow_cell == c)[0] for c in range(self.n_cells)]
        self.last_allocation: Optional[RbAllocation] = None

    # --- per-TTI stages ----------------------------------------------------

    def fading_power(self, tti: int) -> np.ndarray:
        if self.fading is None:
            return np.ones((self.topo.n_ues, self.grid.n_rbs))
        if not (self._fade_start <= tti < self._fade_start + FADING_CHUNK):
            self._fade_start = tti - tti % FADING_CHUNK
            ks = np.arange(self._fade_start, self._fade_start + FADING_CHUNK)
            t = ks * self.tti_s
            rot = np.exp(1j * self.fading.omega[:, :, None] * t[None, None, :])  # (U, M, K)
            h = np.matmul(self.fading.coef, rot)  # (U, R, K)
            self._fade_block = np.ascontiguousarray((h.real ** 2 + h.imag ** 2).transpose(2, 0, 1))
        return self._fade_block[tti - self._fade_start]

    def link_sinr_db(self, tti: int) -> np.ndarray:
        """Per-(UE, RB) SINR using the previous TTI's active RB sets for interference."""
        fade = self.fading_power(tti)
        signal = self.signal_mw[:, None] * fade
        if self.n_cells > 1:
            interference = self.interferer_mw @ self.active.astype(float)
        else:
            interference = 0.0
        return 10.0 * np.log10(signal / (self.noise_mw + interference))

    def _refresh_head(self, f: int):
        q = self.queues[f]
        self.backlog[f] = q.queued_bits
        self.hol_arrival[f] = q.head_arrival_s

    def _arrivals(self, tti: int, now: float):
        due = np.nonzero(self.next_tti <= tti)[0]
        for f in due:
            src = self.sources[f]
            sizes = src.generate(tti)
            if sizes:
                q = self.queues[f]
                for size in sizes:
                    q.push(size, now)
                self._refresh_head(f)
            self.next_tti[f] = src.next_tti

    def _drop_expired(self, now: float):
        stale = self.is_rt & (self.backlog > 0) & (self.hol_arrival < now - self.delay_target - 1e-9)
        for f in np.nonzero(stale)[0]:
            self.queues[f].drop_expired(now, self.delay_target[f])
            self._refresh_head(f)

    def _refresh_quotas(self, now: float):
        horizon = now + self.grid.frame_s
        for f in np.nonzero(self.is_rt)[0]:
            q = self.queues[f]
            if q.queued_bits == 0:
                self.quota[f] = 0
                continue
            expiring = q.expiring_bits(horizon, self.delay_target[f])
            self.quota[f] = fls_quota(q.queued_bits, int(self.drain[f]), expiring)

    def _weights(self, rows: np.ndarray, now: float) -> np.ndarray:
        weight = np.ones(len(rows))
        rt = self.is_rt[rows]
        if rt.any():
            r = rows[rt]
            if self.cfg.traffic.queue_metric == "hol_delay":
                q = np.where(self.backlog[r] > 0, now - self.hol_arrival[r], 0.0)
            else:
                q = self.backlog[r] / 8.0
            weight[rt] = logrule_weight(np.maximum(q, 0.0), self.delay_target[r])
        return weight

    def step(self) -> RbAllocation:
        tti = self.tti
        now = tti * self.tti_s
        n_rbs = self.grid.n_rbs
        # (1) channel
        if self.topo.n_ues:
            sinr = self.link_sinr_db(tti)
            cqi_ue = np.searchsorted(self.table.thresholds_db[1:], sinr, side="right")
            cap_ue = self.table.capacity_bits[cqi_ue]
        # (2) arrivals, (3) deadline drops
        self._arrivals(tti, now)
        self._drop_expired(now)
        # (4) frame-level quotas
        if self.kind is SchedulerKind.FLS and tti % FRAME_TTIS == 0:
            self._refresh_quotas(now)
        # (5) scheduling, (6) transmission
        alloc = RbAllocation(tti)
        served = np.zeros(len(self.queues), dtype=np.int64)
        active = np.zeros((self.n_cells, n_rbs), dtype=bool)
        for c in range(self.n_cells):
            rows = self.cell_rows[c]
            if rows.size == 0 or not self.backlog[rows].any():
                alloc.assign(c, np.full(n_rbs, -1))
                continue
            ues = self.flow_ue[rows]
            cap, cqi = cap_ue[ues], cqi_ue[ues]
            weight = self._weights(rows, now) if self.kind is SchedulerKind.LOGRULE else None
            quota = self.quota[rows] if self.kind is SchedulerKind.FLS else None
            owner = schedule_cell(self.kind, cap, cqi, self.avg[rows], self.backlog[rows], self.tti_s,
                                  is_rt=self.is_rt[rows], weight=weight, quota=quota)
            if quota is not None:
                self.quota[rows] = quota
            granted = owner >= 0
            active[c] = granted
            alloc.assign(c, np.where(granted, rows[np.maximum(owner, 0)], -1))
            if not granted.any():
                continue
            rb_idx = np.nonzero(granted)[0]
            local = owner[rb_idx]
            rb_bits = cap[local, rb_idx]
            if self.check_invariants and np.any(self.backlog[rows[local]] <= 0):
                raise InvariantViolation(f"TTI {tti}: RB granted to an empty flow in cell {c}")
            delivered_cell = 0
            want = np.bincount(local, weights=rb_bits, minlength=rows.size)
            for lf in np.nonzero(want)[0]:
                f = int(rows[lf])
                delivered = self.queues[f].dequeue_bits(int(want[lf]))
                served[f] = delivered
                delivered_cell += delivered
                self._refresh_head(f)
                if self.event_log is not None:
                    left = delivered
                    for rb, bits in zip(rb_idx[local == lf], rb_bits[local == lf]):
                        sent = min(int(bits), left)
                        left -= sent
                        self.event_log.write(f"{tti} {c} {rb} {f} {cqi[lf, rb]} {sent}\n")
            if self.check_invariants and delivered_cell > int(rb_bits.sum()):
                raise InvariantViolation(f"TTI {tti}: cell {c} delivered more than its RB capacity")
        self.active = active
        # (7) average rates, (8) measurement counters
        self.avg = update_avg_rate(self.avg, served, self.tti_s, self.cfg.ema_ttis)
        if tti >= self.warmup_ttis:
            self.window_delivered += served
        if self.check_invariants:
            self._check(alloc)
        self.last_allocation = alloc
        self.tti += 1
        return alloc

    def _check(self, alloc: RbAllocation):
        alloc.validate(self.grid.n_rbs)
        for c, owner in alloc.owners.items():
            flows = owner[owner >= 0]
            if np.any(self.flow_cell[flows] != c):
                raise InvariantViolation(f"TTI {alloc.tti_index}: cell {c} granted an RB to a foreign flow")
        for f, q in enumerate(self.queues):
            if q.unaccounted_bits() != 0 or q.queued_bits < 0:
                raise InvariantViolation(f"TTI {alloc.tti_index}: flow {f} violates bit conservation")
            if q.queued_bits != sum(p[0] for p in q.packets):
                raise InvariantViolation(f"TTI {alloc.tti_index}: flow {f} queue counter out of sync")

    # --- results ------------------------------------------------------------

    def conservation_residual(self) -> int:
        return sum(q.unaccounted_bits() for q in self.queues)

    def state_digest(self) -> str:
        h = hashlib.sha256()
        for arr in (self.backlog, self.avg, self.quota, self.window_delivered, self.active):
            h.update(np.ascontiguousarray(arr).tobytes())
        for q in self.queues:
            h.update(np.array([q.generated_bits, q.delivered_bits, q.dropped_deadline_bits,
                               q.dropped_overflow_bits], dtype=np.int64).tobytes())
        return h.hexdigest()

    def report(self) -> MetricsReport:
        measured = max(0, self.tti - self.warmup_ttis) * self.tti_s
        flows = []
        for f, q in enumerate(self.queues):
            flows.append(FlowMetrics(
                flow_id=f, ue_id=int(self.flow_ue[f]), kind=self.flow_kind[f], cell_id=int(self.flow_cell[f]),
                delivered_bits=int(self.window_delivered[f]), generated_bits=q.window_generated_bits,
                dropped_bits=q.window_dropped_bits,
                throughput_bps=self.window_delivered[f] / measured if measured > 0 else None,
                plr=q.window_dropped_bits / q.window_generated_bits if q.window_generated_bits else 0.0,
            ))
        return summarize(flows, measured, self.grid.bandwidth_hz, scheduler=self.kind.value,
                         n_ues=self.topo.n_ues, femto=bool(self.topo.femtos), seed=self.seed)

    def run(self) -> MetricsReport:
        for _ in range(n_ttis(self.cfg.duration_s, self.tti_s)):
            self.step()
        return self.report()


def run(cfg: ScenarioConfig, seed: Optional[int] = None, **kwargs) -> MetricsReport:
    """Build the topology, step ``duration_s / tti_s`` TTIs and return the report."""
    return Simulation(cfg, seed, **kwargs).run()
