"""Per-UE traffic: trace-driven video, G.729 VoIP, best effort; per-flow FIFO queues."""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import TraceError

# Deadline comparisons are done on values that are multiples of the TTI.
TIME_EPS = 1e-9

VOIP_PACKET_BITS = (20 + 12) * 8
VOIP_INTERVAL_S = 0.020
BE_PACKET_BITS = 1500 * 8
NEVER = np.iinfo(np.int64).max


class FlowKind(str, enum.Enum):
    VIDEO = "video"
    VOIP = "voip"
    BE = "best_effort"

    @property
    def realtime(self) -> bool:
        return self is not FlowKind.BE


FLOW_KINDS = (FlowKind.VIDEO, FlowKind.VOIP, FlowKind.BE)


@dataclass(frozen=True)
class FlowSpec:
    kind: FlowKind
    rate_bps: float
    delay_target_s: float = 0.0
    trace_path: str | None = None

    def __post_init__(self):
        if self.kind.realtime:
            if self.rate_bps <= 0:
                raise ValueError(f"{self.kind.value}: rate_bps must be positive")
            if self.delay_target_s <= 0:
                raise ValueError(f"{self.kind.value}: delay_target_s must be positive")


class FlowQueue:
    """FIFO of [size_bits, arrival_s] packets with drop accounting.

    All counters are in bits. ``window_*`` counters only include packets
    that arrived at or after ``measure_from_s``.
    """

    def __init__(self, capacity_bits: int | None = None, measure_from_s: float = 0.0):
        self.capacity_bits = capacity_bits
        self.measure_from_s = measure_from_s
        self.packets: deque[list] = deque()
        self.queued_bits = 0
        self.generated_bits = 0
        self.delivered_bits = 0
        self.dropped_deadline_bits = 0
        self.dropped_overflow_bits = 0
        self.window_generated_bits = 0
        self.window_dropped_bits = 0

    def __len__(self):
        return len(self.packets)

    def _in_window(self, arrival_s: float) -> bool:
        return arrival_s >= self.measure_from_s - TIME_EPS

    def push(self, size_bits: int, arrival_s: float) -> bool:
        """Enqueue a packet; tail-drop it if the buffer would overflow."""
        size_bits = int(size_bits)
        if self.packets and arrival_s < self.packets[-1][1]:
            raise ValueError("packets must arrive in non-decreasing time order")
        self.generated_bits += size_bits
        in_window = self._in_window(arrival_s)
        if in_window:
            self.window_generated_bits += size_bits
        if self.capacity_bits is not None and self.queued_bits + size_bits > self.capacity_bits:
            self.dropped_overflow_bits += size_bits
            if in_window:
                self.window_dropped_bits += size_bits
            return False
        self.packets.append([size_bits, arrival_s])
        self.queued_bits += size_bits
        return True

    @property
    def head_arrival_s(self) -> float:
        return self.packets[0][1] if self.packets else math.inf

    def hol_delay_s(self, now_s: float) -> float:
        if not self.packets:
            return 0.0
        return now_s - self.packets[0][1]

    def drop_expired(self, now_s: float, delay_target_s: float) -> int:
        """Drop every packet older than the delay target; returns dropped bits."""
        if delay_target_s <= 0:
            return 0
        dropped = 0
        limit = now_s - delay_target_s - TIME_EPS
        packets = self.packets
        while packets and packets[0][1] < limit:
            size, arrival = packets.popleft()
            dropped += size
            if self._in_window(arrival):
                self.window_dropped_bits += size
        self.queued_bits -= dropped
        self.dropped_deadline_bits += dropped
        return dropped

    def dequeue_bits(self, grant_bits: int) -> int:
        """Serve up to ``grant_bits`` head-first, segmenting the last packet."""
        if grant_bits < 0:
            raise ValueError("grant_bits must be >= 0")
        remaining = int(grant_bits)
        packets = self.packets
        while remaining > 0 and packets:
            head = packets[0]
            if head[0] <= remaining:
                remaining -= head[0]
                packets.popleft()
            else:
                head[0] -= remaining
                remaining = 0
        delivered = int(grant_bits) - remaining
        self.queued_bits -= delivered
        self.delivered_bits += delivered
        return delivered

    def expiring_bits(self, horizon_s: float, delay_target_s: float) -> int:
        """Bits whose deadline falls at or before ``horizon_s``."""
        limit = horizon_s - delay_target_s + TIME_EPS
        total = 0
        for size, arrival in self.packets:
            if arrival > limit:
                break
            total += size
        return total

    def unaccounted_bits(self) -> int:
        return (self.generated_bits - self.delivered_bits - self.dropped_deadline_bits
                - self.dropped_overflow_bits - self.queued_bits)


# --- sources -------------------------------------------------------------

class Source:
    """Packet generator polled once per TTI.

    ``next_tti`` is the first TTI at which the source may emit; the engine
    only calls :meth:`generate` for sources that are due.
    """

    next_tti: int = 0

    def generate(self, tti_index: int) -> list[int]:
        raise NotImplementedError


@dataclass
class VideoTrace:
    times_ms: np.ndarray
    sizes_bits: np.ndarray
    period_ms: int

    @property
    def mean_rate_bps(self) -> float:
        return float(self.sizes_bits.sum()) / (self.period_ms * 1e-3)

    def scaled_to(self, rate_bps: float) -> "VideoTrace":
        factor = rate_bps / self.mean_rate_bps
        sizes = np.maximum(1, np.round(self.sizes_bits * factor)).astype(np.int64)
        return VideoTrace(self.times_ms.copy(), sizes, self.period_ms)


def synthetic_video_trace(rate_bps: float = 128e3) -> VideoTrace:
    """25 fps, 10-frame GOP (one large I frame, nine P frames), 1500-byte MTU."""
    frame_bytes = [1900] + [500] * 9
    times, sizes = [], []
    for i, nbytes in enumerate(frame_bytes):
        while nbytes > 0:
            chunk = min(nbytes, 1500)
            times.append(40 * i)
            sizes.append(chunk * 8)
            nbytes -= chunk
    trace = VideoTrace(np.array(times, dtype=np.int64), np.array(sizes, dtype=np.int64), 400)
    return trace.scaled_to(rate_bps)


def load_video_trace(path: str | Path, rate_bps: float = 128e3) -> VideoTrace:
    """Read ``<time_offset_ms> <size_bytes>`` lines and rescale to ``rate_bps``."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise TraceError(f"cannot read video trace {path}: {exc}", key="traffic.video_trace") from exc
    times, sizes = [], []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            t, size = float(parts[0]), int(parts[1])
        except (IndexError, ValueError):
            raise TraceError(f"{path}:{lineno}: expected '<time_offset_ms> <size_bytes>'",
                             key="traffic.video_trace") from None
        if size <= 0 or t < 0 or (times and t < times[-1]):
            raise TraceError(f"{path}:{lineno}: sizes must be positive and times non-decreasing",
                             key="traffic.video_trace")
        times.append(t)
        sizes.append(size * 8)
    if not times:
        raise TraceError(f"{path}: trace is empty", key="traffic.video_trace")
    times_ms = np.floor(np.array(times)).astype(np.int64)
    times_ms -= times_ms[0]
    gaps = np.diff(np.unique(times_ms))
    step = int(round(float(gaps.mean()))) if gaps.size else 1
    trace = VideoTrace(times_ms, np.array(sizes, dtype=np.int64), int(times_ms[-1]) + max(step, 1))
    return trace.scaled_to(rate_bps)


class VideoSource(Source):
    """Loops a trace, rotated by a random start offset so flows are not in phase."""

    def __init__(self, trace: VideoTrace, rng: np.random.Generator | None = None, tti_ms: int = 1):
        self.period = trace.period_ms
        shift = int(rng.integers(0, trace.period_ms)) if rng is not None else 0
        rotated = (trace.times_ms - shift) % trace.period_ms
        order = np.argsort(rotated, kind="stable")
        self.times = rotated[order] // tti_ms
        self.sizes = trace.sizes_bits[order]
        self.period_ttis = max(1, trace.period_ms // tti_ms)
        self._pos = 0
        self._cycle = 0
        self.next_tti = int(self.times[0])

    def generate(self, tti_index: int) -> list[int]:
        out = []
        n = len(self.times)
        while self._cycle * self.period_ttis + self.times[self._pos] <= tti_index:
            out.append(int(self.sizes[self._pos]))
            self._pos += 1
            if self._pos == n:
                self._pos = 0
                self._cycle += 1
        self.next_tti = int(self._cycle * self.period_ttis + self.times[self._pos])
        return out


class VoipSource(Source):
    """G.729 ON/OFF source: a 32-byte packet every 20 ms while talking."""

    def __init__(self, rng: np.random.Generator, on_mean_s: float = 3.0, off_mean_s: float = 3.0,
                 tti_s: float = 1e-3, start_on: bool | None = None):
        self.rng = rng
        self.on_mean_s = on_mean_s
        self.off_mean_s = off_mean_s
        self.tti_s = tti_s
        self.interval = max(1, int(round(VOIP_INTERVAL_S / tti_s)))
        self.on = bool(rng.random() < 0.5) if start_on is None else start_on
        self.state_end = self._duration(0)
        self.next_tti = 0 if self.on else self.state_end
        self.on_ttis = 0

    def _duration(self, start: int) -> int:
        mean = self.on_mean_s if self.on else self.off_mean_s
        return start + max(1, int(round(self.rng.exponential(mean) / self.tti_s)))

    def _advance_state(self, tti_index: int) -> None:
        while tti_index >= self.state_end:
            self.on = not self.on
            start = self.state_end
            self.state_end = self._duration(start)
            if self.on:
                self.next_tti = start

    def generate(self, tti_index: int) -> list[int]:
        self._advance_state(tti_index)
        if not self.on:
            self.next_tti = self.state_end
            return []
        out = []
        if tti_index >= self.next_tti:
            out.append(VOIP_PACKET_BITS)
            self.next_tti = tti_index + self.interval
        if self.next_tti >= self.state_end:
            self.next_tti = self.state_end
        return out


class BestEffortSource(Source):
    """Constant-rate greedy source, sized so the queue normally never empties."""

    def __init__(self, rate_bps: float, tti_s: float = 1e-3, packet_bits: int = BE_PACKET_BITS):
        self.per_tti = rate_bps * tti_s
        self.packet_bits = packet_bits
        self.credit = float(packet_bits)  # first packet at t = 0
        self.next_tti = 0

    def generate(self, tti_index: int) -> list[int]:
        out = []
        while self.credit >= self.packet_bits:
            out.append(self.packet_bits)
            self.credit -= self.packet_bits
        self.credit += self.per_tti
        wait = math.ceil((self.packet_bits - self.credit) / self.per_tti) if self.per_tti > 0 else NEVER
        if wait >= NEVER:
            self.next_tti = NEVER
        else:
            self.credit += max(wait, 0) * self.per_tti
            self.next_tti = tti_index + 1 + max(wait, 0)
        return out
