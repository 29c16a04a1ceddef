"""LTE downlink time/frequency lattice: frames, TTIs and resource blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .errors import ConfigError

# Standard LTE channel bandwidth -> number of resource blocks.
RBS_PER_BANDWIDTH = {1.4: 6, 3.0: 15, 5.0: 25, 10.0: 50, 15.0: 75, 20.0: 100}

TTI_S = 1e-3
FRAME_TTIS = 10
SLOTS_PER_TTI = 2


def rbs_for_bandwidth(bandwidth_mhz: float) -> int:
    for bw, n in RBS_PER_BANDWIDTH.items():
        if math.isclose(float(bandwidth_mhz), bw, abs_tol=1e-9):
            return n
    valid = ", ".join(f"{bw:g}" for bw in RBS_PER_BANDWIDTH)
    raise ConfigError(
        f"unsupported bandwidth {bandwidth_mhz!r} MHz; valid values: {valid}",
        key="grid.bandwidth_mhz",
    )


@dataclass(frozen=True)
class GridConfig:
    bandwidth_mhz: float = 5.0
    n_rbs: int = field(default=-1)
    tti_s: float = TTI_S
    frame_s: float = FRAME_TTIS * TTI_S
    subcarriers_per_rb: int = 12
    subcarrier_spacing_hz: float = 15e3
    rb_width_hz: float = 180e3

    def __post_init__(self):
        expected = rbs_for_bandwidth(self.bandwidth_mhz)
        if self.n_rbs == -1:
            object.__setattr__(self, "n_rbs", expected)
        elif self.n_rbs != expected:
            raise ConfigError(
                f"n_rbs={self.n_rbs} does not match {self.bandwidth_mhz} MHz "
                f"(expected {expected})",
                key="grid.n_rbs",
            )
        if not math.isclose(self.subcarriers_per_rb * self.subcarrier_spacing_hz, self.rb_width_hz):
            raise ConfigError("subcarriers_per_rb * subcarrier_spacing_hz must equal rb_width_hz")
        if not math.isclose(self.frame_s, FRAME_TTIS * self.tti_s):
            raise ConfigError("frame_s must be 10 TTIs")

    @property
    def bandwidth_hz(self) -> float:
        return self.bandwidth_mhz * 1e6

    @property
    def occupied_hz(self) -> float:
        return self.n_rbs * self.rb_width_hz

    @property
    def slot_s(self) -> float:
        return self.tti_s / SLOTS_PER_TTI


@dataclass(frozen=True)
class Tick:
    tti_index: int
    time_s: float
    frame_boundary: bool

    @property
    def frame_index(self) -> int:
        return self.tti_index // FRAME_TTIS


def n_ttis(duration_s: float, tti_s: float = TTI_S) -> int:
    # round first so 0.03 / 1e-3 does not floor to 29
    return int(math.floor(round(duration_s / tti_s, 9)))


def tti_clock(duration_s: float, offset: int = 0, tti_s: float = TTI_S) -> Iterator[Tick]:
    """Yield consecutive TTIs covering ``duration_s``, starting at ``offset``."""
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    for k in range(offset, offset + n_ttis(duration_s, tti_s)):
        yield Tick(k, k * tti_s, k % FRAME_TTIS == 0)


@dataclass
class RbAllocation:
    """Owner of every RB of every cell for one TTI (-1 means unassigned)."""

    tti_index: int
    owners: dict[int, np.ndarray] = field(default_factory=dict)

    def assign(self, cell_id: int, owner: np.ndarray) -> None:
        self.owners[cell_id] = np.asarray(owner, dtype=np.int64)

    def assignments(self) -> Iterator[tuple[int, int, int]]:
        """Yield (cell_id, rb_index, flow_id) for every assigned RB."""
        for cell_id in sorted(self.owners):
            for rb, flow in enumerate(self.owners[cell_id]):
                if flow >= 0:
                    yield cell_id, rb, int(flow)

    def n_assigned(self, cell_id: int) -> int:
        return int(np.count_nonzero(self.owners[cell_id] >= 0))

    def validate(self, n_rbs: int) -> None:
        for cell_id, owner in self.owners.items():
            if owner.shape != (n_rbs,):
                raise AssertionError(f"cell {cell_id}: allocation covers {owner.shape[0]} RBs, grid has {n_rbs}")
