"""Macro/femto topology with buildings, UE drop, and the UE-count sweep."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .channel import noise_dbm, path_loss_db
from .config import ScenarioConfig, copy_config
from .errors import ConfigError
from .grid import rbs_for_bandwidth
from .traffic import FLOW_KINDS

# Named RNG purposes; each (purpose, index) pair is an independent substream.
PLACEMENT, SHADOWING, FADING, VIDEO, VOIP = 1, 2, 3, 4, 5
MAX_REDROPS = 1000


def substream(seed: int, purpose: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), purpose, index]))


@dataclass(frozen=True)
class CellNode:
    cell_id: int
    kind: str  # "macro" | "femto"
    x: float
    y: float
    tx_dbm: float
    building: int = -1


@dataclass
class Topology:
    macro: CellNode
    buildings: np.ndarray  # (B, 4): x0, y0, x1, y1
    femtos: list[CellNode]
    ue_xy: np.ndarray  # (N, 2)
    ue_building: np.ndarray  # (N,), -1 outdoors
    ue_cell: np.ndarray  # (N,) serving cell id
    shadowing_db: np.ndarray  # (N, C)
    flow_ue: np.ndarray = field(default=None)
    flow_kind: list = field(default=None)

    def __post_init__(self):
        n = len(self.ue_xy)
        if self.flow_ue is None:
            self.flow_ue = np.repeat(np.arange(n), len(FLOW_KINDS))
            self.flow_kind = [k for _ in range(n) for k in FLOW_KINDS]

    @property
    def cells(self) -> list[CellNode]:
        return [self.macro, *self.femtos]

    @property
    def n_ues(self) -> int:
        return len(self.ue_xy)

    @property
    def n_flows(self) -> int:
        return len(self.flow_ue)

    @property
    def indoor(self) -> np.ndarray:
        return self.ue_building >= 0

    def penetration_crossings(self) -> np.ndarray:
        """Walls crossed on each (UE, cell) link, shape (N, C)."""
        cells = self.cells
        out = np.zeros((self.n_ues, len(cells)), dtype=np.int64)
        for c, cell in enumerate(cells):
            if cell.kind == "macro":
                out[:, c] = self.indoor
            else:
                same = self.ue_building == cell.building
                out[:, c] = np.where(same, 0, np.where(self.indoor, 2, 1))
        return out

    def distances_km(self) -> np.ndarray:
        xy = np.array([[c.x, c.y] for c in self.cells])
        d = np.linalg.norm(self.ue_xy[:, None, :] - xy[None, :, :], axis=2) / 1000.0
        return np.maximum(d, 1e-6)


def building_lattice(rows: int, cols: int, size_m: float, spacing_m: float) -> np.ndarray:
    """Building footprints on a regular lattice centred on the macro site."""
    xs = (np.arange(cols) - (cols - 1) / 2) * spacing_m
    ys = (np.arange(rows) - (rows - 1) / 2) * spacing_m
    h = size_m / 2
    return np.array([[x - h, y - h, x + h, y + h] for y in ys for x in xs]).reshape(-1, 4)


def containing_building(buildings: np.ndarray, x: float, y: float) -> int:
    inside = ((buildings[:, 0] <= x) & (x < buildings[:, 2])
              & (buildings[:, 1] <= y) & (y < buildings[:, 3]))
    hits = np.nonzero(inside)[0]
    return int(hits[0]) if hits.size else -1


def _drop_ue(rng: np.random.Generator, buildings: np.ndarray, radius: float, indoor_fraction: float):
    if buildings.size and rng.random() < indoor_fraction:
        b = buildings[rng.integers(len(buildings))]
        return rng.uniform(b[0], b[2]), rng.uniform(b[1], b[3])
    r = radius * np.sqrt(rng.random())
    a = rng.uniform(0, 2 * np.pi)
    return r * np.cos(a), r * np.sin(a)


def build_topology(cfg: ScenarioConfig, seed: int | None = None) -> Topology:
    """Place buildings, femtos and UEs; attach UEs; draw per-link shadowing.

    Pure function of (config, seed). Every UE uses its own placement and
    shadowing substreams, so adding UEs leaves existing ones unchanged.
    """
    seed = cfg.seed if seed is None else seed
    topo_cfg, ch = cfg.topology, cfg.channel
    if cfg.n_ues < 1:
        raise ConfigError("n_ues must be >= 1", key="n_ues")
    buildings = building_lattice(topo_cfg.building_rows, topo_cfg.building_cols,
                                 topo_cfg.building_size_m, topo_cfg.building_spacing_m)
    if cfg.femto and len(buildings) == 0:
        raise ConfigError("femto mode needs at least one building", key="femto")
    if len(buildings) and np.max(np.hypot(np.maximum(abs(buildings[:, 0]), abs(buildings[:, 2])),
                                          np.maximum(abs(buildings[:, 1]), abs(buildings[:, 3])))) > topo_cfg.macro_radius_m:
        raise ConfigError("building lattice extends beyond the macro radius", key="topology.building_spacing_m")
    macro = CellNode(0, "macro", 0.0, 0.0, ch.macro_tx_dbm)
    femtos = []
    if cfg.femto:
        for b, (x0, y0, x1, y1) in enumerate(buildings):
            femtos.append(CellNode(b + 1, "femto", (x0 + x1) / 2, (y0 + y1) / 2, ch.femto_tx_dbm, b))
    n_cells = 1 + len(femtos)

    xy = np.zeros((cfg.n_ues, 2))
    ue_building = np.full(cfg.n_ues, -1, dtype=np.int64)
    shadow = np.zeros((cfg.n_ues, n_cells))
    noise_rb = noise_dbm(180e3, ch.noise_density_dbm_hz, ch.noise_figure_db)
    macro_rb_dbm = ch.macro_tx_dbm - 10 * math.log10(rbs_for_bandwidth(cfg.grid.bandwidth_mhz))
    for u in range(cfg.n_ues):
        rng = substream(seed, PLACEMENT, u)
        srng = substream(seed, SHADOWING, u)
        for _ in range(MAX_REDROPS):
            x, y = _drop_ue(rng, buildings, topo_cfg.macro_radius_m, topo_cfg.indoor_fraction)
            b = containing_building(buildings, x, y) if len(buildings) else -1
            # one draw per potential cell so femto on/off share the macro value
            draws = srng.standard_normal(1 + len(buildings))
            s = ch.shadowing_mean_db + draws * ch.shadowing_sigma_db
            pl = path_loss_db(max(math.hypot(x, y), 1e-3) / 1000.0, ch.pathloss_a, ch.pathloss_b,
                              ch.min_distance_m / 1000.0)
            macro_snr = macro_rb_dbm - pl - (ch.penetration_db if b >= 0 else 0.0) - s[0] - noise_rb
            if macro_snr >= topo_cfg.min_macro_snr_db:
                break
        else:
            raise ConfigError(f"UE {u}: no drop met topology.min_macro_snr_db after {MAX_REDROPS} tries",
                              key="topology.min_macro_snr_db")
        xy[u] = x, y
        ue_building[u] = b
        shadow[u] = s[:n_cells]

    topo = Topology(macro, buildings, femtos, xy, ue_building, np.zeros(cfg.n_ues, dtype=np.int64), shadow)
    topo.ue_cell = attach(topo, cfg)
    return topo


def large_scale_gain_db(topo: Topology, cfg: ScenarioConfig) -> np.ndarray:
    """Path loss + wall penetration + shadowing, as a gain in dB, shape (N, C)."""
    ch = cfg.channel
    pl = path_loss_db(topo.distances_km(), ch.pathloss_a, ch.pathloss_b, ch.min_distance_m / 1000.0)
    return -(pl + ch.penetration_db * topo.penetration_crossings() + topo.shadowing_db)


def attach(topo: Topology, cfg: ScenarioConfig) -> np.ndarray:
    if not topo.femtos:
        return np.zeros(topo.n_ues, dtype=np.int64)
    if cfg.topology.access == "closed":
        # the femto of building b has cell id b + 1
        return np.where(topo.indoor, topo.ue_building + 1, 0).astype(np.int64)
    tx = np.array([c.tx_dbm for c in topo.cells])
    rx = tx[None, :] + large_scale_gain_db(topo, cfg)
    return np.argmax(rx, axis=1).astype(np.int64)


# --- sweeps ----------------------------------------------------------------

DEFAULT_UE_COUNTS = (5, 10, 15, 20, 25, 30)
SCHEDULERS = ("pf", "fls", "logrule")


@dataclass
class SweepPlan:
    ue_counts: list[int] = field(default_factory=lambda: list(DEFAULT_UE_COUNTS))
    femto_modes: list[bool] = field(default_factory=lambda: [False, True])
    schedulers: list[str] = field(default_factory=lambda: list(SCHEDULERS))
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    duration_s: float | None = None
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    workers: int = 1

    def __post_init__(self):
        for name in ("ue_counts", "femto_modes", "schedulers", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"sweep plan: {name} must not be empty", key=name)
        bad = [s for s in self.schedulers if s not in SCHEDULERS]
        if bad:
            raise ConfigError(f"sweep plan: unknown scheduler(s) {bad}; expected a subset of {list(SCHEDULERS)}",
                              key="schedulers")
        duration = self.duration_s if self.duration_s is not None else self.base.duration_s
        if duration < self.base.warmup_s:
            raise ConfigError("sweep plan: duration shorter than warm-up", key="duration_s")

    def cells(self):
        """Grid cells (n_ues, femto, scheduler) in table order."""
        return list(itertools.product(self.ue_counts, self.femto_modes, self.schedulers))

    def run_configs(self):
        for n, femto, sched in self.cells():
            for seed in self.seeds:
                cfg = copy_config(self.base, n_ues=n, femto=femto, sched=sched, seed=seed)
                if self.duration_s is not None:
                    cfg.duration_s = self.duration_s
                yield (n, femto, sched), cfg.validate()


def _run_one(cfg: ScenarioConfig):
    from .engine import run

    return run(cfg, cfg.seed)


def run_sweep(plan: SweepPlan):
    """Run every (grid cell, seed) and return one seed-averaged report per cell."""
    from .metrics import average_reports

    jobs = list(plan.run_configs())
    if plan.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(plan.workers) as pool:
            futures = [pool.submit(_run_one, cfg) for _, cfg in jobs]
            results = []
            for (cell, cfg), fut in zip(jobs, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:
                    _abort(cell, cfg.seed, exc)
    else:
        results = []
        for cell, cfg in jobs:
            try:
                results.append(_run_one(cfg))
            except Exception as exc:
                _abort(cell, cfg.seed, exc)
    by_cell: dict = {}
    for (cell, _), rep in zip(jobs, results):
        by_cell.setdefault(cell, []).append(rep)
    return [average_reports(by_cell[cell]) for cell in plan.cells()]


def _describe(cell, seed) -> str:
    n, femto, sched = cell
    return f"n_ues={n} femto={'on' if femto else 'off'} sched={sched} seed={seed}"


def _abort(cell, seed, exc: Exception):
    where = _describe(cell, seed)
    if isinstance(exc, ConfigError):
        raise ConfigError(f"sweep run failed at {where}: {exc}", key=exc.key) from exc
    raise RuntimeError(f"sweep run failed at {where}: {exc}") from exc
