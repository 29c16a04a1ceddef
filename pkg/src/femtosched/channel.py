"""Link quality: path loss, shadowing, Jakes fading, SINR, CQI and RB capacity."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
MIN_DISTANCE_KM = 0.01
DATA_SYMBOLS_PER_TTI = 11  # 14 OFDM symbols minus 3 for control
SUBCARRIERS_PER_RB = 12


@dataclass(frozen=True)
class PropagationParams:
    pathloss_a: float = 128.1
    pathloss_b: float = 37.6
    penetration_db: float = 10.0
    shadowing_mean_db: float = 0.0
    shadowing_sigma_db: float = 8.0
    ue_speed_mps: float = 3.0 / 3.6
    carrier_hz: float = 2e9
    min_distance_km: float = MIN_DISTANCE_KM

    def __post_init__(self):
        if self.shadowing_sigma_db < 0:
            raise ValueError("shadowing_sigma_db must be >= 0")
        if self.penetration_db < 0:
            raise ValueError("penetration_db must be >= 0")

    @property
    def doppler_hz(self) -> float:
        return doppler_hz(self.ue_speed_mps, self.carrier_hz)


def path_loss_db(d_km, a: float = 128.1, b: float = 37.6, min_km: float = MIN_DISTANCE_KM):
    """Macro urban path loss ``a + b*log10(d)``; distances below ``min_km`` are clamped."""
    d = np.asarray(d_km, dtype=float)
    if np.any(d <= 0):
        raise ValueError("distance must be positive")
    pl = a + b * np.log10(np.maximum(d, min_km))
    return float(pl) if pl.ndim == 0 else pl


def shadowing_db(rng: np.random.Generator, sigma_db: float = 8.0, mean_db: float = 0.0, size=None):
    if sigma_db == 0:
        return mean_db if size is None else np.full(size, float(mean_db))
    return rng.normal(mean_db, sigma_db, size)


def doppler_hz(speed_mps: float, carrier_hz: float = 2e9) -> float:
    return speed_mps * carrier_hz / SPEED_OF_LIGHT


def noise_dbm(bandwidth_hz: float, density_dbm_hz: float = -174.0, noise_figure_db: float = 9.0) -> float:
    return density_dbm_hz + 10.0 * math.log10(bandwidth_hz) + noise_figure_db


def dbm_to_mw(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def mw_to_dbm(x):
    return 10.0 * np.log10(x)


class JakesFading:
    """Sum-of-sinusoids Rayleigh fading, one process per (UE, RB).

    Each UE gets its own set of arrival angles ``2*pi*(n + theta)/M``; each
    (UE, RB) pair gets independent oscillator phases. The complex gain is
    normalised so that the mean power is one.
    """

    def __init__(self, rngs: list[np.random.Generator], n_rbs: int, doppler_hz: float,
                 tti_s: float = 1e-3, n_sinusoids: int = 16):
        self.n_ues = len(rngs)
        self.n_rbs = n_rbs
        self.doppler_hz = doppler_hz
        self.tti_s = tti_s
        self.m = n_sinusoids
        n = np.arange(n_sinusoids)
        # theta away from 0 and 0.5 keeps every Doppler shift distinct
        theta = np.array([r.uniform(0.15, 0.35) for r in rngs]).reshape(-1, 1)
        phases = np.stack([r.uniform(0, 2 * np.pi, (n_rbs, n_sinusoids)) for r in rngs]) \
            if rngs else np.zeros((0, n_rbs, n_sinusoids))
        self.omega = 2 * np.pi * doppler_hz * np.cos(2 * np.pi * (n + theta) / n_sinusoids)  # (U, M)
        self.coef = np.exp(1j * phases) / math.sqrt(n_sinusoids)  # (U, R, M)

    def complex_gain(self, tti_indices) -> np.ndarray:
        """Complex channel gains with shape (K, U, R) for K TTI indices."""
        t = np.asarray(tti_indices, dtype=float) * self.tti_s
        rot = np.exp(1j * self.omega[:, :, None] * t[None, None, :])  # (U, M, K)
        return np.einsum("urm,umk->kur", self.coef, rot)

    def power(self, tti_indices) -> np.ndarray:
        h = self.complex_gain(tti_indices)
        return h.real ** 2 + h.imag ** 2

    def gain_db(self, tti_index: int, rb_index: int, ue_id: int) -> float:
        t = tti_index * self.tti_s
        h = np.sum(self.coef[ue_id, rb_index] * np.exp(1j * self.omega[ue_id] * t))
        return float(10 * np.log10(abs(h) ** 2))


def sinr_db(signal_dbm, interferers_dbm=(), noise_dbm_: float = -112.45) -> float:
    """SINR from received powers in dBm; summation is done in milliwatts."""
    interference = float(np.sum(dbm_to_mw(np.asarray(list(interferers_dbm), dtype=float))))
    return float(signal_dbm - mw_to_dbm(dbm_to_mw(noise_dbm_) + interference))


class CqiTable:
    """SINR -> CQI thresholds and CQI -> spectral efficiency."""

    def __init__(self, thresholds_db, efficiency, data_symbols: int = DATA_SYMBOLS_PER_TTI):
        self.thresholds_db = np.asarray(thresholds_db, dtype=float)
        self.efficiency = np.asarray(efficiency, dtype=float)
        if self.thresholds_db.shape != (16,) or self.efficiency.shape != (16,):
            raise ValueError("CQI table needs 16 entries")
        if np.any(np.diff(self.thresholds_db[1:]) <= 0) or np.any(np.diff(self.efficiency) < 0):
            raise ValueError("CQI table must be monotone")
        self.data_symbols = data_symbols
        self.capacity_bits = np.floor(
            self.efficiency * SUBCARRIERS_PER_RB * data_symbols + 1e-9).astype(np.int64)
        self.capacity_bits[0] = 0

    @classmethod
    def load(cls, path: str | Path | None = None, data_symbols: int = DATA_SYMBOLS_PER_TTI) -> "CqiTable":
        if path is None or str(path) == "default":
            text = resources.files("femtosched").joinpath("data/cqi_table.txt").read_text()
        else:
            text = Path(path).read_text()
        rows = {}
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            cqi, th, eff = line.split()
            rows[int(cqi)] = (float(th), float(eff))
        if sorted(rows) != list(range(16)):
            raise ValueError(f"CQI table {path}: expected rows for CQI 0..15")
        th, eff = zip(*(rows[c] for c in range(16)))
        return cls(th, eff, data_symbols)

    def sinr_to_cqi(self, sinr_db):
        """Largest CQI whose threshold is <= SINR (closed lower bound)."""
        cqi = np.searchsorted(self.thresholds_db[1:], sinr_db, side="right")
        return int(cqi) if np.ndim(cqi) == 0 else cqi

    def rb_capacity_bits(self, cqi):
        bits = self.capacity_bits[cqi]
        return int(bits) if np.ndim(bits) == 0 else bits


_default_table: CqiTable | None = None


def default_cqi_table() -> CqiTable:
    global _default_table
    if _default_table is None:
        _default_table = CqiTable.load()
    return _default_table


def sinr_to_cqi(sinr_db_):
    return default_cqi_table().sinr_to_cqi(sinr_db_)


def rb_capacity_bits(cqi):
    if np.any(np.asarray(cqi) < 0) or np.any(np.asarray(cqi) > 15):
        raise ValueError("cqi must be in [0, 15]")
    return default_cqi_table().rb_capacity_bits(cqi)


@dataclass
class LinkState:
    per_rb_sinr_db: np.ndarray
    per_rb_cqi: np.ndarray
    wideband_rate_bps: float

    @classmethod
    def from_sinr(cls, sinr: np.ndarray, table: CqiTable | None = None, tti_s: float = 1e-3) -> "LinkState":
        table = table or default_cqi_table()
        cqi = table.sinr_to_cqi(np.asarray(sinr, dtype=float))
        rate = float(np.sum(table.rb_capacity_bits(cqi))) / tti_s
        return cls(np.asarray(sinr, dtype=float), np.asarray(cqi), rate)
