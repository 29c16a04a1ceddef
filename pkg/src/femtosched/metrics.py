"""Throughput, packet loss ratio, Jain fairness and spectral efficiency."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .traffic import FLOW_KINDS, FlowKind


def throughput_bps(delivered_bits: float, measured_s: float) -> Optional[float]:
    if measured_s <= 0:
        return None
    return delivered_bits / measured_s


def plr(dropped_bits: float, generated_bits: float) -> float:
    if generated_bits <= 0:
        return 0.0
    if dropped_bits < 0 or dropped_bits > generated_bits:
        raise ValueError("need 0 <= dropped <= generated")
    return dropped_bits / generated_bits


def jain_fairness(throughputs: Sequence[float]) -> Optional[float]:
    """Jain's index (sum x)^2 / (N sum x^2); ``None`` when every entry is zero."""
    x = np.asarray(throughputs, dtype=float)
    if x.size == 0:
        raise ValueError("fairness needs at least one value")
    if np.any(x < 0):
        raise ValueError("throughputs must be non-negative")
    peak = float(x.max())
    if peak == 0:
        return None
    x = x / peak  # the index is scale-free; normalising avoids under/overflow
    sq = float(np.sum(x * x))
    return float(np.sum(x)) ** 2 / (x.size * sq)


def spectral_efficiency(delivered_bits: float, measured_s: float, bandwidth_hz: float) -> Optional[float]:
    if bandwidth_hz <= 0:
        raise ValueError("bandwidth must be positive")
    if measured_s <= 0:
        return None
    return delivered_bits / (measured_s * bandwidth_hz)


@dataclass
class FlowMetrics:
    flow_id: int
    ue_id: int
    kind: FlowKind
    cell_id: int
    delivered_bits: int
    generated_bits: int
    dropped_bits: int
    throughput_bps: Optional[float]
    plr: float


@dataclass
class ClassSummary:
    kind: FlowKind
    n_flows: int
    fairness: Optional[float]
    plr: float
    mean_throughput_bps: Optional[float]


@dataclass
class MetricsReport:
    scheduler: str
    n_ues: int
    femto: bool
    seeds: list[int]
    measured_duration_s: float
    spectral_efficiency: Optional[float]
    classes: dict[FlowKind, ClassSummary]
    flows: list[FlowMetrics] = field(default_factory=list)

    def value(self, metric: str, kind: FlowKind | None = None) -> Optional[float]:
        if metric == "spectral_efficiency":
            return self.spectral_efficiency
        summary = self.classes[kind]
        return {"fairness": summary.fairness, "plr": summary.plr,
                "throughput": summary.mean_throughput_bps}[metric]


def summarize(flows: list[FlowMetrics], measured_s: float, bandwidth_hz: float, *,
              scheduler: str, n_ues: int, femto: bool, seed: int) -> MetricsReport:
    classes = {}
    for kind in FLOW_KINDS:
        sel = [f for f in flows if f.kind is kind]
        tputs = [f.throughput_bps for f in sel]
        have_rate = measured_s > 0 and sel
        classes[kind] = ClassSummary(
            kind=kind,
            n_flows=len(sel),
            fairness=jain_fairness(tputs) if have_rate else None,
            plr=plr(sum(f.dropped_bits for f in sel), sum(f.generated_bits for f in sel)),
            mean_throughput_bps=float(np.mean(tputs)) if have_rate else None,
        )
    total = sum(f.delivered_bits for f in flows)
    return MetricsReport(scheduler, n_ues, femto, [seed], measured_s,
                         spectral_efficiency(total, measured_s, bandwidth_hz), classes, flows)


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def average_reports(reports: list[MetricsReport]) -> MetricsReport:
    """Arithmetic mean of per-seed class metrics; per-flow rows are dropped."""
    if len(reports) == 1:
        return reports[0]
    first = reports[0]
    classes = {}
    for kind in FLOW_KINDS:
        cs = [r.classes[kind] for r in reports]
        classes[kind] = ClassSummary(
            kind=kind,
            n_flows=cs[0].n_flows,
            fairness=_mean(c.fairness for c in cs),
            plr=float(np.mean([c.plr for c in cs])),
            mean_throughput_bps=_mean(c.mean_throughput_bps for c in cs),
        )
    return MetricsReport(first.scheduler, first.n_ues, first.femto,
                         [s for r in reports for s in r.seeds], first.measured_duration_s,
                         _mean(r.spectral_efficiency for r in reports), classes, [])


# --- CSV -------------------------------------------------------------------

def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "on" if value else "off"
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            raise ValueError(f"refusing to write non-finite value {value!r}")
        return repr(float(value))
    return str(value)


def write_csv(path: Path | None, header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_csv(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], rows[1:]


FLOW_HEADER = ["flow_id", "ue_id", "class", "throughput_bps", "plr"]
SUMMARY_HEADER = ["scheduler", "femto", "n_ues", "class", "n_flows", "fairness", "plr",
                  "mean_throughput_bps", "spectral_efficiency"]


def flow_rows(report: MetricsReport) -> list[list]:
    return [[f.flow_id, f.ue_id, f.kind.value, f.throughput_bps, f.plr] for f in report.flows]


def summary_rows(report: MetricsReport) -> list[list]:
    return [[report.scheduler, report.femto, report.n_ues, kind.value, c.n_flows, c.fairness,
             c.plr, c.mean_throughput_bps, report.spectral_efficiency]
            for kind, c in report.classes.items()]


def write_run_csvs(report: MetricsReport, out_dir: Path) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path, summary_path = out_dir / "metrics.csv", out_dir / "summary.csv"
    write_csv(metrics_path, FLOW_HEADER, flow_rows(report))
    write_csv(summary_path, SUMMARY_HEADER, summary_rows(report))
    return metrics_path, summary_path


# --- sweep tables ------------------------------------------------------------

TABLE_METRICS = ("fairness", "plr", "throughput")
SE_TABLE = "spectral_efficiency"
FIGURES = {
    "fig_plr_vs_ues.csv": "plr",
    "fig_throughput_vs_ues.csv": "throughput",
    "fig_fairness_vs_ues.csv": "fairness",
}
SE_FIGURE = "fig_spectral_efficiency_vs_ues.csv"


def column_name(sched: str, femto: bool) -> str:
    return f"{sched}_{'on' if femto else 'off'}"


def table_names() -> list[str]:
    names = [f"{m}_{k.value}.csv" for m in TABLE_METRICS for k in FLOW_KINDS]
    return names + [f"{SE_TABLE}.csv"]


def write_sweep_tables(reports: list[MetricsReport], out_dir: Path, ue_counts, femto_modes, schedulers) -> list[Path]:
    """Wide tables (rows = UE counts, columns = scheduler x femto) plus long per-figure CSVs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index = {(r.scheduler, bool(r.femto), r.n_ues): r for r in reports}
    columns = [(s, f) for f in femto_modes for s in schedulers]
    header = ["n_ues"] + [column_name(s, f) for s, f in columns]
    written = []

    def table(path, get):
        rows = [[n] + [get(index[(s, f, n)]) for s, f in columns] for n in ue_counts]
        write_csv(path, header, rows)
        written.append(path)

    for metric in TABLE_METRICS:
        for kind in FLOW_KINDS:
            table(out_dir / f"{metric}_{kind.value}.csv", lambda r, m=metric, k=kind: r.value(m, k))
    table(out_dir / f"{SE_TABLE}.csv", lambda r: r.spectral_efficiency)

    for name, metric in FIGURES.items():
        rows = [[s, f, n, k.value, index[(s, f, n)].value(metric, k)]
                for s, f in columns for n in ue_counts for k in FLOW_KINDS]
        write_csv(out_dir / name, ["scheduler", "femto", "n_ues", "class", metric], rows)
        written.append(out_dir / name)
    rows = [[s, f, n, index[(s, f, n)].spectral_efficiency] for s, f in columns for n in ue_counts]
    write_csv(out_dir / SE_FIGURE, ["scheduler", "femto", "n_ues", SE_TABLE], rows)
    written.append(out_dir / SE_FIGURE)
    return written


def read_sweep_tables(out_dir: Path):
    """Read the table CSVs back; returns ``(lookup, ue_counts)`` for :mod:`femtosched.trends`.

    Raises FileNotFoundError naming the first missing table.
    """
    out_dir = Path(out_dir)
    data: dict = {}
    counts: set[int] = set()
    for name in table_names():
        path = out_dir / name
        if not path.is_file():
            raise FileNotFoundError(f"missing sweep table {path}")
        header, rows = read_csv(path)
        if not header or header[0] != "n_ues":
            raise ValueError(f"{path}: first column must be n_ues")
        stem = name[:-4]
        metric, cls = (SE_TABLE, None) if stem == SE_TABLE else stem.split("_", 1)
        for row in rows:
            n = int(row[0])
            counts.add(n)
            for col, cell in zip(header[1:], row[1:]):
                sched, mode = col.rsplit("_", 1)
                data[(metric, cls, sched, mode == "on", n)] = float(cell) if cell != "" else None

    def value(metric, cls, sched, femto, n):
        return data.get((metric, cls, sched, bool(femto), n))

    return value, sorted(counts)
