"""Qualitative trend checks over sweep results.

The checks only need a lookup ``value(metric, cls, sched, femto, n_ues)``
returning a float (or ``None`` when the cell is absent), so they run the
same way on in-memory reports and on sweep CSVs read back from disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

Lookup = Callable[[str, Optional[str], str, bool, int], Optional[float]]

SCHEDS = ("pf", "logrule", "fls")
MIN_FLS_PF_GAP = 0.01
SE_GAIN = 1.2


@dataclass
class TrendResult:
    key: str
    title: str
    passed: Optional[bool]  # None: inputs missing
    detail: str

    @property
    def status(self) -> str:
        return {True: "PASS", False: "FAIL", None: "SKIP"}[self.passed]

    def line(self) -> str:
        return f"{self.status} {self.key} {self.title}: {self.detail}"


class _Missing(Exception):
    pass


def _get(value: Lookup, metric, cls, sched, femto, n):
    v = value(metric, cls, sched, femto, n)
    if v is None:
        raise _Missing(f"no {metric}{'/' + cls if cls else ''} for {sched} femto={'on' if femto else 'off'} n={n}")
    return v


def _f(x: float) -> str:
    return f"{x:.4g}"


def video_plr_order(value: Lookup, counts=(20, 30)) -> TrendResult:
    ok, parts = True, []
    for n in counts:
        fls, log, pf = (_get(value, "plr", "video", s, False, n) for s in ("fls", "logrule", "pf"))
        good = fls < log < pf and pf - fls >= MIN_FLS_PF_GAP
        ok &= good
        parts.append(f"n={n} fls={_f(fls)} logrule={_f(log)} pf={_f(pf)}")
    return TrendResult("video_plr_order", "video PLR FLS < Log-Rule < PF (PF-FLS >= 0.01)", ok, "; ".join(parts))


def be_throughput_pf_vs_fls(value: Lookup, n=20) -> TrendResult:
    ok, parts = True, []
    for femto in (False, True):
        pf = _get(value, "throughput", "best_effort", "pf", femto, n)
        fls = _get(value, "throughput", "best_effort", "fls", femto, n)
        ok &= pf >= fls
        parts.append(f"femto={'on' if femto else 'off'} pf={_f(pf)} fls={_f(fls)}")
    return TrendResult("be_throughput", f"BE throughput PF >= FLS at n={n}", ok, "; ".join(parts))


def voip_below_video(value: Lookup, counts) -> TrendResult:
    counts = [n for n in counts if n >= 15]
    if not counts:
        raise _Missing("no UE count >= 15")
    ok, bad = True, []
    for n in counts:
        for s in SCHEDS:
            voip = _get(value, "plr", "voip", s, False, n)
            video = _get(value, "plr", "video", s, False, n)
            if not voip < video:
                ok = False
                bad.append(f"{s} n={n} voip={_f(voip)} video={_f(video)}")
    detail = "all held" if ok else "; ".join(bad)
    return TrendResult("voip_below_video", f"PLR voip < video at n in {counts}", ok, detail)


def femto_effects(value: Lookup, n=20) -> TrendResult:
    ok, parts = True, []
    for s in SCHEDS:
        off = _get(value, "plr", "best_effort", s, False, n)
        on = _get(value, "plr", "best_effort", s, True, n)
        se_off = _get(value, "spectral_efficiency", None, s, False, n)
        se_on = _get(value, "spectral_efficiency", None, s, True, n)
        gain = se_on / se_off if se_off > 0 else float("inf")
        ok &= on > off and gain >= SE_GAIN
        parts.append(f"{s} BE PLR {_f(off)}->{_f(on)} SE x{gain:.3f}")
    return TrendResult("femto_effects", f"femtos raise BE PLR and SE >= {SE_GAIN}x at n={n}", ok, "; ".join(parts))


def video_fairness_order(value: Lookup, counts=(20, 25, 30)) -> TrendResult:
    ok, parts = True, []
    for n in counts:
        fls, log, pf = (_get(value, "fairness", "video", s, False, n) for s in ("fls", "logrule", "pf"))
        ok &= fls > log > pf
        parts.append(f"n={n} fls={fls:.5f} logrule={log:.5f} pf={pf:.5f}")
    return TrendResult("video_fairness_order", "video FI FLS > Log-Rule > PF", ok, "; ".join(parts))


def load_monotonicity(value: Lookup, counts=(10, 20, 30)) -> TrendResult:
    ok, parts = True, []
    for s in SCHEDS:
        seq = [_get(value, "plr", "video", s, False, n) for n in counts]
        ok &= all(a <= b for a, b in zip(seq, seq[1:]))
        parts.append(f"{s} " + "->".join(_f(x) for x in seq))
    return TrendResult("load_monotonicity", f"video PLR non-decreasing over n={list(counts)}", ok, "; ".join(parts))


def evaluate(value: Lookup, ue_counts) -> list[TrendResult]:
    """Run every trend check; checks whose inputs are absent come back as SKIP."""
    checks = [
        ("video_plr_order", "video PLR ordering", lambda: video_plr_order(value)),
        ("be_throughput", "BE throughput PF >= FLS", lambda: be_throughput_pf_vs_fls(value)),
        ("voip_below_video", "PLR voip < video", lambda: voip_below_video(value, ue_counts)),
        ("femto_effects", "femtocell effects", lambda: femto_effects(value)),
        ("video_fairness_order", "video fairness ordering", lambda: video_fairness_order(value)),
        ("load_monotonicity", "load monotonicity", lambda: load_monotonicity(value)),
    ]
    out = []
    for key, title, fn in checks:
        try:
            out.append(fn())
        except _Missing as exc:
            out.append(TrendResult(key, title, None, str(exc)))
    return out


def report_lookup(reports) -> Lookup:
    """Lookup over seed-averaged :class:`MetricsReport` objects."""
    from .traffic import FlowKind

    index = {(r.scheduler, bool(r.femto), r.n_ues): r for r in reports}

    def value(metric, cls, sched, femto, n):
        rep = index.get((sched, bool(femto), n))
        if rep is None:
            return None
        return rep.value(metric, FlowKind(cls) if cls else None)

    return value
