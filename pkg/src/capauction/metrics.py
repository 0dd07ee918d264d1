"""Comparison statistics for single runs and Monte Carlo campaigns."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .network import Network, Utility

RATIO_TOL = 1e-9


def capacity_ratios(network: Network, allocated, used) -> tuple[float, float]:
    """(r_ANC, r_UNC): allocated and flow-carrying capacity over total bidirectional capacity."""
    total = float(network.capacities.sum())
    allocated = np.asarray(allocated, dtype=float)
    used = np.asarray(used, dtype=float)
    if allocated.size and allocated.shape[-1] != 2 * network.m:
        raise ValueError("allocation does not match the network's product count")
    if used.size and used.shape[-1] != 2 * network.m:
        raise ValueError("usage does not match the network's product count")
    if total <= 0:
        return 0.0, 0.0
    used_total = float(np.clip(used, 0.0, None).sum())
    return float(allocated.sum()) / total, used_total / total


def unfairness(utilities: Sequence[float]) -> float:
    """Spread between the best- and worst-off player."""
    if len(utilities) == 0:
        raise ValueError("need at least one player")
    return float(max(utilities) - min(utilities))


@dataclass(frozen=True)
class MechanismMetrics:
    utilities: tuple[float, ...]
    total_utility: float
    income: float
    r_anc: float
    r_unc: float
    unfairness: float

    def problems(self) -> list[str]:
        out = []
        if not self.r_unc <= self.r_anc + RATIO_TOL:
            out.append(f"r_UNC {self.r_unc} exceeds r_ANC {self.r_anc}")
        if not 0.0 <= self.r_unc + RATIO_TOL:
            out.append(f"r_UNC {self.r_unc} is negative")
        if not self.r_anc <= 1.0 + RATIO_TOL:
            out.append(f"r_ANC {self.r_anc} exceeds 1")
        if self.unfairness < 0:
            out.append(f"negative unfairness {self.unfairness}")
        return out


def mechanism_metrics(network: Network, utilities: Iterable[Utility], allocated, used) -> MechanismMetrics:
    utilities = tuple(utilities)
    values = tuple(float(u.u) for u in utilities)
    r_anc, r_unc = capacity_ratios(network, allocated, used)
    return MechanismMetrics(
        utilities=values,
        total_utility=float(sum(values)),
        income=float(sum(u.c_c for u in utilities)),
        r_anc=r_anc,
        r_unc=r_unc,
        unfairness=unfairness(values) if values else 0.0,
    )


@dataclass(frozen=True)
class RunMetrics:
    """One scenario evaluated under ACA and/or CCA; a missing mechanism is ``None``."""

    index: int
    seed: int
    aca: MechanismMetrics | None = None
    cca: MechanismMetrics | None = None
    aca_ended_by_round_2: bool | None = None

    def problems(self) -> list[str]:
        out = []
        for name, mm in (("aca", self.aca), ("cca", self.cca)):
            if mm is not None:
                out.extend(f"{name}: {p}" for p in mm.problems())
        if self.cca is not None and self.cca.r_unc != self.cca.r_anc:
            out.append(f"cca: r_UNC {self.cca.r_unc} differs from r_ANC {self.cca.r_anc}")
        return out


METRIC_NAMES = ("total_utility", "income", "r_anc", "r_unc", "unfairness")


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class CampaignStats:
    count: int
    aca: dict[str, Summary] | None
    cca: dict[str, Summary] | None
    difference: Summary | None  # U_T_CCA - U_T_ACA
    frac_aca_negative: float | None
    frac_aca_above_cca: float | None
    frac_aca_ended_by_round_2: float | None

    def to_dict(self) -> dict:
        def block(d):
            return None if d is None else {k: v.to_dict() for k, v in d.items()}

        return {
            "count": self.count,
            "std_convention": "sample (n-1); 0 for a single run",
            "aca": block(self.aca),
            "cca": block(self.cca),
            "total_utility_difference_cca_minus_aca": None if self.difference is None else self.difference.to_dict(),
            "fraction_aca_total_utility_negative": self.frac_aca_negative,
            "fraction_aca_total_utility_above_cca": self.frac_aca_above_cca,
            "fraction_aca_ended_by_round_2": self.frac_aca_ended_by_round_2,
        }


def _summary(values: Sequence[float]) -> Summary:
    arr = np.asarray(values, dtype=float)
    std = float(np.std(arr, ddof=1)) if len(arr) > 1 else 0.0
    return Summary(float(np.mean(arr)), std)


def _mechanism_block(runs, name):
    items = [getattr(r, name) for r in runs]
    if any(m is None for m in items):
        return None
    return {k: _summary([getattr(m, k) for m in items]) for k in METRIC_NAMES}


def aggregate(runs: Sequence[RunMetrics]) -> CampaignStats:
    runs = list(runs)
    if not runs:
        raise ValueError("cannot aggregate an empty campaign")
    # order-independent: sort by index so float sums do not depend on input order
    runs.sort(key=lambda r: (r.index, r.seed))
    aca = _mechanism_block(runs, "aca")
    cca = _mechanism_block(runs, "cca")
    n = len(runs)
    diff = neg = above = ended = None
    if aca is not None:
        neg = sum(r.aca.total_utility < 0 for r in runs) / n
        ended = sum(bool(r.aca_ended_by_round_2) for r in runs) / n
    if aca is not None and cca is not None:
        diff = _summary([r.cca.total_utility - r.aca.total_utility for r in runs])
        above = sum(r.aca.total_utility > r.cca.total_utility for r in runs) / n
    return CampaignStats(n, aca, cca, diff, neg, above, ended)


CSV_COLUMNS = (
    "index", "seed",
    "U_T_ACA", "U_T_CCA",
    "income_ACA", "income_CCA",
    "r_ANC_ACA", "r_UNC_ACA", "r_ANC_CCA", "r_UNC_CCA",
    "UF_ACA", "UF_CCA",
    "ACA_ended_by_round_2",
    "utilities_ACA", "utilities_CCA",
)


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        x = round(x, 9)  # drop solver noise so files stay readable and stable
        return repr(0.0 if x == 0 else x)
    return str(x)


def csv_row(run: RunMetrics) -> list[str]:
    a, c = run.aca, run.cca

    def g(m, attr):
        return None if m is None else getattr(m, attr)

    def players(m):
        return "" if m is None else ";".join(_fmt(u) for u in m.utilities)

    values = [
        run.index, run.seed,
        g(a, "total_utility"), g(c, "total_utility"),
        g(a, "income"), g(c, "income"),
        g(a, "r_anc"), g(a, "r_unc"), g(c, "r_anc"), g(c, "r_unc"),
        g(a, "unfairness"), g(c, "unfairness"),
        run.aca_ended_by_round_2 if a is not None else None,
    ]
    return [_fmt(v) for v in values] + [players(a), players(c)]


def write_csv(runs: Iterable[RunMetrics], stream) -> None:
    """Write one row per run; refuses rows that break the ratio/spread invariants."""
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for run in runs:
        bad = run.problems()
        if bad:
            raise ValueError(f"run {run.index} (seed {run.seed}) violates metric invariants: {'; '.join(bad)}")
        writer.writerow(csv_row(run))


def csv_text(runs: Iterable[RunMetrics]) -> str:
    buf = io.StringIO()
    write_csv(runs, buf)
    return buf.getvalue()


def histogram(values: Sequence[float], bins: int | str = "auto") -> dict:
    """Bin edges and counts, ready to serialise."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return {"bin_edges": [], "counts": []}
    counts, edges = np.histogram(arr, bins=bins)
    return {"bin_edges": edges.tolist(), "counts": counts.tolist()}
