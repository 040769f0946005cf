"""Campaign indicators and per-center schedules computed from a plan."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

from .instance import InputError, Instance, RobustInstance
from .solve import PlanSolution

# a day counts as active when more than this many people are vaccinated
ACTIVE_THRESHOLD = 0.5


@dataclass
class CampaignMetrics:
    P: float
    D: int
    D_p: Dict[str, int]
    T_p: Optional[Dict[str, float]]
    G_p: Dict[str, float]
    Q: Optional[float] = None
    temporary_total: float = 0.0
    permanent_total: float = 0.0

    def to_dict(self) -> dict:
        return {
            "P_pct": self.P,
            "D_days": self.D,
            "D_p": dict(self.D_p),
            "T_p_pct": None if self.T_p is None else dict(self.T_p),
            "G_p_pct": dict(self.G_p),
            "Q_pct": self.Q,
            "temporary_total": self.temporary_total,
            "permanent_total": self.permanent_total,
        }


def _daily(solution: PlanSolution):
    perm = defaultdict(float)  # (p, t) -> people
    temp = defaultdict(float)
    for (l, p, t, i), x in solution.nonzero("phi"):
        perm[(p, t)] += x
    for (l, p, t, j), x in solution.nonzero("gamma"):
        temp[(p, t)] += x
    return perm, temp


def _last_active(per_day: Dict[int, float]) -> int:
    days = [t for t, x in per_day.items() if x > ACTIVE_THRESHOLD]
    return max(days) if days else 0


def compute_metrics(solution: PlanSolution, instance: Instance, robust: Optional[RobustInstance] = None) -> CampaignMetrics:
    """P, D, D_p, T_p, G_p (and Q for robust runs) from a plan.

    T_p and G_p are aggregate ratios: group p's share of all temporary
    vaccinations, and the share of group p's demand met at temporary
    centers.
    """
    if solution.values is None:
        raise InputError(f"solution has no values (status {solution.status})")
    perm, temp = _daily(solution)
    groups = instance.group_ids
    temp_total = sum(temp.values())
    perm_total = sum(perm.values())
    total = temp_total + perm_total
    P = 100.0 * temp_total / total if total > 0 else 0.0

    day_total: Dict[int, float] = defaultdict(float)
    group_day: Dict[str, Dict[int, float]] = {p: defaultdict(float) for p in groups}
    for (p, t), x in list(perm.items()) + list(temp.items()):
        day_total[t] += x
        group_day[p][t] += x
    D = _last_active(day_total)
    D_p = {p: _last_active(group_day[p]) for p in groups}

    temp_by_group = {p: sum(x for (q, _), x in temp.items() if q == p) for p in groups}
    T_p = None
    if temp_total > 1e-9:
        T_p = {p: 100.0 * temp_by_group[p] / temp_total for p in groups}

    def demand(p):
        d = instance.group_demand(p)
        if robust is not None:
            d += sum(robust.eta(l, p) for l in instance.neighborhoods)
        return d

    G_p = {p: (100.0 * temp_by_group[p] / demand(p) if demand(p) > 0 else 0.0) for p in groups}
    Q = None
    if robust is not None:
        potential = robust.total_potential_demand
        Q = 100.0 * total / potential if potential > 0 else 100.0
    return CampaignMetrics(P, D, D_p, T_p, G_p, Q, temp_total, perm_total)


@dataclass
class ScheduleRow:
    day: int
    site: Optional[str]
    counts: Dict[Tuple[str, str], float] = field(default_factory=dict)

    @property
    def total(self) -> float:
        return sum(self.counts.values())

    @property
    def neighborhoods(self) -> List[str]:
        return sorted({l for l, _ in self.counts})

    def group_totals(self) -> Dict[str, float]:
        out: Dict[str, float] = defaultdict(float)
        for (_, p), x in self.counts.items():
            out[p] += x
        return dict(out)


@dataclass
class ScheduleTable:
    center: str
    kind: str  # "temporary" or "permanent"
    capacity: float
    rows: List[ScheduleRow]


def schedule_table(solution: PlanSolution, instance: Instance, center: str, days: Optional[Tuple[int, int]] = None) -> ScheduleTable:
    """Day-by-day vaccinations at one center; only days with activity appear."""
    if solution.values is None:
        raise InputError("solution has no values")
    temp_ids = {c.id: c for c in instance.temporary_centers}
    perm_ids = {c.id: c for c in instance.permanent_centers}
    if center in temp_ids:
        kind, cap = "temporary", temp_ids[center].capacity
    elif center in perm_ids:
        kind, cap = "permanent", perm_ids[center].capacity
    else:
        raise InputError(f"unknown center {center!r}")
    lo, hi = days if days is not None else (1, instance.horizon)
    if not 1 <= lo <= hi <= instance.horizon:
        raise InputError(f"day range {lo}..{hi} outside 1..{instance.horizon}")

    rows: Dict[int, ScheduleRow] = {}
    if kind == "temporary":
        sites = {t: l for (j, t, l), x in solution.nonzero("y", 0.5) if j == center}
        for (l, p, t, j), x in solution.nonzero("gamma"):
            if j == center and lo <= t <= hi and t in sites:
                rows.setdefault(t, ScheduleRow(t, sites[t])).counts[(l, p)] = x
    else:
        for (l, p, t, i), x in solution.nonzero("phi"):
            if i == center and lo <= t <= hi:
                rows.setdefault(t, ScheduleRow(t, None)).counts[(l, p)] = x
    ordered = [rows[t] for t in sorted(rows) if rows[t].total > 1e-9]
    return ScheduleTable(center, kind, cap, ordered)


def schedule_records(table: ScheduleTable) -> List[dict]:
    out = []
    for row in table.rows:
        for (l, p), x in sorted(row.counts.items()):
            out.append(
                {
                    "center": table.center,
                    "kind": table.kind,
                    "day": row.day,
                    "site": row.site or "",
                    "neighborhood": l,
                    "group": p,
                    "count": round(x, 6),
                }
            )
    return out


def cumulative_by_group(solution: PlanSolution, instance: Instance, robust: Optional[RobustInstance] = None) -> List[dict]:
    """Per day and group: vaccinated that day (split by center type) and cumulative share."""
    perm, temp = _daily(solution)
    out = []
    for p in instance.group_ids:
        demand = instance.group_demand(p)
        if robust is not None:
            demand += sum(robust.eta(l, p) for l in instance.neighborhoods)
        cum = 0.0
        for t in instance.days:
            a, b = perm.get((p, t), 0.0), temp.get((p, t), 0.0)
            cum += a + b
            out.append(
                {
                    "day": t,
                    "group": p,
                    "permanent": round(a, 6),
                    "temporary": round(b, 6),
                    "cumulative": round(cum, 6),
                    "cumulative_pct": round(100.0 * cum / demand, 6) if demand > 0 else 100.0,
                }
            )
    return out
