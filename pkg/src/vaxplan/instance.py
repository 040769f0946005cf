"""Problem data for multi-modal vaccination planning.

An :class:`Instance` bundles everything the planning model needs: the
geography (macrozones and their neighborhoods), the population groups and
their risk profile, the two kinds of vaccination centers, the coverage
relation for temporary centers, the daily vaccine supply and the demand.

Days are numbered ``1..horizon``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple


class InputError(ValueError):
    """Raised when user-supplied data or arguments are unusable."""


class InvalidInstanceError(InputError):
    """Raised when an instance fails validation; carries the violation list."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid instance: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Group:
    """A population group with its risk level and daily risk growth."""

    id: str
    risk: float
    risk_growth: float
    temporary_only: bool = False


@dataclass(frozen=True)
class Center:
    """A vaccination center and its daily capacity (vaccines/day)."""

    id: str
    capacity: float


@dataclass(frozen=True)
class Instance:
    macrozones: Dict[str, Tuple[str, ...]]
    horizon: int
    groups: Tuple[Group, ...]
    permanent_centers: Tuple[Center, ...]
    temporary_centers: Tuple[Center, ...]
    coverage: Dict[str, Tuple[str, ...]]
    supply: Tuple[float, ...]
    demand: Dict[str, Dict[str, int]]
    temp_center_cost: float
    name: str = "instance"
    description: str = ""
    source: str = ""

    @property
    def neighborhoods(self) -> List[str]:
        """Neighborhood ids in macrozone order."""
        return [l for hoods in self.macrozones.values() for l in hoods]

    @property
    def group_ids(self) -> List[str]:
        return [g.id for g in self.groups]

    @property
    def days(self) -> range:
        return range(1, self.horizon + 1)

    def group(self, gid: str) -> Group:
        for g in self.groups:
            if g.id == gid:
                return g
        raise InputError(f"unknown group {gid!r}")

    def pop(self, l: str, p: str) -> float:
        return self.demand.get(l, {}).get(p, 0)

    def group_demand(self, p: str) -> float:
        return sum(self.pop(l, p) for l in self.neighborhoods)

    @property
    def total_demand(self) -> float:
        return sum(self.pop(l, p) for l in self.neighborhoods for p in self.group_ids)

    def served_by_site(self, site: str) -> List[str]:
        """Neighborhoods a temporary center installed at ``site`` can serve."""
        return [l for l in self.neighborhoods if site in self.coverage.get(l, ())]

    def macrozone_of(self, l: str) -> Optional[str]:
        for k, hoods in self.macrozones.items():
            if l in hoods:
                return k
        return None


@dataclass(frozen=True)
class RobustInstance:
    """Instance whose demand holds the lower estimate, plus per-cell slack."""

    base: Instance
    slack: Dict[str, Dict[str, float]] = field(default_factory=dict)

    def eta(self, l: str, p: str) -> float:
        return self.slack.get(l, {}).get(p, 0.0)

    @property
    def total_potential_demand(self) -> float:
        b = self.base
        return sum(b.pop(l, p) + self.eta(l, p) for l in b.neighborhoods for p in b.group_ids)


def _dupes(ids: Sequence[str]) -> List[str]:
    seen, out = set(), set()
    for x in ids:
        if x in seen:
            out.add(x)
        seen.add(x)
    return sorted(out)


def _bad_number(x, allow_inf: bool = False) -> bool:
    try:
        x = float(x)
    except (TypeError, ValueError):
        return True
    if math.isnan(x):
        return True
    return (not allow_inf) and math.isinf(x)


def validate(instance: Instance) -> List[str]:
    """Return every invariant violation as a readable line, sorted.

    An empty list means the instance is usable by every downstream
    operation.
    """
    v: List[str] = []
    inst = instance
    if not isinstance(inst.horizon, int) or inst.horizon < 1:
        v.append(f"horizon: must be an integer >= 1, got {inst.horizon!r}")

    hoods = inst.neighborhoods
    owner: Dict[str, List[str]] = {}
    for k, ls in inst.macrozones.items():
        for l in ls:
            owner.setdefault(l, []).append(k)
    for l in sorted(owner):
        if len(owner[l]) > 1:
            v.append(f"neighborhood {l}: belongs to several macrozones {sorted(owner[l])}")
    for k in _dupes(list(inst.macrozones)):
        v.append(f"macrozone {k}: duplicate id")

    known = set(hoods)
    for l in sorted(known):
        cov = inst.coverage.get(l)
        if cov is None:
            v.append(f"coverage {l}: missing coverage set")
            continue
        if l not in cov:
            v.append(f"coverage {l}: must contain the neighborhood itself")
        for r in sorted(set(cov) - known):
            v.append(f"coverage {l}: unknown neighborhood {r}")
    for l in sorted(set(inst.coverage) - known):
        v.append(f"coverage {l}: not a neighborhood")

    for gid in _dupes(inst.group_ids):
        v.append(f"group {gid}: duplicate id")
    for g in sorted(inst.groups, key=lambda g: g.id):
        if _bad_number(g.risk) or not 0.0 <= g.risk < 1.0:
            v.append(f"group {g.id}: risk must lie in [0, 1), got {g.risk!r}")
        if _bad_number(g.risk_growth) or g.risk_growth < 0:
            v.append(f"group {g.id}: risk growth must be finite and >= 0, got {g.risk_growth!r}")

    for label, centers in (("permanent", inst.permanent_centers), ("temporary", inst.temporary_centers)):
        for cid in _dupes([c.id for c in centers]):
            v.append(f"{label} center {cid}: duplicate id")
        for c in sorted(centers, key=lambda c: c.id):
            if _bad_number(c.capacity) or c.capacity < 0:
                v.append(f"{label} center {c.id}: capacity must be finite and >= 0, got {c.capacity!r}")

    if isinstance(inst.horizon, int) and len(inst.supply) != inst.horizon:
        v.append(f"supply: expected {inst.horizon} daily values, got {len(inst.supply)}")
    for t, a in enumerate(inst.supply, start=1):
        if _bad_number(a) or a < 0:
            v.append(f"supply day {t}: must be finite and >= 0, got {a!r}")

    gids = set(inst.group_ids)
    for l in sorted(inst.demand):
        if l not in known:
            v.append(f"demand {l}: not a neighborhood")
            continue
        for p in sorted(inst.demand[l]):
            n = inst.demand[l][p]
            if p not in gids:
                v.append(f"demand {l}/{p}: unknown group")
            elif isinstance(n, bool) or not isinstance(n, int) or n < 0:
                v.append(f"demand {l}/{p}: must be a nonnegative integer, got {n!r}")

    if _bad_number(inst.temp_center_cost) or inst.temp_center_cost < 0:
        v.append(f"temp center cost: must be finite and >= 0, got {inst.temp_center_cost!r}")
    return sorted(v)


def validate_robust(robust: RobustInstance) -> List[str]:
    v = validate(robust.base)
    known = set(robust.base.neighborhoods)
    gids = set(robust.base.group_ids)
    for l in sorted(robust.slack):
        for p in sorted(robust.slack[l]):
            eta = robust.slack[l][p]
            if l not in known or p not in gids:
                v.append(f"slack {l}/{p}: unknown neighborhood or group")
            elif _bad_number(eta) or eta < 0:
                v.append(f"slack {l}/{p}: must be finite and >= 0, got {eta!r}")
    return sorted(v)


def ensure_valid(instance: Instance) -> None:
    violations = validate(instance)
    if violations:
        raise InvalidInstanceError(violations)


def priority_weight(group: Group, day: int, horizon: Optional[int] = None) -> float:
    """Cost of vaccinating one person of ``group`` on ``day``.

    Grows geometrically with the day at rate ``risk_growth``, starting from
    ``1 - risk``; high-risk groups start cheap and get expensive fast.
    """
    if day < 1 or (horizon is not None and day > horizon):
        raise InputError(f"day {day} outside 1..{horizon if horizon is not None else 'inf'}")
    return (1.0 - group.risk) * (1.0 + group.risk_growth) ** day


def temp_share_lower_bound(instance: Instance) -> float:
    """Minimum percentage of vaccinations temporary centers must absorb."""
    total = instance.total_demand
    if total <= 0:
        raise InputError("total demand is zero")
    permanent = instance.horizon * sum(c.capacity for c in instance.permanent_centers)
    return max(0.0, (total - permanent) / total) * 100.0


def iter_cells(instance: Instance) -> Iterator[Tuple[str, str]]:
    for l in instance.neighborhoods:
        for p in instance.group_ids:
            yield l, p
