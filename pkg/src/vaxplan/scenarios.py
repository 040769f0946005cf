"""Shipped instance generators: the illustrative city and San Bernardo s1/s2.

Static inputs (populations, adjacency, group parameters) live in JSON files
under ``vaxplan/data``; everything a user may want to vary goes through
:class:`ScenarioConfig`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .instance import Center, Group, InputError, Instance

SCENARIOS = ("illustrative", "s1", "s2")

Supply = Union[float, Sequence[float]]


@dataclass(frozen=True)
class ScenarioConfig:
    """Scenario id plus optional overrides.

    ``supply`` is A_t (one value for every day, or one per day).
    ``permanent_capacity`` is per center for the illustrative city and the
    total over all centers for San Bernardo, matching how each source
    states it.
    """

    scenario: str
    supply: Optional[Supply] = None
    permanent_capacity: Optional[float] = None
    temporary_capacity: Optional[float] = None
    temporary_centers: Optional[int] = None
    temp_center_cost: Optional[float] = None
    horizon: Optional[int] = None
    demand_total: Optional[int] = None
    groups: Optional[Dict[str, Tuple[float, float]]] = None
    seed: Optional[int] = None

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise InputError(f"unknown scenario {self.scenario!r}; known: {', '.join(SCENARIOS)}")
        for name in ("permanent_capacity", "temporary_capacity", "temporary_centers", "temp_center_cost", "demand_total"):
            val = getattr(self, name)
            if val is not None and val < 0:
                raise InputError(f"{name} override must be >= 0, got {val}")
        if self.horizon is not None and self.horizon < 1:
            raise InputError(f"horizon override must be >= 1, got {self.horizon}")
        if self.supply is not None and min(np.atleast_1d(np.asarray(self.supply, float))) < 0:
            raise InputError("supply override must be >= 0")
        if self.scenario != "illustrative" and self.seed is None:
            raise InputError(f"scenario {self.scenario} needs a seed for the demand split")


def _load(name: str) -> dict:
    return json.loads(resources.files("vaxplan.data").joinpath(name).read_text(encoding="utf-8"))


def largest_remainder(total: int, weights: Sequence[float]) -> List[int]:
    """Integer split of ``total`` proportional to ``weights`` (Hamilton's method)."""
    w = np.asarray(weights, float)
    if total < 0 or w.sum() <= 0:
        raise InputError("largest_remainder needs total >= 0 and positive weights")
    quota = total * w / w.sum()
    base = np.floor(quota).astype(int)
    order = np.argsort(-(quota - base), kind="stable")
    base[order[: total - int(base.sum())]] += 1
    return [int(x) for x in base]


def _supply(value: Supply, horizon: int) -> Tuple[float, ...]:
    arr = np.atleast_1d(np.asarray(value, float))
    if arr.size == 1:
        arr = np.repeat(arr, horizon)
    if arr.size != horizon:
        raise InputError(f"supply has {arr.size} values for a {horizon}-day horizon")
    return tuple(int(a) if float(a).is_integer() else float(a) for a in arr)


def _groups(spec: List[dict], override) -> Tuple[Group, ...]:
    override = override or {}
    unknown = set(override) - {g["id"] for g in spec}
    if unknown:
        raise InputError(f"group override for unknown group(s) {sorted(unknown)}")
    out = []
    for g in spec:
        r, e = override.get(g["id"], (g["risk"], g["risk_growth"]))
        out.append(Group(g["id"], r, e))
    return tuple(out)


def _num(x):
    return int(x) if float(x).is_integer() else float(x)


def gen_illustrative(config: ScenarioConfig) -> Instance:
    """Four macrozones of five neighborhoods, three groups, 20 days."""
    if config.supply is None:
        raise InputError(
            "the illustrative instance needs daily supply A_t (--at); the source example never states it"
        )
    data = _load("illustrative.json")
    horizon = config.horizon or data["horizon"]
    perm_cap = _num(config.permanent_capacity if config.permanent_capacity is not None else data["permanent_capacity"])
    temp_cap = _num(config.temporary_capacity if config.temporary_capacity is not None else data["temporary_capacity"])
    n_temp = config.temporary_centers if config.temporary_centers is not None else data["temporary_centers"]
    macrozones = {k: tuple(ls) for k, ls in data["macrozones"].items()}
    return Instance(
        macrozones=macrozones,
        horizon=horizon,
        groups=_groups(data["groups"], config.groups),
        permanent_centers=tuple(Center(f"P{k}", perm_cap) for k in macrozones),
        temporary_centers=tuple(Center(f"T{n + 1}", temp_cap) for n in range(n_temp)),
        coverage={l: tuple(adj) for l, adj in data["adjacency"].items()},
        supply=_supply(config.supply, horizon),
        demand={l: dict(row) for l, row in data["demand"].items()},
        temp_center_cost=_num(config.temp_center_cost if config.temp_center_cost is not None else data["temp_center_cost"]),
        name="illustrative",
        description="4 macrozones x 5 neighborhoods, groups A-C, 20-day horizon",
        source="illustrative example; neighborhood demand split is synthetic",
    )


def _split_even(total: int, n: int) -> List[int]:
    base, extra = divmod(int(total), n)
    return [base + 1] * extra + [base] * (n - extra)


def gen_san_bernardo(config: ScenarioConfig) -> Instance:
    """San Bernardo commune, scenario s1 (low permanent capacity) or s2 (high)."""
    if config.scenario not in ("s1", "s2"):
        raise InputError(f"unknown San Bernardo scenario {config.scenario!r}")
    if config.seed is None:
        raise InputError("San Bernardo scenarios need a seed")
    data = _load("san_bernardo.json")
    sc = data["scenarios"][config.scenario]
    horizon = config.horizon or data["horizon"]
    total = config.demand_total if config.demand_total is not None else data["demand_total"]
    rng = np.random.default_rng(config.seed)

    names = [m[0] for m in data["macrozones"]]
    mz_totals = largest_remainder(total, [m[1] for m in data["macrozones"]])
    shares = data["group_shares"]
    gids = [g["id"] for g in data["groups"]]
    props = np.asarray(data["neighborhood_proportions"], float)

    macrozones: Dict[str, Tuple[str, ...]] = {}
    demand: Dict[str, Dict[str, int]] = {}
    for k, mz_total in enumerate(mz_totals, start=1):
        mz = f"Z{k:02d}"
        hoods = tuple(f"{mz}-{n + 1}" for n in range(len(props)))
        macrozones[mz] = hoods
        for l, n in zip(hoods, largest_remainder(mz_total, props[rng.permutation(len(props))])):
            demand[l] = dict(zip(gids, largest_remainder(n, [shares[p] for p in gids])))

    perm_total = config.permanent_capacity if config.permanent_capacity is not None else sc["permanent_total"]
    n_perm = data["permanent_centers"]
    n_temp = config.temporary_centers if config.temporary_centers is not None else data["temporary_centers"]
    temp_cap = _num(config.temporary_capacity if config.temporary_capacity is not None else data["temporary_capacity"])
    return Instance(
        macrozones=macrozones,
        horizon=horizon,
        groups=_groups(data["groups"], config.groups),
        permanent_centers=tuple(Center(f"P{i + 1}", c) for i, c in enumerate(_split_even(perm_total, n_perm))),
        temporary_centers=tuple(Center(f"T{j + 1}", temp_cap) for j in range(n_temp)),
        # a temporary center serves its whole macrozone
        coverage={l: hoods for hoods in macrozones.values() for l in hoods},
        supply=_supply(config.supply if config.supply is not None else sc["supply"], horizon),
        demand=demand,
        temp_center_cost=_num(config.temp_center_cost if config.temp_center_cost is not None else data["temp_center_cost"]),
        name=f"san-bernardo-{config.scenario}",
        description="macrozones: " + "; ".join(f"Z{k:02d}={n}" for k, n in enumerate(names, start=1)),
        source=f"San Bernardo census populations; synthetic neighborhood/group split, seed {config.seed}",
    )


def generate(config: ScenarioConfig) -> Instance:
    if config.scenario == "illustrative":
        return gen_illustrative(config)
    return gen_san_bernardo(config)
