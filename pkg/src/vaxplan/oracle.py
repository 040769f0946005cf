"""Exhaustive reference solver for desk-scale instances.

Every placement of temporary centers (one site or none per center and
day) is enumerated.  Once placements are fixed, serving a group at a
temporary center is allowed exactly where some installed site covers the
neighborhood (the least restrictive choice for the service binaries, which
carry no cost).  What remains is a pure allocation problem, which is a
min-cost flow:

    source -> day t (cap A_t) -> center on day t (cap C_i / D_j)
           -> (neighborhood, group) (cap pop at temporary centers)
           -> sink (cap pop)

solved here with successive shortest paths.  Centers of equal capacity are
interchangeable and sites serving the same neighborhoods are equivalent,
so placements are enumerated up to that symmetry.
"""

from __future__ import annotations

import itertools
import math
import time
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from .instance import InputError, Instance, ensure_valid, priority_weight
from .model import build_baseline
from .scalarization import PIN_RTOL, NormalizationBounds, blend_weights, normalize, snap
from .solve import INFEASIBLE, OPTIMAL, PlanSolution

MAX_Y_SLOTS = 20
MAX_V_SLOTS = 64
_EPS = 1e-12


class OracleCapError(InputError):
    """The instance is too large for exhaustive enumeration."""


class MinCostFlow:
    """Successive-shortest-path min-cost flow (Bellman-Ford queue variant).

    Works with negative arc costs as long as the initial network has no
    negative cycle, which holds for the acyclic networks built here.
    """

    def __init__(self, n: int):
        self.n = n
        self.to: List[int] = []
        self.cap: List[float] = []
        self.cost: List[float] = []
        self.adj: List[List[int]] = [[] for _ in range(n)]

    def add_edge(self, u: int, v: int, cap: float, cost: float) -> int:
        e = len(self.to)
        self.to += [v, u]
        self.cap += [float(cap), 0.0]
        self.cost += [float(cost), -float(cost)]
        self.adj[u].append(e)
        self.adj[v].append(e + 1)
        return e

    def flow_on(self, e: int) -> float:
        return self.cap[e + 1]

    def run(self, s: int, t: int, limit: float) -> Tuple[float, float]:
        flow, total = 0.0, 0.0
        n, to, cap, cost, adj = self.n, self.to, self.cap, self.cost, self.adj
        while flow < limit - 1e-9:
            dist = [math.inf] * n
            prev = [-1] * n
            inq = [False] * n
            dist[s] = 0.0
            q = deque([s])
            while q:
                u = q.popleft()
                inq[u] = False
                du = dist[u]
                for e in adj[u]:
                    if cap[e] > 1e-9:
                        v = to[e]
                        nd = du + cost[e]
                        if nd < dist[v] - _EPS:
                            dist[v] = nd
                            prev[v] = e
                            if not inq[v]:
                                inq[v] = True
                                q.append(v)
            if dist[t] == math.inf:
                break
            push = limit - flow
            v = t
            while v != s:
                e = prev[v]
                push = min(push, cap[e])
                v = to[e ^ 1]
            v = t
            while v != s:
                e = prev[v]
                cap[e] -= push
                cap[e ^ 1] += push
                v = to[e ^ 1]
            flow += push
            total += push * dist[t]
        return flow, total


@dataclass
class Allocation:
    feasible: bool
    f1: float
    phi: Dict[tuple, float]
    gamma: Dict[tuple, float]


def allocate(
    instance: Instance,
    sites: Dict[Tuple[str, int], str],
    restricted_groups: Iterable[str] = (),
    links: Optional[FrozenSet[Tuple[str, int, str, str]]] = None,
    maximize: bool = False,
    demand: Optional[Dict[Tuple[str, str], float]] = None,
) -> Allocation:
    """Best (or worst) allocation of people to centers for fixed placements.

    ``sites`` maps ``(temporary center, day)`` to the installation
    neighborhood.  ``links`` optionally lists the allowed
    ``(center, day, neighborhood, group)`` temporary services; by default
    every group of every covered neighborhood is allowed.  Demand is met
    exactly.
    """
    restricted = set(restricted_groups)
    L, P, T = instance.neighborhoods, instance.group_ids, list(instance.days)
    cells = [(l, p) for l in L for p in P]
    pops = {c: (instance.pop(*c) if demand is None else demand[c]) for c in cells}
    need = sum(pops.values())
    node = itertools.count()
    src, snk = next(node), next(node)
    day_node = {t: next(node) for t in T}
    cell_node = {c: next(node) for c in cells}
    perm_node = {(c.id, t): next(node) for c in instance.permanent_centers for t in T}
    temp_node = {(j, t): next(node) for (j, t) in sites}
    net = MinCostFlow(next(node))
    sign = -1.0 if maximize else 1.0
    w = {(p, t): priority_weight(instance.group(p), t) for p in P for t in T}
    for t in T:
        net.add_edge(src, day_node[t], instance.supply[t - 1], 0.0)
    for c in cells:
        net.add_edge(cell_node[c], snk, pops[c], 0.0)
    phi_edges, gamma_edges = {}, {}
    for c in instance.permanent_centers:
        for t in T:
            u = perm_node[(c.id, t)]
            net.add_edge(day_node[t], u, c.capacity, 0.0)
            for (l, p) in cells:
                if p in restricted or pops[(l, p)] <= 0:
                    continue
                phi_edges[(l, p, t, c.id)] = net.add_edge(u, cell_node[(l, p)], need, sign * w[(p, t)])
    caps = {c.id: c.capacity for c in instance.temporary_centers}
    for (j, t), site in sites.items():
        u = temp_node[(j, t)]
        net.add_edge(day_node[t], u, caps[j], 0.0)
        served = instance.served_by_site(site)
        for l in served:
            for p in P:
                if pops[(l, p)] <= 0:
                    continue
                if links is not None and (j, t, l, p) not in links:
                    continue
                gamma_edges[(l, p, t, j)] = net.add_edge(u, cell_node[(l, p)], pops[(l, p)], sign * w[(p, t)])
    flow, cost = net.run(src, snk, need)
    feasible = flow >= need - 1e-7
    phi = {k: net.flow_on(e) for k, e in phi_edges.items() if net.flow_on(e) > 0}
    gamma = {k: net.flow_on(e) for k, e in gamma_edges.items() if net.flow_on(e) > 0}
    return Allocation(feasible, sign * cost, phi, gamma)


def _check_caps(instance: Instance) -> None:
    nj, nt, nl, npg = (len(instance.temporary_centers), instance.horizon, len(instance.neighborhoods), len(instance.groups))
    if nj * nt * nl > MAX_Y_SLOTS or npg * nj * nt * nl > MAX_V_SLOTS:
        raise OracleCapError(
            f"oracle refuses: {nj * nt * nl} placement slots (max {MAX_Y_SLOTS}), "
            f"{npg * nj * nt * nl} service slots (max {MAX_V_SLOTS})"
        )


def placements(instance: Instance) -> List[Dict[Tuple[str, int], str]]:
    """One representative per symmetry class of temporary-center placements."""
    reps: Dict[FrozenSet[str], str] = {}
    for site in instance.neighborhoods:
        key = frozenset(instance.served_by_site(site))
        reps.setdefault(key, site)
    options = [None] + sorted(reps.values(), key=instance.neighborhoods.index)
    classes: Dict[float, List[str]] = {}
    for c in instance.temporary_centers:
        classes.setdefault(c.capacity, []).append(c.id)
    per_day_choices = []
    for cap in sorted(classes):
        ids = classes[cap]
        per_day_choices.append([(ids, combo) for combo in itertools.combinations_with_replacement(range(len(options)), len(ids))])
    day_patterns = []
    for combo in itertools.product(*per_day_choices):
        pat = []
        for ids, picks in combo:
            for j, k in zip(ids, picks):
                if options[k] is not None:
                    pat.append((j, options[k]))
        day_patterns.append(tuple(pat))
    out = []
    for per_day in itertools.product(day_patterns, repeat=instance.horizon):
        out.append({(j, t): site for t, pat in enumerate(per_day, start=1) for j, site in pat})
    return out


@dataclass
class PayoffEntry:
    sites: Dict[Tuple[str, int], str]
    f1: float  # best priority cost for these placements
    f2: float
    allocation: Allocation


def payoff_entries(instance: Instance, restricted_groups: Iterable[str] = ()) -> List[PayoffEntry]:
    """Feasible placements with their best allocation, in enumeration order."""
    ensure_valid(instance)
    _check_caps(instance)
    return list(_entries_cached(instance_key(instance), frozenset(restricted_groups)))


_INSTANCES: Dict[str, Instance] = {}


def instance_key(instance: Instance) -> str:
    from .io import instance_to_text

    text = instance_to_text(instance)
    _INSTANCES[text] = instance
    return text


@lru_cache(maxsize=64)
def _entries_cached(key: str, restricted: FrozenSet[str]) -> Tuple[PayoffEntry, ...]:
    instance = _INSTANCES[key]
    out = []
    for sites in placements(instance):
        alloc = allocate(instance, sites, restricted)
        if alloc.feasible:
            out.append(PayoffEntry(sites, alloc.f1, instance.temp_center_cost * len(sites), alloc))
    return tuple(out)


def oracle_bounds(instance: Instance, restricted_groups: Iterable[str] = ()) -> NormalizationBounds:
    """Lexicographic payoff table by enumeration (same definition as the MILP route)."""
    entries = payoff_entries(instance, restricted_groups)
    if not entries:
        raise InputError("instance is infeasible")
    f1_min = min(e.f1 for e in entries)
    f2_min = min(e.f2 for e in entries)
    tol1 = PIN_RTOL * max(1.0, abs(f1_min))
    f2_max = max(e.f2 for e in entries if e.f1 <= f1_min + tol1)
    f1_max = max(
        allocate(instance, e.sites, restricted_groups, maximize=True).f1 for e in entries if e.f2 <= f2_min + 1e-9
    )
    return NormalizationBounds({"f1": snap(f1_min, f1_max), "f2": snap(f2_min, f2_max)})


def oracle_solve(
    instance: Instance,
    alpha: float,
    bounds: NormalizationBounds,
    restricted_groups: Iterable[str] = (),
) -> PlanSolution:
    """Global optimum of the blended objective by exhaustive enumeration.

    Among placements tied on the blend, the one with the smallest sum of
    normalized objectives is returned (an efficient plan), then the first in
    enumeration order.
    """
    t0 = time.perf_counter()
    weights = blend_weights(alpha, "bi")
    restricted = frozenset(restricted_groups)
    entries = payoff_entries(instance, restricted)
    model = build_baseline(instance)
    if not entries:
        return PlanSolution(INFEASIBLE, None, model.variables, runtime=time.perf_counter() - t0)

    def z(e):
        return weights["f1"] * normalize(e.f1, bounds["f1"]) + weights["f2"] * normalize(e.f2, bounds["f2"])

    zs = [z(e) for e in entries]
    zmin = min(zs)
    tol = 1e-9 * max(1.0, abs(zmin))
    tied = [e for e, val in zip(entries, zs) if val <= zmin + tol]
    best = min(tied, key=lambda e: normalize(e.f1, bounds["f1"]) + normalize(e.f2, bounds["f2"]))

    x = np.zeros(model.n_vars)
    vid = model.variables.id
    for (l, p, t, i), val in best.allocation.phi.items():
        x[vid("phi", l, p, t, i)] = val
    for (l, p, t, j), val in best.allocation.gamma.items():
        x[vid("gamma", l, p, t, j)] = val
    for (j, t), site in best.sites.items():
        x[vid("y", j, t, site)] = 1.0
        for l in instance.served_by_site(site):
            for p in instance.group_ids:
                x[vid("v", j, p, t, l)] = 1.0
    sol = PlanSolution(OPTIMAL, x, model.variables, gap=0.0, runtime=time.perf_counter() - t0)
    sol.objectives = model.objective_values(x)
    sol.blended = weights["f1"] * normalize(sol.objectives["f1"], bounds["f1"]) + weights["f2"] * normalize(
        sol.objectives["f2"], bounds["f2"]
    )
    sol.bound = sol.blended
    return sol


def model_payoff_bounds(model) -> NormalizationBounds:
    if model.robust is not None:
        raise InputError("oracle backend does not handle the robust model")
    return oracle_bounds(model.instance, model.restricted_groups)
