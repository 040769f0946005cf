"""Shared helpers for the test suite: tiny random instances and an
independent feasibility checker that works from the solution file alone."""

from __future__ import annotations

import json
import math
from collections import defaultdict

import numpy as np

from vaxplan.instance import Center, Group, Instance, RobustInstance
from vaxplan.model import build_baseline, build_robust
from vaxplan.scalarization import NormalizationBounds, compute_bounds, solve_blend
from vaxplan.solve import SolveRequest, solve_highs


def tiny_instance(seed: int, robust_slack: bool = False):
    """Random instance within the oracle's caps.

    At most 3 neighborhoods, 2 groups, 2 temporary centers and 3 days.
    Permanent capacity is drawn below demand often enough that temporary
    centers matter.
    """
    rng = np.random.default_rng(seed)
    n_l = int(rng.integers(1, 4))
    n_p = int(rng.integers(1, 3))
    n_j = int(rng.integers(1, 3))
    horizon = int(rng.integers(1, 4))
    hoods = [f"n{k}" for k in range(n_l)]
    split = int(rng.integers(1, n_l + 1))
    macrozones = {"m0": tuple(hoods[:split])}
    if split < n_l:
        macrozones["m1"] = tuple(hoods[split:])
    coverage = {}
    for l in hoods:
        others = [r for r in hoods if r != l and rng.random() < 0.5]
        coverage[l] = tuple([l] + others)
    groups = tuple(
        Group(gid, round(float(rng.uniform(0, 0.9)), 3), round(float(rng.uniform(0, 0.12)), 3))
        for gid in ["A", "B"][:n_p]
    )
    demand = {l: {g.id: int(rng.integers(0, 25)) for g in groups} for l in hoods}
    total = sum(n for row in demand.values() for n in row.values())
    per_day = total / horizon
    n_i = int(rng.integers(1, 3))
    # permanent centers cover 40-100% of the average daily need
    perm_day = per_day * float(rng.uniform(0.4, 1.0))
    perm = tuple(Center(f"P{i}", int(math.ceil(perm_day / n_i))) for i in range(n_i))
    temp = tuple(Center(f"T{j}", int(rng.integers(3, 15))) for j in range(n_j))
    cap = sum(c.capacity for c in perm) + sum(c.capacity for c in temp)
    supply = tuple(int(rng.integers(int(math.ceil(per_day)), cap + 6)) if cap >= per_day else cap for _ in range(horizon))
    inst = Instance(
        macrozones=macrozones,
        horizon=horizon,
        groups=groups,
        permanent_centers=perm,
        temporary_centers=temp,
        coverage=coverage,
        supply=supply,
        demand=demand,
        temp_center_cost=int(rng.integers(5, 60)),
        name=f"tiny-{seed}",
    )
    if not robust_slack:
        return inst
    slack = {l: {p: 0.0 for p in row} for l, row in demand.items()}
    return RobustInstance(inst, slack)


def check_solution_file(path, tol: float = 1e-6):
    """Re-read a solution document and list violated constraints.

    Written from the model's definition directly (dicts and loops), with no
    use of the package's matrix builder.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    inst = doc["instance"]
    robust = bool(doc.get("robust"))
    restricted = set(doc.get("restricted_groups", []))
    days = range(1, inst["horizon"] + 1)
    hoods = [l for mz in inst["macrozones"] for l in mz["neighborhoods"]]
    groups = [g["id"] for g in inst["groups"]]
    perm = {c["id"]: c["capacity"] for c in inst["permanent_centers"]}
    temp = {c["id"]: c["capacity"] for c in inst["temporary_centers"]}
    cov = inst["coverage"]
    if robust:
        pop = inst["robust"]["pop_lb"]
        eta = inst["robust"]["eta"]
    else:
        pop, eta = inst["demand"], {}

    vals = defaultdict(float)
    for kind, entries in doc["values"].items():
        for entry in entries:
            *key, x = entry
            vals[(kind,) + tuple(key)] = x
    phi = lambda l, p, t, i: vals[("phi", l, p, t, i)]
    gam = lambda l, p, t, j: vals[("gamma", l, p, t, j)]
    y = lambda j, t, l: vals[("y", j, t, l)]
    v = lambda j, p, t, l: vals[("v", j, p, t, l)]
    Gam = lambda l, p: vals[("Gamma", l, p)]

    bad = []
    for key, x in vals.items():
        kind = key[0]
        if x < -tol:
            bad.append(("nonneg", key, x))
        if kind in ("y", "v") and min(abs(x), abs(x - 1)) > tol:
            bad.append(("integrality", key, x))
        if kind == "Gamma" and x > 1 + tol:
            bad.append(("unit", key, x))
    for t in days:
        used = sum(phi(l, p, t, i) for l in hoods for p in groups for i in perm) + sum(
            gam(l, p, t, j) for l in hoods for p in groups for j in temp
        )
        if used > inst["supply"][t - 1] + tol:
            bad.append(("supply", (t,), used))
        for j, cap in temp.items():
            load = sum(gam(l, p, t, j) for l in hoods for p in groups)
            if load > cap + tol:
                bad.append(("temp_capacity", (j, t), load))
            if sum(y(j, t, l) for l in hoods) > 1 + tol:
                bad.append(("single_site", (j, t), None))
        for i, cap in perm.items():
            load = sum(phi(l, p, t, i) for l in hoods for p in groups)
            if load > cap + tol:
                bad.append(("perm_capacity", (i, t), load))
            for p in restricted:
                if sum(phi(l, p, t, i) for l in hoods) > tol:
                    bad.append(("restriction", (p, t, i), None))
    for l in hoods:
        for p in groups:
            need = pop.get(l, {}).get(p, 0)
            slack = eta.get(l, {}).get(p, 0.0)
            got = sum(phi(l, p, t, i) for t in days for i in perm) + sum(gam(l, p, t, j) for t in days for j in temp)
            target = need + (slack * Gam(l, p) if robust else 0.0)
            if got < target - tol * max(1.0, target):
                bad.append(("demand", (l, p), got - target))
            for t in days:
                for j, cap in temp.items():
                    # service only where a covering site is installed
                    if v(j, p, t, l) > sum(y(j, t, r) for r in cov[l]) + tol:
                        bad.append(("covering", (p, j, t, l), None))
                    big_m = need + (slack if robust else 0.0)
                    if gam(l, p, t, j) > big_m * v(j, p, t, l) + tol:
                        bad.append(("linking", (p, j, l, t), None))
    return bad


def objective_f1(doc_instance: dict, values: dict) -> float:
    groups = {g["id"]: g for g in doc_instance["groups"]}
    total = 0.0
    for kind in ("phi", "gamma"):
        for *key, x in values.get(kind, []):
            g = groups[key[1]]
            total += (1 - g["risk"]) * math.pow(1 + g["risk_growth"], key[2]) * x
    return total


def robust_reduction_gaps(inst, alphas=(0.0, 0.3, 0.7, 1.0)):
    """Largest relative differences between the slack-free robust model and the baseline.

    Single-objective optima of f1 and f2 must coincide; with shared f1/f2
    bounds the robust blend must equal ``(1-alpha)`` times the baseline's
    equal-weight blend minus ``alpha`` (every Gamma at 1).
    """
    base = build_baseline(inst)
    rob = build_robust(RobustInstance(inst, {l: {p: 0.0 for p in row} for l, row in inst.demand.items()}))
    gaps = []
    for name in ("f1", "f2"):
        a = solve_highs(SolveRequest(base, base.objectives[name].coeffs, time_limit=30)).objectives[name]
        b = solve_highs(SolveRequest(rob, rob.objectives[name].coeffs, time_limit=30)).objectives[name]
        gaps.append(abs(a - b) / max(1.0, abs(a)))
    bb = compute_bounds(base, solve_highs, 30)
    n_cells = len(inst.neighborhoods) * len(inst.groups)
    rb = NormalizationBounds({**bb.values, "f3": (0.0, float(n_cells))})
    z_half = solve_blend(base, 0.5, bb, solve_highs, 30).blended
    for alpha in alphas:
        sol = solve_blend(rob, alpha, rb, solve_highs, 30, refine=False)
        expected = (1 - alpha) * z_half - alpha
        gaps.append(abs(sol.blended - expected) / max(1.0, abs(expected)))
        if alpha > 0:
            gaps.append(abs(sol.objectives["f3"] - n_cells) / n_cells)
    return max(gaps)
