"""Exact size reduction used by the HiGHS backend.

Neighborhoods whose coverage sets coincide are interchangeable for
temporary centers, and permanent centers differ only in capacity.  When
every coverage set is a union of such classes, the model over one lumped
neighborhood per class and a single pooled permanent center is a
relaxation of the original with the same objective values: each original
plan maps onto it by summing.  Conversely a lumped plan splits back by a
transportation argument (flows only meet upper-bound rows, so surplus can
be dropped first); the backend recovers it with an LP on the original
model at the lumped placements.  The backend compares the two
values and falls back to a direct solve if they ever disagree.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .instance import Center, Instance
from .model import LinearProgramModel, add_group_restriction, build_baseline, objective_bound_row

# row families the lumped model knows how to reproduce
_KNOWN = {"supply", "demand", "temp_capacity", "perm_capacity", "covering", "linking", "single_site", "restriction", "pin"}
POOL = "P*"


@dataclass
class Lumping:
    model: LinearProgramModel
    # original column standing for each lumped column
    rep_col: np.ndarray
    # lumped column each original column folds into
    fold: np.ndarray
    rep_of: Dict[str, str]

    def objective(self, c: np.ndarray) -> Optional[np.ndarray]:
        """Lumped cost vector, or None if ``c`` differs inside a class."""
        cl = c[self.rep_col]
        return cl if np.array_equal(cl[self.fold], c) else None

    def fold_values(self, x: np.ndarray) -> np.ndarray:
        """Lumped image of an original plan (flows summed, indicators capped at 1)."""
        xl = np.bincount(self.fold, weights=np.asarray(x, float), minlength=self.model.n_vars)
        b = self.model.binary
        xl[b] = np.minimum(1.0, np.round(xl[b]))
        return xl

    def placements(self, original: LinearProgramModel, xl: np.ndarray) -> np.ndarray:
        """Original vector with the lumped site choices; flows left at zero."""
        x = np.zeros(original.n_vars)
        y = self.model.variables.kind_slice("y")
        x[self.rep_col[y]] = np.round(xl[y])
        return x


def _classes(inst: Instance) -> Dict[frozenset, List[str]]:
    classes: Dict[frozenset, List[str]] = {}
    for l in inst.neighborhoods:
        classes.setdefault(frozenset(inst.coverage[l]), []).append(l)
    return classes


def _default_bounds(model: LinearProgramModel) -> bool:
    if np.any(model.lower != 0):
        return False
    var = model.variables
    for kind in ("phi", "gamma"):
        if np.any(np.isfinite(model.upper[var.kind_slice(kind)])):
            return False
    return all(np.all(model.upper[var.kind_slice(kind)] == 1) for kind in ("y", "v"))


def lumped_instance(inst: Instance):
    """Lumped instance and the neighborhood -> representative map, or None."""
    classes = _classes(inst)
    rep_of = {l: hoods[0] for hoods in classes.values() for l in hoods}
    # every coverage set must consist of whole classes
    for cover in classes:
        for hoods in classes.values():
            inside = [l in cover for l in hoods]
            if any(inside) and not all(inside):
                return None
    if len(classes) == len(inst.neighborhoods) and len(inst.permanent_centers) <= 1:
        return None
    reps = [hoods[0] for hoods in classes.values()]
    members = {hoods[0]: hoods for hoods in classes.values()}
    macrozones = {}
    for k, hoods in inst.macrozones.items():
        kept = tuple(l for l in hoods if l in members)
        if kept:
            macrozones[k] = kept
    coverage = {}
    for cover, hoods in classes.items():
        coverage[hoods[0]] = tuple(r for r in reps if r in cover)
    demand = {r: {p: sum(inst.pop(l, p) for l in members[r]) for p in inst.group_ids} for r in reps}
    pooled = (Center(POOL, sum(c.capacity for c in inst.permanent_centers)),) if inst.permanent_centers else ()
    out = Instance(
        macrozones=macrozones,
        horizon=inst.horizon,
        groups=inst.groups,
        permanent_centers=pooled,
        temporary_centers=inst.temporary_centers,
        coverage=coverage,
        supply=inst.supply,
        demand=demand,
        temp_center_cost=inst.temp_center_cost,
        name=inst.name + "-lumped",
    )
    return out, rep_of


def lump(model: LinearProgramModel) -> Optional[Lumping]:
    """Lumped counterpart of a baseline model, or None when it does not apply."""
    if model.robust is not None or not _default_bounds(model):
        return None
    if {fam for fam, _ in model.tags} - _KNOWN:
        return None
    demand_senses = {s for s, (fam, _) in zip(model.senses, model.tags) if fam == "demand"}
    if len(demand_senses) > 1:
        return None
    inst = model.instance
    got = lumped_instance(inst)
    if got is None:
        return None
    small, rep_of = got
    lm = build_baseline(small)
    if model.restricted_groups:
        lm = add_group_restriction(lm, small, sorted(model.restricted_groups))
    if demand_senses == {"="}:
        lm = lm.with_senses("demand", "=")

    ov, lv = model.variables, lm.variables
    first = inst.permanent_centers[0].id if inst.permanent_centers else None
    rep_col = np.empty(lm.n_vars, dtype=int)
    for kind in ("phi", "gamma", "y", "v"):
        for col, key in lv.items(kind):
            if kind == "phi":
                l, p, t, _ = key
                rep_col[col] = ov.id("phi", l, p, t, first)
            else:
                rep_col[col] = ov.id(kind, *key)
    fold = np.empty(model.n_vars, dtype=int)
    for col, (l, p, t, _) in ov.items("phi"):
        fold[col] = lv.id("phi", rep_of[l], p, t, POOL)
    for col, (l, p, t, j) in ov.items("gamma"):
        fold[col] = lv.id("gamma", rep_of[l], p, t, j)
    for col, (j, t, r) in ov.items("y"):
        fold[col] = lv.id("y", j, t, rep_of[r])
    for col, (j, p, t, l) in ov.items("v"):
        fold[col] = lv.id("v", j, p, t, rep_of[l])
    out = Lumping(lm, rep_col, fold, rep_of)

    # carry objective pins across
    A = model.matrix.tocsr()
    for k, (fam, key) in enumerate(model.tags):
        if fam != "pin":
            continue
        a = np.zeros(model.n_vars)
        a[A.indices[A.indptr[k] : A.indptr[k + 1]]] = A.data[A.indptr[k] : A.indptr[k + 1]]
        al = out.objective(a)
        if al is None:
            return None
        out.model = objective_bound_row(out.model, al, model.senses[k], float(model.rhs[k]), (fam, key))
    return out
