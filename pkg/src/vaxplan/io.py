"""Instance and solution documents (JSON) and CSV output.

Writes are atomic: content goes to a temporary file in the target
directory, which is then renamed over the destination.
"""

from __future__ import annotations

import csv
import io as _io
import json
import os
import tempfile
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .instance import Center, Group, InputError, Instance, RobustInstance

INSTANCE_FORMAT = "vaxplan-instance/1"
SOLUTION_FORMAT = "vaxplan-solution/1"

_TOP_KEYS = {
    "format",
    "meta",
    "horizon",
    "macrozones",
    "groups",
    "permanent_centers",
    "temporary_centers",
    "coverage",
    "supply",
    "demand",
    "temp_center_cost",
    "robust",
}
_REQUIRED = _TOP_KEYS - {"robust", "meta"}


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(fieldnames: Sequence[str], rows: Iterable[dict]) -> str:
    buf = _io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(fieldnames), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return buf.getvalue()


def atomic_write_csv(path, fieldnames: Sequence[str], rows: Iterable[dict]) -> None:
    atomic_write_text(path, csv_text(fieldnames, rows))


def _nested(cells: Dict[str, Dict[str, float]], order_l: List[str], order_p: List[str]) -> Dict[str, Dict[str, float]]:
    return {l: {p: cells[l][p] for p in order_p if p in cells.get(l, {})} for l in order_l if l in cells}


def instance_to_dict(instance: Instance, robust: Optional[RobustInstance] = None) -> dict:
    L, P = instance.neighborhoods, instance.group_ids
    doc = {
        "format": INSTANCE_FORMAT,
        "meta": {"name": instance.name, "description": instance.description, "source": instance.source},
        "horizon": instance.horizon,
        "macrozones": [{"id": k, "neighborhoods": list(ls)} for k, ls in instance.macrozones.items()],
        "groups": [
            {"id": g.id, "risk": g.risk, "risk_growth": g.risk_growth, "temporary_only": g.temporary_only}
            for g in instance.groups
        ],
        "permanent_centers": [{"id": c.id, "capacity": c.capacity} for c in instance.permanent_centers],
        "temporary_centers": [{"id": c.id, "capacity": c.capacity} for c in instance.temporary_centers],
        "coverage": {l: list(instance.coverage[l]) for l in instance.coverage},
        "supply": list(instance.supply),
        "demand": _nested(instance.demand, L, P),
        "temp_center_cost": instance.temp_center_cost,
    }
    if robust is not None:
        doc["robust"] = {
            "pop_lb": _nested(robust.base.demand, L, P),
            "eta": _nested(robust.slack, L, P),
        }
    return doc


def instance_to_text(instance: Instance, robust: Optional[RobustInstance] = None) -> str:
    return json.dumps(instance_to_dict(instance, robust), indent=2, ensure_ascii=False) + "\n"


def _keys(obj, allowed, where, required=()):
    if not isinstance(obj, dict):
        raise InputError(f"{where}: expected an object")
    extra = set(obj) - set(allowed)
    if extra:
        raise InputError(f"{where}: unknown key(s) {sorted(extra)}")
    missing = set(required) - set(obj)
    if missing:
        raise InputError(f"{where}: missing key(s) {sorted(missing)}")


def instance_from_dict(doc: dict) -> Tuple[Instance, Optional[RobustInstance]]:
    """Parse a document; returns the nominal instance and, if present, the robust variant."""
    _keys(doc, _TOP_KEYS, "instance", _REQUIRED)
    if doc["format"] != INSTANCE_FORMAT:
        raise InputError(f"unsupported format {doc['format']!r}")
    meta = doc.get("meta", {})
    _keys(meta, {"name", "description", "source"}, "meta")
    macrozones = {}
    for mz in doc["macrozones"]:
        _keys(mz, {"id", "neighborhoods"}, "macrozone", {"id", "neighborhoods"})
        macrozones[str(mz["id"])] = tuple(str(l) for l in mz["neighborhoods"])
    groups = []
    for g in doc["groups"]:
        _keys(g, {"id", "risk", "risk_growth", "temporary_only"}, "group", {"id", "risk", "risk_growth"})
        groups.append(Group(str(g["id"]), g["risk"], g["risk_growth"], bool(g.get("temporary_only", False))))

    def centers(items, where):
        out = []
        for c in items:
            _keys(c, {"id", "capacity"}, where, {"id", "capacity"})
            out.append(Center(str(c["id"]), c["capacity"]))
        return tuple(out)

    def cells(block, where):
        if not isinstance(block, dict):
            raise InputError(f"{where}: expected an object")
        return {str(l): {str(p): n for p, n in row.items()} for l, row in block.items()}

    instance = Instance(
        macrozones=macrozones,
        horizon=doc["horizon"],
        groups=tuple(groups),
        permanent_centers=centers(doc["permanent_centers"], "permanent center"),
        temporary_centers=centers(doc["temporary_centers"], "temporary center"),
        coverage={str(l): tuple(str(r) for r in rs) for l, rs in doc["coverage"].items()},
        supply=tuple(doc["supply"]),
        demand=cells(doc["demand"], "demand"),
        temp_center_cost=doc["temp_center_cost"],
        name=meta.get("name", "instance"),
        description=meta.get("description", ""),
        source=meta.get("source", ""),
    )
    robust = None
    if "robust" in doc:
        block = doc["robust"]
        _keys(block, {"pop_lb", "eta"}, "robust", {"pop_lb", "eta"})
        from dataclasses import replace

        robust = RobustInstance(replace(instance, demand=cells(block["pop_lb"], "pop_lb")), cells(block["eta"], "eta"))
    return instance, robust


def read_instance(path) -> Tuple[Instance, Optional[RobustInstance]]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read instance {path}: {exc}") from exc
    return instance_from_dict(doc)


def write_instance(path, instance: Instance, robust: Optional[RobustInstance] = None) -> None:
    atomic_write_text(path, instance_to_text(instance, robust))


# -- solutions --------------------------------------------------------------


def solution_to_dict(solution, instance: Instance, robust: Optional[RobustInstance], extra: dict) -> dict:
    values = {}
    if solution.values is not None:
        for kind in solution.variables.ranges:
            values[kind] = [list(key) + [val] for key, val in solution.nonzero(kind, 0.0)]
    doc = {
        "format": SOLUTION_FORMAT,
        "instance": instance_to_dict(instance, robust),
        "status": solution.status,
        "gap": None if solution.gap != solution.gap else solution.gap,
        "bound": solution.bound,
        "runtime_s": solution.runtime,
        "objectives": solution.objectives,
        "blended": solution.blended,
        "values": values,
    }
    doc.update(extra)
    return doc


def write_solution(path, solution, instance: Instance, robust_instance: Optional[RobustInstance] = None, **extra) -> None:
    """Write a solution document; ``extra`` keys (alpha, bounds, ...) are stored alongside."""
    atomic_write_text(path, json.dumps(solution_to_dict(solution, instance, robust_instance, extra), indent=1) + "\n")


def read_solution(path) -> dict:
    """Load a solution document; returns the raw dict plus parsed instance pieces."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read solution {path}: {exc}") from exc
    if doc.get("format") != SOLUTION_FORMAT:
        raise InputError(f"{path}: not a solution document")
    instance, robust = instance_from_dict(doc["instance"])
    doc["_instance"], doc["_robust"] = instance, robust
    return doc


# position of the integer day inside each variable key
_DAY_POS = {"phi": 2, "gamma": 2, "y": 1, "v": 2}


def values_vector(doc: dict, variables) -> np.ndarray:
    """Scatter the sparse ``values`` block of a solution document into a dense vector."""
    x = np.zeros(len(variables))
    for kind, entries in doc["values"].items():
        pos = _DAY_POS.get(kind)
        for entry in entries:
            *key, val = entry
            if pos is not None:
                key[pos] = int(key[pos])
            col = variables.get(kind, *key)
            if col is None:
                raise InputError(f"solution references unknown variable {kind}{tuple(key)}")
            x[col] = val
    return x


def model_for_document(doc: dict):
    """Rebuild the planning model a solution document was solved on."""
    from .model import add_group_restriction, build_baseline, build_robust

    instance, robust = doc["_instance"], doc["_robust"]
    if doc.get("robust"):
        if robust is None:
            raise InputError("solution is marked robust but its instance has no robust block")
        model = build_robust(robust)
        base = robust.base
    else:
        model, base = build_baseline(instance), instance
    return add_group_restriction(model, base, doc.get("restricted_groups", []))


def plan_from_document(doc: dict):
    """Return ``(model, PlanSolution)`` for a loaded solution document."""
    from .solve import PlanSolution

    model = model_for_document(doc)
    gap = doc.get("gap")
    sol = PlanSolution(
        status=doc["status"],
        values=values_vector(doc, model.variables) if doc["values"] else None,
        variables=model.variables,
        objectives=dict(doc.get("objectives") or {}),
        blended=doc.get("blended"),
        gap=float("nan") if gap is None else gap,
        bound=doc.get("bound"),
        runtime=doc.get("runtime_s", 0.0),
    )
    return model, sol
