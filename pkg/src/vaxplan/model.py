"""Solver-agnostic mixed-integer model of the vaccination planning problem.

Variables
---------
``phi(l, p, t, i)``    people of group p from neighborhood l vaccinated on
                       day t at permanent center i (continuous, >= 0)
``gamma(l, p, t, j)``  same, at temporary center j (continuous, >= 0)
``y(j, t, l)``         temporary center j installed in l on day t (binary)
``v(j, p, t, l)``      temporary center j serves group p of l on day t (binary)
``Gamma(l, p)``        share of the demand slack covered (robust model, [0, 1])

Row families are tagged by name; every row carries ``(family, index)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from .instance import (
    InputError,
    Instance,
    InvalidInstanceError,
    RobustInstance,
    priority_weight,
    validate,
    validate_robust,
)

CONTINUOUS = "continuous"
BINARY = "binary"
UNIT = "unit-interval-continuous"

FAMILIES = (
    "supply",
    "demand",
    "temp_capacity",
    "perm_capacity",
    "covering",
    "linking",
    "single_site",
    "restriction",
    "robust_demand",
    "robust_linking",
)

FEAS_TOL = 1e-6


class VariableIndex:
    """Bijection between ``(kind, key)`` and contiguous column ids."""

    def __init__(self):
        self._keys: List[Tuple[str, tuple]] = []
        self._ids: Dict[Tuple[str, tuple], int] = {}
        self._types: List[str] = []
        self.ranges: Dict[str, Tuple[int, int]] = {}

    def _add_kind(self, kind: str, keys: Iterable[tuple], vtype: str) -> None:
        start = len(self._keys)
        for key in keys:
            self._ids[(kind, key)] = len(self._keys)
            self._keys.append((kind, key))
            self._types.append(vtype)
        self.ranges[kind] = (start, len(self._keys))

    def __len__(self) -> int:
        return len(self._keys)

    def id(self, kind: str, *key) -> int:
        return self._ids[(kind, tuple(key))]

    def get(self, kind: str, *key) -> Optional[int]:
        return self._ids.get((kind, tuple(key)))

    def key(self, col: int) -> Tuple[str, tuple]:
        return self._keys[col]

    def vtype(self, col: int) -> str:
        return self._types[col]

    def kind_slice(self, kind: str) -> slice:
        start, stop = self.ranges.get(kind, (0, 0))
        return slice(start, stop)

    def items(self, kind: str):
        s = self.kind_slice(kind)
        for col in range(s.start, s.stop):
            yield col, self._keys[col][1]

    @property
    def types(self) -> List[str]:
        return list(self._types)


@dataclass(frozen=True)
class Objective:
    coeffs: np.ndarray
    sense: str  # "min" or "max"

    def value(self, x: np.ndarray) -> float:
        return float(self.coeffs @ x)


@dataclass(frozen=True)
class LinearProgramModel:
    variables: VariableIndex
    matrix: sp.csr_matrix
    senses: Tuple[str, ...]
    rhs: np.ndarray
    tags: Tuple[Tuple[str, tuple], ...]
    objectives: Dict[str, Objective]
    lower: np.ndarray
    upper: np.ndarray
    instance: Instance
    robust: Optional[RobustInstance] = None
    restricted_groups: FrozenSet[str] = field(default_factory=frozenset)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def n_rows(self) -> int:
        return len(self.tags)

    @property
    def binary(self) -> np.ndarray:
        return np.array([t == BINARY for t in self.variables.types], dtype=bool)

    def family_rows(self, family: str) -> List[int]:
        return [k for k, (fam, _) in enumerate(self.tags) if fam == family]

    def count(self, family: str) -> int:
        return sum(1 for fam, _ in self.tags if fam == family)

    def objective_values(self, x: np.ndarray) -> Dict[str, float]:
        return {name: obj.value(x) for name, obj in self.objectives.items()}

    def violations(self, x: np.ndarray, tol: float = FEAS_TOL) -> List[Tuple[str, tuple, float]]:
        """Rows, bounds and integrality violated by ``x`` beyond ``tol``."""
        x = np.asarray(x, dtype=float)
        out = []
        lhs = self.matrix @ x
        for k, (sense, b) in enumerate(zip(self.senses, self.rhs)):
            a = lhs[k]
            if sense == "<":
                excess = a - b
            elif sense == ">":
                excess = b - a
            else:
                excess = abs(a - b)
            if excess > tol:
                fam, idx = self.tags[k]
                out.append((fam, idx, float(excess)))
        below = self.lower - x
        above = x - self.upper
        for col in np.flatnonzero((below > tol) | (above > tol)):
            kind, key = self.variables.key(col)
            out.append(("bounds", (kind,) + key, float(max(below[col], above[col]))))
        bmask = self.binary
        frac = np.abs(x[bmask] - np.round(x[bmask]))
        for col in np.flatnonzero(bmask)[frac > tol]:
            kind, key = self.variables.key(col)
            out.append(("integrality", (kind,) + key, float(abs(x[col] - round(x[col])))))
        return out

    def with_rows(self, rows: "_Rows") -> "LinearProgramModel":
        if not rows.tags:
            return self
        extra = rows.matrix(self.n_vars)
        return replace(
            self,
            matrix=sp.vstack([self.matrix, extra], format="csr"),
            senses=self.senses + tuple(rows.senses),
            rhs=np.concatenate([self.rhs, np.asarray(rows.rhs, dtype=float)]),
            tags=self.tags + tuple(rows.tags),
        )

    def with_senses(self, family: str, sense: str) -> "LinearProgramModel":
        senses = tuple(sense if fam == family else s for s, (fam, _) in zip(self.senses, self.tags))
        return replace(self, senses=senses)

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> "LinearProgramModel":
        return replace(self, lower=np.asarray(lower, float), upper=np.asarray(upper, float))


class _Rows:
    def __init__(self):
        self.indptr = [0]
        self.indices: List[int] = []
        self.data: List[float] = []
        self.senses: List[str] = []
        self.rhs: List[float] = []
        self.tags: List[Tuple[str, tuple]] = []

    def add(self, cols: Sequence[int], vals: Sequence[float], sense: str, rhs: float, tag) -> None:
        self.indices.extend(cols)
        self.data.extend(vals)
        self.indptr.append(len(self.indices))
        self.senses.append(sense)
        self.rhs.append(float(rhs))
        self.tags.append(tag)

    def matrix(self, n_cols: int) -> sp.csr_matrix:
        return sp.csr_matrix(
            (np.asarray(self.data, float), np.asarray(self.indices, np.int64), np.asarray(self.indptr, np.int64)),
            shape=(len(self.tags), n_cols),
        )


def _index_space(inst: Instance, robust: bool) -> VariableIndex:
    L, P, T = inst.neighborhoods, inst.group_ids, list(inst.days)
    I = [c.id for c in inst.permanent_centers]
    J = [c.id for c in inst.temporary_centers]
    idx = VariableIndex()
    idx._add_kind("phi", ((l, p, t, i) for l in L for p in P for t in T for i in I), CONTINUOUS)
    idx._add_kind("gamma", ((l, p, t, j) for l in L for p in P for t in T for j in J), CONTINUOUS)
    idx._add_kind("y", ((j, t, l) for j in J for t in T for l in L), BINARY)
    idx._add_kind("v", ((j, p, t, l) for j in J for p in P for t in T for l in L), BINARY)
    if robust:
        idx._add_kind("Gamma", ((l, p) for l in L for p in P), UNIT)
    return idx


def _build(inst: Instance, robust: Optional[RobustInstance]) -> LinearProgramModel:
    L, P, T = inst.neighborhoods, inst.group_ids, list(inst.days)
    perm, temp = inst.permanent_centers, inst.temporary_centers
    idx = _index_space(inst, robust is not None)
    vid = idx.id
    rows = _Rows()

    # daily supply
    for t in T:
        cols = [vid("phi", l, p, t, c.id) for l in L for p in P for c in perm]
        cols += [vid("gamma", l, p, t, c.id) for l in L for p in P for c in temp]
        rows.add(cols, [1.0] * len(cols), "<", inst.supply[t - 1], ("supply", (t,)))

    # demand coverage
    for l in L:
        for p in P:
            cols = [vid("phi", l, p, t, c.id) for t in T for c in perm]
            cols += [vid("gamma", l, p, t, c.id) for t in T for c in temp]
            vals = [1.0] * len(cols)
            if robust is None:
                rows.add(cols, vals, ">", inst.pop(l, p), ("demand", (l, p)))
            else:
                eta = robust.eta(l, p)
                rows.add(cols + [vid("Gamma", l, p)], vals + [-eta], ">", inst.pop(l, p), ("robust_demand", (l, p)))

    for c in temp:
        for t in T:
            cols = [vid("gamma", l, p, t, c.id) for l in L for p in P]
            rows.add(cols, [1.0] * len(cols), "<", c.capacity, ("temp_capacity", (c.id, t)))

    for c in perm:
        for t in T:
            cols = [vid("phi", l, p, t, c.id) for l in L for p in P]
            rows.add(cols, [1.0] * len(cols), "<", c.capacity, ("perm_capacity", (c.id, t)))

    for p in P:
        for c in temp:
            for t in T:
                for l in L:
                    cols = [vid("y", c.id, t, r) for r in inst.coverage[l]] + [vid("v", c.id, p, t, l)]
                    vals = [1.0] * len(inst.coverage[l]) + [-1.0]
                    rows.add(cols, vals, ">", 0.0, ("covering", (p, c.id, t, l)))

    for p in P:
        for c in temp:
            for l in L:
                big_m = inst.pop(l, p) if robust is None else inst.pop(l, p) + robust.eta(l, p)
                fam = "linking" if robust is None else "robust_linking"
                for t in T:
                    rows.add(
                        [vid("v", c.id, p, t, l), vid("gamma", l, p, t, c.id)],
                        [float(big_m), -1.0],
                        ">",
                        0.0,
                        (fam, (p, c.id, l, t)),
                    )

    for c in temp:
        for t in T:
            cols = [vid("y", c.id, t, l) for l in L]
            rows.add(cols, [1.0] * len(cols), "<", 1.0, ("single_site", (c.id, t)))

    n = len(idx)
    weights = {(p, t): priority_weight(inst.group(p), t) for p in P for t in T}
    c1 = np.zeros(n)
    for kind in ("phi", "gamma"):
        for col, (l, p, t, _) in idx.items(kind):
            c1[col] = weights[(p, t)]
    c2 = np.zeros(n)
    c2[idx.kind_slice("y")] = inst.temp_center_cost
    objectives = {"f1": Objective(c1, "min"), "f2": Objective(c2, "min")}
    if robust is not None:
        c3 = np.zeros(n)
        c3[idx.kind_slice("Gamma")] = 1.0
        objectives["f3"] = Objective(c3, "max")

    upper = np.full(n, np.inf)
    for kind in ("y", "v", "Gamma"):
        upper[idx.kind_slice(kind)] = 1.0
    return LinearProgramModel(
        variables=idx,
        matrix=rows.matrix(n),
        senses=tuple(rows.senses),
        rhs=np.asarray(rows.rhs, float),
        tags=tuple(rows.tags),
        objectives=objectives,
        lower=np.zeros(n),
        upper=upper,
        instance=inst,
        robust=robust,
    )


def build_baseline(instance: Instance) -> LinearProgramModel:
    """Build the two-objective model (priority cost f1, temporary-center cost f2)."""
    violations = validate(instance)
    if violations:
        raise InvalidInstanceError(violations)
    return _build(instance, None)


def build_robust(robust: RobustInstance) -> LinearProgramModel:
    """Build the demand-slack variant with a third, maximized objective f3."""
    violations = validate_robust(robust)
    if violations:
        raise InvalidInstanceError(violations)
    return _build(robust.base, robust)


def add_group_restriction(model: LinearProgramModel, instance: Instance, restricted_groups) -> LinearProgramModel:
    """Forbid permanent centers for the given groups (one row per group/day/center)."""
    groups = set(restricted_groups)
    unknown = groups - set(instance.group_ids)
    if unknown:
        raise InputError(f"unknown group(s) {sorted(unknown)}")
    if not groups:
        return model
    rows = _Rows()
    vid = model.variables.id
    for p in instance.group_ids:
        if p not in groups:
            continue
        for t in instance.days:
            for c in instance.permanent_centers:
                cols = [vid("phi", l, p, t, c.id) for l in instance.neighborhoods]
                rows.add(cols, [1.0] * len(cols), "=", 0.0, ("restriction", (p, t, c.id)))
    out = model.with_rows(rows)
    return replace(out, restricted_groups=frozenset(model.restricted_groups | groups))


def objective_bound_row(model: LinearProgramModel, coeffs: np.ndarray, sense: str, rhs: float, tag) -> LinearProgramModel:
    """Append a single row ``coeffs @ x (sense) rhs``; used to pin objectives."""
    rows = _Rows()
    nz = np.flatnonzero(coeffs)
    rows.add(nz.tolist(), coeffs[nz].tolist(), sense, rhs, tag)
    return model.with_rows(rows)


def fix_variables(model: LinearProgramModel, cols: np.ndarray, values: np.ndarray) -> LinearProgramModel:
    lower, upper = model.lower.copy(), model.upper.copy()
    lower[cols] = values
    upper[cols] = values
    return model.with_bounds(lower, upper)


# -- free-format MPS export -------------------------------------------------

def write_mps(model: LinearProgramModel, path, objective: Optional[np.ndarray] = None, name: str = "MMV") -> None:
    """Write ``model`` as free MPS, minimizing ``objective`` (default f1).

    Numbers use ``repr`` so coefficients round-trip exactly.
    """
    c = model.objectives["f1"].coeffs if objective is None else np.asarray(objective, float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(mps_text(model, c, name))


def mps_text(model: LinearProgramModel, c: np.ndarray, name: str = "MMV") -> str:
    out = [f"NAME {name}", "ROWS", " N obj"]
    code = {"<": "L", ">": "G", "=": "E"}
    for k, s in enumerate(model.senses):
        out.append(f" {code[s]} r{k}")
    out.append("COLUMNS")
    csc = model.matrix.tocsc()
    binary = model.binary
    in_int = False
    for col in range(model.n_vars):
        if binary[col] and not in_int:
            out.append(" MARKER 'MARKER' 'INTORG'")
            in_int = True
        elif not binary[col] and in_int:
            out.append(" MARKER 'MARKER' 'INTEND'")
            in_int = False
        if c[col] != 0:
            out.append(f" x{col} obj {float(c[col])!r}")
        start, stop = csc.indptr[col], csc.indptr[col + 1]
        for k, a in zip(csc.indices[start:stop], csc.data[start:stop]):
            out.append(f" x{col} r{k} {float(a)!r}")
        if c[col] == 0 and start == stop:
            out.append(f" x{col} obj 0.0")
    if in_int:
        out.append(" MARKER 'MARKER' 'INTEND'")
    out.append("RHS")
    for k, b in enumerate(model.rhs):
        if b != 0:
            out.append(f" rhs r{k} {float(b)!r}")
    out.append("BOUNDS")
    for col in range(model.n_vars):
        lo, up = model.lower[col], model.upper[col]
        if binary[col] and lo == 0 and up == 1:
            out.append(f" BV bnd x{col}")
            continue
        if lo == up:
            out.append(f" FX bnd x{col} {float(lo)!r}")
            continue
        if lo != 0:
            out.append(f" LO bnd x{col} {float(lo)!r}")
        if np.isfinite(up):
            out.append(f" UP bnd x{col} {float(up)!r}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def read_mps(path) -> dict:
    """Parse free MPS written by :func:`write_mps` into dense-free arrays."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    section = None
    row_names: List[str] = []
    senses: List[str] = []
    cols: Dict[str, int] = {}
    entries: List[Tuple[int, int, float]] = []
    c: Dict[int, float] = {}
    rhs: Dict[int, float] = {}
    integer: set = set()
    lower: Dict[int, float] = {}
    upper: Dict[int, float] = {}
    in_int = False
    inv = {"L": "<", "G": ">", "E": "="}
    row_pos: Dict[str, int] = {}
    for line in lines:
        if not line.startswith(" "):
            section = line.split()[0]
            continue
        parts = line.split()
        if section == "ROWS":
            if parts[0] != "N":
                row_pos[parts[1]] = len(row_names)
                row_names.append(parts[1])
                senses.append(inv[parts[0]])
        elif section == "COLUMNS":
            if parts[1] == "'MARKER'":
                in_int = parts[2] == "'INTORG'"
                continue
            j = cols.setdefault(parts[0], len(cols))
            if in_int:
                integer.add(j)
            for rname, val in zip(parts[1::2], parts[2::2]):
                if rname == "obj":
                    c[j] = float(val)
                else:
                    entries.append((row_pos[rname], j, float(val)))
        elif section == "RHS":
            for rname, val in zip(parts[1::2], parts[2::2]):
                rhs[row_pos[rname]] = float(val)
        elif section == "BOUNDS":
            kind, j = parts[0], cols[parts[2]]
            if kind == "BV":
                lower[j], upper[j] = 0.0, 1.0
            elif kind == "FX":
                lower[j] = upper[j] = float(parts[3])
            elif kind == "LO":
                lower[j] = float(parts[3])
            elif kind == "UP":
                upper[j] = float(parts[3])
    n, m = len(cols), len(row_names)
    A = sp.csr_matrix(
        ([e[2] for e in entries], ([e[0] for e in entries], [e[1] for e in entries])), shape=(m, n)
    )
    return {
        "c": np.array([c.get(j, 0.0) for j in range(n)]),
        "A": A,
        "senses": tuple(senses),
        "rhs": np.array([rhs.get(k, 0.0) for k in range(m)]),
        "lower": np.array([lower.get(j, 0.0) for j in range(n)]),
        "upper": np.array([upper.get(j, np.inf) for j in range(n)]),
        "integer": np.array([j in integer for j in range(n)]),
    }
