"""Backend contract for solving a (blended) planning model.

A backend receives a :class:`SolveRequest` carrying one minimized objective
vector and returns a :class:`PlanSolution`.  Two backends ship with the
package:

``highs``   branch-and-cut through HiGHS (``highspy``)
``oracle``  exhaustive enumeration for desk-scale instances, see
            :mod:`vaxplan.oracle`
"""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, Callable, Dict, List, Mapping, Optional

import numpy as np

from .instance import InputError
from .model import FEAS_TOL, LinearProgramModel, VariableIndex, _Rows, fix_variables

if TYPE_CHECKING:  # pragma: no cover
    from .scalarization import ScalarizationSpec

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
FEASIBLE_GAP = "feasible-gap"
INFEASIBLE = "infeasible"
NO_SOLUTION = "time-limit-no-solution"

# achieved relative gap at or below this counts as solved exactly
EXACT_GAP = 1e-6

DEFAULT_TIME_LIMIT = 60.0


class SolverError(RuntimeError):
    """Malformed model or backend failure."""


class InfeasibleError(SolverError):
    def __init__(self, message: str, tags=()):
        super().__init__(message)
        self.tags = list(tags)


def default_time_limit() -> float:
    return float(os.environ.get("VAXPLAN_TIME_LIMIT", DEFAULT_TIME_LIMIT))


def default_backend() -> str:
    return os.environ.get("VAXPLAN_BACKEND", "highs")


@dataclass(frozen=True)
class SolveRequest:
    model: LinearProgramModel
    objective: np.ndarray
    offset: float = 0.0
    time_limit: float = DEFAULT_TIME_LIMIT
    gap: float = 0.0
    seed: int = 0
    options: Mapping[str, Any] = field(default_factory=dict)
    spec: Optional["ScalarizationSpec"] = None
    # optional feasible plan to start the search from
    start: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.time_limit > 0:
            raise InputError("time limit must be > 0")
        if self.gap < 0:
            raise InputError("gap target must be >= 0")
        if len(self.objective) != self.model.n_vars:
            raise SolverError("objective length does not match the variable count")


@dataclass
class PlanSolution:
    status: str
    values: Optional[np.ndarray]
    variables: VariableIndex
    objectives: Dict[str, float] = field(default_factory=dict)
    blended: Optional[float] = None
    gap: float = float("nan")
    bound: Optional[float] = None
    runtime: float = 0.0

    @property
    def has_solution(self) -> bool:
        return self.values is not None

    @property
    def exact(self) -> bool:
        return self.status == OPTIMAL

    def value(self, kind: str, *key) -> float:
        col = self.variables.get(kind, *key)
        return 0.0 if col is None or self.values is None else float(self.values[col])

    def nonzero(self, kind: str, tol: float = 1e-9):
        """Yield ``(key, value)`` for entries of ``kind`` above ``tol``."""
        s = self.variables.kind_slice(kind)
        if self.values is None:
            return
        block = self.values[s]
        for off in np.flatnonzero(np.abs(block) > tol):
            yield self.variables.key(s.start + off)[1], float(block[off])


def _to_highs(model: LinearProgramModel, c: np.ndarray, integer):
    """Convert to a HiGHS LP; ``integer`` is a bool or a per-column mask."""
    import highspy

    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = model.n_vars
    lp.num_row_ = model.n_rows
    lp.col_cost_ = np.asarray(c, float)
    lp.col_lower_ = model.lower
    lp.col_upper_ = np.where(np.isfinite(model.upper), model.upper, inf)
    lo = np.full(model.n_rows, -inf)
    up = np.full(model.n_rows, inf)
    senses = np.asarray(model.senses)
    lo[senses != "<"] = model.rhs[senses != "<"]
    up[senses != ">"] = model.rhs[senses != ">"]
    lp.row_lower_ = lo
    lp.row_upper_ = up
    A = model.matrix
    lp.a_matrix_.format_ = highspy.MatrixFormat.kRowwise
    lp.a_matrix_.num_col_ = model.n_vars
    lp.a_matrix_.num_row_ = model.n_rows
    lp.a_matrix_.start_ = A.indptr.astype(np.int32)
    lp.a_matrix_.index_ = A.indices.astype(np.int32)
    lp.a_matrix_.value_ = A.data.astype(float)
    mask = model.binary if integer is True else np.asarray(integer, bool) if integer is not False else None
    if mask is not None:
        lp.integrality_ = [highspy.HighsVarType.kInteger if b else highspy.HighsVarType.kContinuous for b in mask]
    return lp


def _run_highs(model, c, time_limit, gap, seed, options, integer=True, start=None):
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(time_limit))
    h.setOptionValue("random_seed", int(seed))
    h.setOptionValue("threads", 1)
    if integer is not False:
        h.setOptionValue("mip_rel_gap", float(gap))
        h.setOptionValue("mip_abs_gap", 1e-9)
        h.setOptionValue("mip_feasibility_tolerance", 1e-7)
    h.setOptionValue("primal_feasibility_tolerance", 1e-8)
    for k, val in (options or {}).items():
        h.setOptionValue(k, val)
    h.passModel(_to_highs(model, c, integer))
    if start is not None and integer is not False:
        warm = highspy.HighsSolution()
        warm.col_value = np.asarray(start, float).tolist()
        warm.value_valid = True
        h.setSolution(warm)
    h.run()
    status = h.getModelStatus()
    info = h.getInfo()
    x = None
    if info.primal_solution_status == 2:  # feasible point available
        x = np.array(h.getSolution().col_value, float)
    return status, info, x, h.getRunTime()


def polish(model: LinearProgramModel, c: np.ndarray, x: np.ndarray, time_limit: float = 60.0) -> np.ndarray:
    """Round binaries and re-solve the continuous part exactly.

    Removes the solver's integrality/feasibility tolerance noise; the
    binary pattern is kept, so the objective can only improve.
    """
    import highspy

    bmask = model.binary
    cols = np.flatnonzero(bmask)
    fixed = fix_variables(model, cols, np.round(np.clip(x[cols], 0, 1)))
    status, info, xr, _ = _run_highs(fixed, c, time_limit, 0.0, 0, {}, integer=False)
    if status != highspy.HighsModelStatus.kOptimal or xr is None:
        log.warning("polish LP failed (%s); keeping raw incumbent", status)
        return x
    xr[cols] = np.round(np.clip(x[cols], 0, 1))
    xr[~bmask] = np.maximum(xr[~bmask], model.lower[~bmask])
    return xr


def symmetry_rows(model: LinearProgramModel) -> LinearProgramModel:
    """Order interchangeable temporary centers by use on each day.

    Centers of equal capacity can be relabeled day by day without changing
    any objective, so requiring ``sum_l y[j,t,l] >= sum_l y[j',t,l]`` for
    consecutive equal centers keeps one plan of every class.  The model
    builder leaves such cuts to the backend.
    """
    inst = model.instance
    rows = _Rows()
    vid = model.variables.id
    L = inst.neighborhoods
    centers = inst.temporary_centers
    for a, b in zip(centers, centers[1:]):
        if a.capacity != b.capacity:
            continue
        for t in inst.days:
            cols = [vid("y", a.id, t, l) for l in L] + [vid("y", b.id, t, l) for l in L]
            rows.add(cols, [1.0] * len(L) + [-1.0] * len(L), ">", 0.0, ("symmetry", (a.id, b.id, t)))
    return model.with_rows(rows)


def implied_integer_mask(model: LinearProgramModel, c: np.ndarray) -> np.ndarray:
    """Binaries the branch-and-bound must enforce.

    A site indicator v[j,p,t,l] is capped by the covering row at
    ``sum_{r in N_l} y[j,t,r]``, which is 0 or 1 once y is integral
    (single-site row), so v may be relaxed when no objective prices it;
    :func:`settle_sites` restores an integral value afterwards.
    """
    mask = model.binary.copy()
    v = model.variables.kind_slice("v")
    if not np.any(c[v]):
        mask[v] = False
    return mask


def settle_sites(model: LinearProgramModel, x: np.ndarray) -> np.ndarray:
    """Set every v to its covering sum of (rounded) y; keeps all rows satisfied."""
    inst = model.instance
    vid = model.variables.id
    x = x.copy()
    for col, (j, p, t, l) in model.variables.items("v"):
        on = sum(round(x[vid("y", j, t, r)]) for r in inst.coverage[l])
        x[col] = float(min(1, on))
    return x


def _sites_free(model: LinearProgramModel) -> bool:
    y = model.variables.kind_slice("y")
    return bool(np.all(model.lower[y] == 0) and np.all(model.upper[y] == 1))


def _coverage_classes(inst):
    """Neighborhoods grouped by identical coverage set, in instance order."""
    classes: Dict[frozenset, List[str]] = {}
    for l in inst.neighborhoods:
        classes.setdefault(frozenset(inst.coverage[l]), []).append(l)
    return classes


def capacity_cuts(model: LinearProgramModel) -> LinearProgramModel:
    """Bound each center's daily flow into a coverage class by its placement.

    For neighborhoods sharing the coverage set N, a temporary center j
    serves them on day t only if it stands in N, and then at most
    ``min(D_j, their demand)``.  The per-cell linking rows imply this only
    at integral points; stated directly it tightens the relaxation.
    """
    inst, vid = model.instance, model.variables.id
    robust = model.robust
    rows = _Rows()
    for cover, hoods in _coverage_classes(inst).items():
        demand = sum(inst.pop(l, p) + (robust.eta(l, p) if robust else 0.0) for l in hoods for p in inst.group_ids)
        for c in inst.temporary_centers:
            cap = float(min(c.capacity, demand))
            for t in inst.days:
                g = [vid("gamma", l, p, t, c.id) for l in hoods for p in inst.group_ids]
                y = [vid("y", c.id, t, r) for r in sorted(cover)]
                rows.add(g + y, [1.0] * len(g) + [-cap] * len(y), "<", 0.0, ("class_capacity", (c.id, t, hoods[0])))
    return model.with_rows(rows)


def fix_equivalent_sites(model: LinearProgramModel) -> LinearProgramModel:
    """Close all but the first of any sites that cover exactly the same neighborhoods."""
    inst, vid = model.instance, model.variables.id
    serves: Dict[str, List[str]] = {r: [] for r in inst.neighborhoods}
    for l in inst.neighborhoods:
        for r in inst.coverage[l]:
            serves[r].append(l)
    seen = set()
    closed = []
    for r in inst.neighborhoods:
        key = frozenset(serves[r])
        if key in seen:
            closed.append(r)
        seen.add(key)
    if not closed:
        return model
    cols = np.array([vid("y", c.id, t, r) for c in inst.temporary_centers for t in inst.days for r in closed])
    upper = model.upper.copy()
    upper[cols] = 0.0
    return model.with_bounds(model.lower, upper)


def solve_highs(request: SolveRequest) -> PlanSolution:
    """HiGHS branch-and-cut, on the lumped model when that reduction applies."""
    from .lumping import lump

    model, c = request.model, np.asarray(request.objective, float)
    lumped = lump(model) if _sites_free(model) else None
    cl = lumped.objective(c) if lumped is not None else None
    if cl is None:
        return _solve_direct(request)
    t0 = time.perf_counter()
    start = lumped.fold_values(request.start) if request.start is not None else None
    sub = _solve_direct(replace(request, model=lumped.model, objective=cl, start=start))
    sol = PlanSolution(status=sub.status, values=None, variables=model.variables, gap=sub.gap, bound=sub.bound)
    if sub.values is not None:
        x = settle_sites(model, lumped.placements(model, sub.values))
        x = polish(model, c, x, request.time_limit)
        if c @ x > cl @ sub.values + 1e-9 * max(1.0, abs(cl @ sub.values)) or model.violations(x):
            log.warning("lumped plan did not split back (%.9g vs %.9g); solving directly", c @ x, cl @ sub.values)
            return _solve_direct(request)
        sol.values = x
    sol.runtime = time.perf_counter() - t0
    _attach_objectives(sol, model, c, request.offset)
    return sol


def _solve_direct(request: SolveRequest) -> PlanSolution:
    import highspy

    model, c = request.model, np.asarray(request.objective, float)
    solved_on = model
    if _sites_free(model):
        # exact reductions; skipped when the caller has fixed placements
        solved_on = capacity_cuts(fix_equivalent_sites(symmetry_rows(model)))
    S = highspy.HighsModelStatus
    t0 = time.perf_counter()
    mask = implied_integer_mask(model, c)
    status, info, x, _ = _run_highs(
        solved_on, c, request.time_limit, request.gap, request.seed, request.options, mask, request.start
    )
    if x is not None and not np.array_equal(mask, model.binary):
        x = settle_sites(model, x)
    sol = PlanSolution(status=NO_SOLUTION, values=None, variables=model.variables)
    if status in (S.kInfeasible, S.kUnboundedOrInfeasible) and x is None:
        sol.status = INFEASIBLE
    elif status == S.kUnbounded:
        raise SolverError("model is unbounded")
    elif status in (S.kModelError, S.kLoadError, S.kSolveError):
        raise SolverError(f"backend failure: {h_status(status)}")
    elif x is not None:
        x = polish(model, c, x, request.time_limit)
        gap = float(info.mip_gap) if np.isfinite(info.mip_gap) else float("inf")
        sol.values = x
        sol.gap = max(gap, 0.0)
        sol.bound = float(info.mip_dual_bound) + request.offset
        solved = status == S.kOptimal
        sol.status = OPTIMAL if solved and sol.gap <= max(request.gap, EXACT_GAP) else FEASIBLE_GAP
        if sol.status == OPTIMAL:
            sol.gap = 0.0 if sol.gap <= EXACT_GAP else sol.gap
    sol.runtime = time.perf_counter() - t0
    _attach_objectives(sol, model, c, request.offset)
    return sol


def h_status(status) -> str:
    return str(status).split(".")[-1]


def _attach_objectives(sol: PlanSolution, model: LinearProgramModel, c: np.ndarray, offset: float) -> None:
    if sol.values is None:
        return
    sol.objectives = model.objective_values(sol.values)
    sol.blended = float(c @ sol.values) + offset


def solve_oracle(request: SolveRequest) -> PlanSolution:
    from .oracle import oracle_solve

    spec = request.spec
    if spec is None:
        raise SolverError("oracle backend needs the scalarization (alpha, bounds) on the request")
    model = request.model
    if model.robust is not None:
        raise SolverError("oracle backend does not handle the robust model")
    return oracle_solve(model.instance, spec.alpha, spec.bounds, restricted_groups=model.restricted_groups)


def _oracle_payoff_bounds(model):
    from .oracle import model_payoff_bounds

    return model_payoff_bounds(model)


# enumeration computes its own payoff table and cannot take pinned rows
solve_oracle.payoff_bounds = _oracle_payoff_bounds

BACKENDS: Dict[str, Callable[[SolveRequest], PlanSolution]] = {
    "highs": solve_highs,
    "oracle": solve_oracle,
}


def get_backend(name: Optional[str] = None) -> Callable[[SolveRequest], PlanSolution]:
    name = name or default_backend()
    try:
        return BACKENDS[name]
    except KeyError:
        raise InputError(f"unknown backend {name!r}; known: {sorted(BACKENDS)}") from None


def solve(request: SolveRequest, backend: Optional[str] = None) -> PlanSolution:
    """Solve ``request`` with the named backend (default from environment)."""
    return get_backend(backend)(request)


def certify(model: LinearProgramModel, solution: PlanSolution, tol: float = FEAS_TOL):
    """Return the list of rows/bounds/integrality violated by a solution."""
    if solution.values is None:
        return []
    return model.violations(solution.values, tol)
