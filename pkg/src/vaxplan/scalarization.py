"""Weighted-sum scalarization of the planning objectives.

Objectives are rescaled to ``(f - f_min) / (f_max - f_min)`` with bounds
taken from a lexicographic payoff table, then blended:

* two objectives:   ``Z = alpha*f1' + (1-alpha)*f2'``
* robust variant:   ``Z = (1-alpha)/2*f1' + (1-alpha)/2*f2' - alpha*f3'``
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .instance import InputError
from .model import LinearProgramModel, fix_variables, objective_bound_row
from .solve import (
    DEFAULT_TIME_LIMIT,
    INFEASIBLE,
    NO_SOLUTION,
    OPTIMAL,
    InfeasibleError,
    PlanSolution,
    SolveRequest,
    SolverError,
)

log = logging.getLogger(__name__)

DEFAULT_ALPHAS = (0.0, 0.2, 0.4, 0.6, 0.8, 0.9, 0.92, 0.94, 0.96, 0.98, 1.0)

SolveFn = Callable[[SolveRequest], PlanSolution]


# spans below this (relative to the magnitudes) are treated as zero
DEGENERATE_RTOL = 1e-9
# slack when pinning an objective at its optimum, relative to its magnitude
PIN_RTOL = 1e-9


def degenerate(lo: float, hi: float) -> bool:
    return hi - lo <= DEGENERATE_RTOL * max(1.0, abs(lo), abs(hi))


def snap(lo: float, hi: float) -> Tuple[float, float]:
    """Order a bound pair and collapse round-off spans onto ``lo``."""
    hi = max(lo, hi)
    return (lo, lo) if degenerate(lo, hi) else (lo, hi)


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-objective ``(f_min, f_max)`` in raw units."""

    values: Dict[str, Tuple[float, float]]

    def __post_init__(self):
        for name, (lo, hi) in self.values.items():
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise InputError(f"bounds for {name} must be finite")
            if hi < lo:
                raise InputError(f"bounds for {name}: f_max < f_min")

    def __getitem__(self, name: str) -> Tuple[float, float]:
        return self.values[name]

    def span(self, name: str) -> float:
        lo, hi = self.values[name]
        return hi - lo

    def to_dict(self) -> dict:
        return {k: {"f_min": lo, "f_max": hi} for k, (lo, hi) in sorted(self.values.items())}

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationBounds":
        return cls({k: (float(v["f_min"]), float(v["f_max"])) for k, v in data.items()})


@dataclass(frozen=True)
class ScalarizationSpec:
    alpha: float
    bounds: NormalizationBounds
    mode: str = "bi"  # "bi" or "robust"


def normalize(raw: float, bounds: Tuple[float, float]) -> float:
    """Min-max rescale; not clamped.  Degenerate bounds map to 0."""
    lo, hi = bounds
    if degenerate(lo, hi):
        return 0.0
    return (raw - lo) / (hi - lo)


def mode_of(model: LinearProgramModel) -> str:
    return "robust" if "f3" in model.objectives else "bi"


def blend_weights(alpha: float, mode: str) -> Dict[str, float]:
    """Signed weights of the normalized objectives inside the minimized Z."""
    if not 0.0 <= alpha <= 1.0:
        raise InputError(f"alpha must lie in [0, 1], got {alpha}")
    if mode == "bi":
        return {"f1": alpha, "f2": 1.0 - alpha}
    if mode == "robust":
        return {"f1": (1.0 - alpha) / 2.0, "f2": (1.0 - alpha) / 2.0, "f3": -alpha}
    raise InputError(f"unknown blend mode {mode!r}")


def blend(model: LinearProgramModel, alpha: float, bounds: NormalizationBounds) -> Tuple[np.ndarray, float]:
    """Return ``(c, offset)`` such that ``c @ x + offset`` equals Z."""
    weights = blend_weights(alpha, mode_of(model))
    c = np.zeros(model.n_vars)
    offset = 0.0
    for name, w in weights.items():
        lo, hi = bounds[name]
        if degenerate(lo, hi) or w == 0.0:
            continue
        c += w * model.objectives[name].coeffs / (hi - lo)
        offset -= w * lo / (hi - lo)
    return c, offset


def blended_value(objectives: Dict[str, float], alpha: float, bounds: NormalizationBounds, mode: str = "bi") -> float:
    return sum(w * normalize(objectives[k], bounds[k]) for k, w in blend_weights(alpha, mode).items())


def _single(model, name, maximize, solve_fn, time_limit, seed, start=None):
    c = model.objectives[name].coeffs
    req = SolveRequest(model, -c if maximize else c, time_limit=time_limit, gap=0.0, seed=seed, start=start)
    sol = solve_fn(req)
    if sol.status == INFEASIBLE:
        raise InfeasibleError(f"model infeasible while optimizing {name}", tags=_tags_hint(model))
    if sol.values is None:
        raise SolverError(f"no solution for {name} within the time limit")
    if sol.status != OPTIMAL:
        log.warning("payoff entry %s not solved to optimality (gap %.3g)", name, sol.gap)
    return sol


def _tags_hint(model: LinearProgramModel) -> List[str]:
    return sorted({fam for fam, _ in model.tags})


def compute_bounds(
    model: LinearProgramModel,
    solve_fn: SolveFn,
    time_limit: float = DEFAULT_TIME_LIMIT,
    seed: int = 0,
) -> NormalizationBounds:
    """Normalization bounds from a lexicographic payoff table.

    ``f_min`` of a minimized objective is its own optimum; ``f_max`` is the
    worst value it takes while another objective sits at its optimum (over
    plans that vaccinate exactly the required demand).  Maximized
    objectives swap roles.
    """
    if len(model.objectives) < 2:
        raise InputError("normalization bounds need at least two objectives")
    delegate = getattr(solve_fn, "payoff_bounds", None)
    if delegate is not None:
        return delegate(model)

    best, plan = {}, {}
    for name, obj in model.objectives.items():
        sol = _single(model, name, obj.sense == "max", solve_fn, time_limit, seed)
        best[name], plan[name] = sol.objectives[name], sol.values

    exact = model.with_senses("demand", "=").with_senses("robust_demand", "=")
    values = {}
    for name, obj in model.objectives.items():
        worst = []
        for other, oobj in model.objectives.items():
            if other == name:
                continue
            g = best[other]
            tol = PIN_RTOL * max(1.0, abs(g))
            if oobj.sense == "min":
                pinned = objective_bound_row(exact, oobj.coeffs, "<", g + tol, ("pin", (other,)))
            else:
                pinned = objective_bound_row(exact, oobj.coeffs, ">", g - tol, ("pin", (other,)))
            # the other objective's optimal plan is feasible here; start from it
            sol = _single(pinned, name, obj.sense == "min", solve_fn, time_limit, seed, plan[other])
            worst.append(sol.objectives[name])
        if obj.sense == "min":
            lo, hi = best[name], max(worst)
        else:
            lo, hi = min(worst), best[name]
        values[name] = snap(lo, hi)
    return NormalizationBounds(values)


@dataclass
class SolveReport:
    alpha: float
    status: str
    objectives: Dict[str, float] = field(default_factory=dict)
    normalized: Dict[str, float] = field(default_factory=dict)
    Z: Optional[float] = None
    gap: float = float("nan")
    bound: Optional[float] = None
    runtime: float = 0.0
    solution: Optional[PlanSolution] = None
    dominated: bool = False
    metrics: Optional[object] = None
    error: Optional[str] = None

    @property
    def exact(self) -> bool:
        return self.status == OPTIMAL


@dataclass
class SweepResult:
    reports: List[SolveReport]
    bounds: NormalizationBounds
    mode: str = "bi"

    @property
    def alphas(self) -> List[float]:
        return [r.alpha for r in self.reports]


def _secondary(model, weights, bounds) -> np.ndarray:
    """Tie-break vector: the zero-weighted objectives, normalized, to be minimized."""
    c = np.zeros(model.n_vars)
    for name, w in weights.items():
        if w != 0.0:
            continue
        lo, hi = bounds[name]
        if degenerate(lo, hi):
            continue
        sign = -1.0 if model.objectives[name].sense == "max" else 1.0
        c += sign * model.objectives[name].coeffs / (hi - lo)
    return c


def prefer_temporary(model: LinearProgramModel, sol: PlanSolution, solve_fn: SolveFn, time_limit: float, seed: int = 0) -> PlanSolution:
    """Among plans with the same centers and objective values, use temporary centers most.

    Binaries are fixed and every objective is pinned at its value in
    ``sol``; the remaining freedom (who is vaccinated where, when supply
    rather than center capacity binds) is resolved by maximizing the
    number vaccinated at temporary centers.
    """
    cols = np.flatnonzero(model.binary)
    pinned = fix_variables(model, cols, np.round(sol.values[cols]))
    for name, obj in model.objectives.items():
        g = sol.objectives[name]
        tol = PIN_RTOL * max(1.0, abs(g))
        if obj.sense == "min":
            pinned = objective_bound_row(pinned, obj.coeffs, "<", g + tol, ("pin", (name,)))
        else:
            pinned = objective_bound_row(pinned, obj.coeffs, ">", g - tol, ("pin", (name,)))
    c = np.zeros(model.n_vars)
    c[model.variables.kind_slice("gamma")] = -1.0
    out = solve_fn(SolveRequest(pinned, c, time_limit=time_limit, gap=0.0, seed=seed))
    if out.values is None or not out.exact:
        log.warning("temporary-use tie-break failed (%s); keeping the plan as solved", out.status)
        return sol
    sol.values = out.values
    return sol


def solve_blend(
    model: LinearProgramModel,
    alpha: float,
    bounds: NormalizationBounds,
    solve_fn: SolveFn,
    time_limit: float = DEFAULT_TIME_LIMIT,
    gap: float = 0.0,
    seed: int = 0,
    refine: bool = True,
    options=None,
    tie_break: bool = True,
) -> PlanSolution:
    """Solve the blended model for one alpha.

    With ``refine``, an exactly solved blend whose weights vanish for some
    objective is re-solved with Z pinned at its optimum, minimizing the
    neglected objectives, so endpoint plans are efficient rather than
    weakly efficient.  With ``tie_break``, the final plan is made
    canonical by :func:`prefer_temporary`.
    """
    mode = mode_of(model)
    c, offset = blend(model, alpha, bounds)
    spec = ScalarizationSpec(alpha, bounds, mode)
    req = SolveRequest(model, c, offset, time_limit=time_limit, gap=gap, seed=seed, options=options or {}, spec=spec)
    sol = solve_fn(req)
    weights = blend_weights(alpha, mode)
    can_pin = getattr(solve_fn, "payoff_bounds", None) is None
    if refine and can_pin and sol.exact and any(w == 0.0 for w in weights.values()):
        sec = _secondary(model, weights, bounds)
        if np.any(sec):
            # slack scaled by Z itself (normalized units), not by c @ x
            z = sol.blended - offset
            pinned = objective_bound_row(model, c, "<", z + PIN_RTOL * max(1.0, abs(sol.blended)), ("pin", ("Z",)))
            sol2 = solve_fn(
                SolveRequest(pinned, sec, time_limit=time_limit, gap=0.0, seed=seed, options=options or {}, start=sol.values)
            )
            if sol2.values is not None:
                sol2.runtime += sol.runtime
                sol2.objectives = model.objective_values(sol2.values)
                sol2.blended = float(c @ sol2.values) + offset
                sol2.status = sol.status if sol2.exact else sol2.status
                sol2.gap = sol.gap if sol2.exact else sol2.gap
                sol2.bound = sol.bound
                sol = sol2
    if tie_break and can_pin and sol.values is not None and sol.exact:
        sol = prefer_temporary(model, sol, solve_fn, time_limit, seed)
        sol.objectives = model.objective_values(sol.values)
        sol.blended = float(c @ sol.values) + offset
    return sol


def sweep(
    model: LinearProgramModel,
    alphas: Sequence[float],
    solve_fn: SolveFn,
    time_limit: float = DEFAULT_TIME_LIMIT,
    bounds: Optional[NormalizationBounds] = None,
    gap: float = 0.0,
    seed: int = 0,
    refine: bool = True,
    options=None,
    tie_break: bool = True,
) -> SweepResult:
    """Solve the blended model for every alpha (ascending) and flag dominated plans."""
    from .metrics import compute_metrics

    alphas = list(alphas)
    if not alphas:
        raise InputError("alpha list is empty")
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise InputError("alpha values must be strictly increasing")
    for a in alphas:
        blend_weights(a, "bi")
    mode = mode_of(model)
    if bounds is None:
        bounds = compute_bounds(model, solve_fn, time_limit, seed)

    reports = []
    for a in alphas:
        rep = SolveReport(alpha=a, status=NO_SOLUTION)
        try:
            sol = solve_blend(model, a, bounds, solve_fn, time_limit, gap, seed, refine, options, tie_break)
        except (SolverError, InputError) as exc:
            rep.error = str(exc)
            reports.append(rep)
            continue
        rep.status, rep.gap, rep.bound, rep.runtime = sol.status, sol.gap, sol.bound, sol.runtime
        if sol.values is not None:
            rep.solution = sol
            rep.objectives = dict(sol.objectives)
            rep.normalized = {k: normalize(v, bounds[k]) for k, v in sol.objectives.items()}
            rep.Z = blended_value(sol.objectives, a, bounds, mode)
            rep.metrics = compute_metrics(sol, model.instance, model.robust)
        reports.append(rep)
    mark_dominated(reports, model)
    return SweepResult(reports, bounds, mode)


def _dominates(a: Dict[str, float], b: Dict[str, float], senses: Dict[str, str], tol: float) -> bool:
    better = False
    for k, s in senses.items():
        da = a[k] if s == "min" else -a[k]
        db = b[k] if s == "min" else -b[k]
        scale = tol * max(1.0, abs(da), abs(db))
        if da > db + scale:
            return False
        if da < db - scale:
            better = True
    return better


def mark_dominated(reports: List[SolveReport], model: LinearProgramModel, tol: float = 1e-6) -> None:
    senses = {k: o.sense for k, o in model.objectives.items()}
    solved = [r for r in reports if r.objectives]
    for r in solved:
        r.dominated = any(_dominates(o.objectives, r.objectives, senses, tol) for o in solved if o is not r)


def sweep_rows(result: SweepResult) -> List[Dict[str, object]]:
    robust = result.mode == "robust"
    names = ["f1", "f2"] + (["f3"] if robust else [])
    rows = []
    for r in result.reports:
        row: Dict[str, object] = {"alpha": r.alpha}
        for n in names:
            row[f"{n}_raw"] = r.objectives.get(n, "")
        for n in names:
            row[f"{n}_norm"] = r.normalized.get(n, "")
        m = r.metrics
        row.update(
            Z="" if r.Z is None else r.Z,
            gap="" if r.gap != r.gap else r.gap,
            runtime_s=round(r.runtime, 3),
            status=r.status,
            P_pct="" if m is None else m.P,
            D_days="" if m is None else m.D,
        )
        if robust:
            row["Q_pct"] = "" if m is None or m.Q is None else m.Q
        row["dominated"] = int(r.dominated)
        rows.append(row)
    return rows


def write_sweep_csv(result: SweepResult, path) -> None:
    rows = sweep_rows(result)
    from .io import atomic_write_csv

    atomic_write_csv(path, list(rows[0].keys()), rows)
