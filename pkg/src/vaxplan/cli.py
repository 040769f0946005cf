"""Command-line driver.

Exit codes: 0 success, 1 input error, 2 infeasible model, 3 time budget
exhausted without a feasible plan (or backend failure).  Errors go to
standard error as ``vaxplan: error[<kind>]: <message>``.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from typing import List, Optional, Sequence

from . import io
from .instance import InputError, InvalidInstanceError, RobustInstance, validate, validate_robust
from .metrics import compute_metrics, cumulative_by_group, schedule_records, schedule_table
from .model import add_group_restriction, build_baseline, build_robust
from .scalarization import (
    DEFAULT_ALPHAS,
    NormalizationBounds,
    compute_bounds,
    solve_blend,
    sweep,
    write_sweep_csv,
)
from .scenarios import SCENARIOS, ScenarioConfig, generate
from .solve import INFEASIBLE, InfeasibleError, SolverError, certify, default_time_limit, get_backend

log = logging.getLogger("vaxplan")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NO_SOLUTION = 0, 1, 2, 3


class _Exit(Exception):
    def __init__(self, code: int, kind: str, message: str):
        super().__init__(message)
        self.code, self.kind = code, kind


def _fail(kind: str, message: str, code: int) -> int:
    print(f"vaxplan: error[{kind}]: {message}", file=sys.stderr)
    return code


def _csv_floats(text: str) -> List[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ids(values: Optional[Sequence[str]]) -> List[str]:
    out: List[str] = []
    for v in values or ():
        out.extend(x.strip() for x in v.split(",") if x.strip())
    return out


def _stem(path: str) -> str:
    base = os.fspath(path)
    return base[:-5] if base.endswith(".json") else base


def _load(path: str):
    instance, robust = io.read_instance(path)
    return instance, robust


def _model(args, instance, robust: Optional[RobustInstance]):
    if args.robust:
        if robust is None:
            raise InputError("--robust needs an instance with a robust block (pop_lb and eta)")
        model, base = build_robust(robust), robust.base
    else:
        model, base = build_baseline(instance), instance
    restricted = {g.id for g in base.groups if g.temporary_only} | set(_csv_ids(args.restrict_groups))
    return add_group_restriction(model, base, sorted(restricted))


def _time_limit(args) -> float:
    return args.time_limit if args.time_limit is not None else default_time_limit()


def _bounds(args, model, solve_fn) -> NormalizationBounds:
    if getattr(args, "bounds", None):
        with open(args.bounds, encoding="utf-8") as fh:
            return NormalizationBounds.from_dict(json.load(fh)["bounds"])
    return compute_bounds(model, solve_fn, _time_limit(args), args.seed)


def _write_json(path: str, doc: dict) -> None:
    io.atomic_write_text(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# -- subcommands -------------------------------------------------------------


def cmd_validate(args) -> int:
    instance, robust = _load(args.instance)
    violations = validate_robust(robust) if robust is not None else validate(instance)
    if violations:
        for v in violations:
            print(f"vaxplan: error[invalid]: {v}", file=sys.stderr)
        return EXIT_INPUT
    print(f"ok: {instance.name} ({len(instance.neighborhoods)} neighborhoods, {len(instance.groups)} groups, {instance.horizon} days)")
    return EXIT_OK


def cmd_bounds(args) -> int:
    instance, robust = _load(args.instance)
    model = _model(args, instance, robust)
    bounds = compute_bounds(model, get_backend(args.backend), _time_limit(args), args.seed)
    out = args.out or _stem(args.instance) + ".bounds.json"
    _write_json(out, {"bounds": bounds.to_dict(), "restricted_groups": sorted(model.restricted_groups), "robust": bool(args.robust)})
    for name, (lo, hi) in sorted(bounds.values.items()):
        print(f"{name}: f_min={lo:.6f} f_max={hi:.6f}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    instance, robust = _load(args.instance)
    model = _model(args, instance, robust)
    solve_fn = get_backend(args.backend)
    bounds = _bounds(args, model, solve_fn)
    sol = solve_blend(model, args.alpha, bounds, solve_fn, _time_limit(args), args.gap, args.seed)
    if sol.status == INFEASIBLE:
        raise _Exit(EXIT_INFEASIBLE, "infeasible", "the planning model has no feasible plan")
    if sol.values is None:
        raise _Exit(EXIT_NO_SOLUTION, "no-solution", "time limit reached without a feasible plan")
    bad = certify(model, sol)
    if bad:
        log.warning("plan violates %d rows beyond tolerance", len(bad))
    stem = _stem(args.instance)
    out = args.out or stem + ".solution.json"
    io.write_solution(
        out,
        sol,
        instance,
        robust,
        alpha=args.alpha,
        restricted_groups=sorted(model.restricted_groups),
        robust=bool(args.robust),
        bounds=bounds.to_dict(),
    )
    metrics = compute_metrics(sol, model.instance, model.robust)
    metrics_path = args.metrics or _stem(out) + ".metrics.json"
    _write_json(
        metrics_path,
        {"alpha": args.alpha, "status": sol.status, "gap": None if math.isnan(sol.gap) else sol.gap, "objectives": sol.objectives, **metrics.to_dict()},
    )
    obj = " ".join(f"{k}={v:.3f}" for k, v in sorted(sol.objectives.items()))
    print(f"{sol.status}: {obj} P={metrics.P:.2f}% D={metrics.D}")
    print(f"wrote {out} and {metrics_path}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    instance, robust = _load(args.instance)
    model = _model(args, instance, robust)
    solve_fn = get_backend(args.backend)
    bounds = _bounds(args, model, solve_fn)
    result = sweep(model, args.alphas, solve_fn, _time_limit(args), bounds=bounds, gap=args.gap, seed=args.seed)
    out = args.out or _stem(args.instance) + ".sweep.csv"
    write_sweep_csv(result, out)
    if args.solutions:
        os.makedirs(args.solutions, exist_ok=True)
        for rep in result.reports:
            if rep.solution is None:
                continue
            io.write_solution(
                os.path.join(args.solutions, f"alpha_{rep.alpha:g}.json"),
                rep.solution,
                instance,
                robust,
                alpha=rep.alpha,
                restricted_groups=sorted(model.restricted_groups),
                robust=bool(args.robust),
                bounds=bounds.to_dict(),
            )
    for rep in result.reports:
        print(f"alpha={rep.alpha:g} {rep.status} " + " ".join(f"{k}={v:.3f}" for k, v in sorted(rep.objectives.items())))
    print(f"wrote {out}")
    if all(r.status == INFEASIBLE for r in result.reports):
        raise _Exit(EXIT_INFEASIBLE, "infeasible", "no alpha produced a feasible plan")
    if all(r.solution is None for r in result.reports):
        raise _Exit(EXIT_NO_SOLUTION, "no-solution", "no alpha produced a plan within the time limit")
    return EXIT_OK


def _day_range(text: Optional[str]):
    if not text:
        return None
    try:
        lo, _, hi = text.partition("-")
        return int(lo), int(hi or lo)
    except ValueError:
        raise InputError(f"bad day range {text!r}; use FIRST-LAST") from None


def cmd_report(args) -> int:
    doc = io.read_solution(args.solution)
    model, sol = io.plan_from_document(doc)
    if sol.values is None:
        raise _Exit(EXIT_NO_SOLUTION, "no-solution", "solution document holds no plan")
    inst = model.instance
    out_dir = args.out_dir or _stem(args.solution) + "_report"
    os.makedirs(out_dir, exist_ok=True)
    centers = _csv_ids(args.center) or [c.id for c in inst.temporary_centers + inst.permanent_centers]
    days = _day_range(args.days)
    fields = ["center", "kind", "day", "site", "neighborhood", "group", "count"]
    for cid in centers:
        table = schedule_table(sol, inst, cid, days)
        io.atomic_write_csv(os.path.join(out_dir, f"schedule_{cid}.csv"), fields, schedule_records(table))
    cum = cumulative_by_group(sol, inst, model.robust)
    io.atomic_write_csv(
        os.path.join(out_dir, "cumulative_by_group.csv"),
        ["day", "group", "permanent", "temporary", "cumulative", "cumulative_pct"],
        cum,
    )
    print(f"wrote {len(centers)} schedules and cumulative_by_group.csv to {out_dir}")
    return EXIT_OK


def cmd_gen(args) -> int:
    config = ScenarioConfig(
        scenario=args.scenario,
        supply=args.at,
        permanent_capacity=args.perm_capacity,
        temporary_capacity=args.temp_capacity,
        temporary_centers=args.temp_centers,
        temp_center_cost=args.mc,
        horizon=args.horizon,
        demand_total=args.demand_total,
        seed=args.seed,
    )
    instance = generate(config)
    robust = None
    if args.robust_lb is not None:
        robust = lower_bound_split(instance, args.robust_lb)
    io.write_instance(args.out, instance, robust)
    print(f"wrote {args.out}: {instance.name}, total demand {instance.total_demand}")
    return EXIT_OK


def lower_bound_split(instance, fraction: float) -> RobustInstance:
    """Robust variant with pop_lb = floor(fraction * pop) and the rest as slack."""
    from dataclasses import replace

    if not 0.0 <= fraction <= 1.0:
        raise InputError(f"--robust-lb must lie in [0, 1], got {fraction}")
    lb = {l: {p: int(math.floor(fraction * n + 1e-9)) for p, n in row.items()} for l, row in instance.demand.items()}
    eta = {l: {p: n - lb[l][p] for p, n in row.items()} for l, row in instance.demand.items()}
    return RobustInstance(replace(instance, demand=lb), eta)


# -- parser ------------------------------------------------------------------


def _solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--restrict-groups", nargs="*", metavar="GROUP", help="groups served only at temporary centers")
    p.add_argument("--robust", action="store_true", help="solve the demand-slack variant")
    p.add_argument("--time-limit", type=float, help="seconds per solver call (default $VAXPLAN_TIME_LIMIT or 60)")
    p.add_argument("--backend", help="highs or oracle (default $VAXPLAN_BACKEND or highs)")
    p.add_argument("--seed", type=int, default=0, help="solver random seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vaxplan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an instance document")
    p.add_argument("instance")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bounds", help="normalization bounds from the payoff table")
    p.add_argument("instance")
    p.add_argument("--out")
    _solver_flags(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("solve", help="solve the blended model for one alpha")
    p.add_argument("instance")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--gap", type=float, default=0.0, help="relative MIP gap target")
    p.add_argument("--bounds", help="bounds file from the bounds subcommand")
    p.add_argument("--out", help="solution file (default <instance>.solution.json)")
    p.add_argument("--metrics", help="metrics file (default <solution>.metrics.json)")
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="solve a grid of alphas")
    p.add_argument("instance")
    p.add_argument("--alphas", type=_csv_floats, default=list(DEFAULT_ALPHAS))
    p.add_argument("--gap", type=float, default=0.0)
    p.add_argument("--bounds")
    p.add_argument("--out", help="CSV path (default <instance>.sweep.csv)")
    p.add_argument("--solutions", metavar="DIR", help="also write one solution file per alpha")
    _solver_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="schedule and cumulative CSVs from a solution")
    p.add_argument("solution")
    p.add_argument("--out-dir")
    p.add_argument("--center", nargs="*", help="center ids (default: all)")
    p.add_argument("--days", help="day range FIRST-LAST")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen", help="write a shipped scenario as an instance document")
    p.add_argument("scenario", choices=SCENARIOS)
    p.add_argument("--out", required=True)
    p.add_argument("--at", type=float, help="daily supply A_t (required for illustrative)")
    p.add_argument("--seed", type=int, help="demand split seed (required for s1/s2)")
    p.add_argument("--horizon", type=int)
    p.add_argument("--perm-capacity", type=float, help="per center (illustrative) or total (s1/s2)")
    p.add_argument("--temp-capacity", type=float)
    p.add_argument("--temp-centers", type=int)
    p.add_argument("--mc", type=float, help="daily cost of a temporary center")
    p.add_argument("--demand-total", type=int, help="rescale San Bernardo demand to this total")
    p.add_argument("--robust-lb", type=float, metavar="FRACTION", help="add pop_lb = FRACTION*pop and eta blocks")
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except _Exit as exc:
        return _fail(exc.kind, str(exc), exc.code)
    except InvalidInstanceError as exc:
        for v in exc.violations:
            print(f"vaxplan: error[invalid]: {v}", file=sys.stderr)
        return EXIT_INPUT
    except InfeasibleError as exc:
        return _fail("infeasible", str(exc), EXIT_INFEASIBLE)
    except SolverError as exc:
        return _fail("solver", str(exc), EXIT_NO_SOLUTION)
    except (InputError, OSError, KeyError, json.JSONDecodeError) as exc:
        return _fail("input", str(exc), EXIT_INPUT)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
