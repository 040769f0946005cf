from dataclasses import replace

import numpy as np
import pytest

from vaxplan.instance import Center, Group, Instance
from vaxplan.lumping import lump, lumped_instance
from vaxplan.model import add_group_restriction, build_baseline
from vaxplan.oracle import oracle_bounds, oracle_solve
from vaxplan.scalarization import compute_bounds, prefer_temporary, solve_blend
from vaxplan.solve import OPTIMAL, SolveRequest, _solve_direct, solve_highs

from support import tiny_instance


def zoned(seed: int) -> Instance:
    """Two macrozones of two neighborhoods; a temporary center serves its whole macrozone."""
    rng = np.random.default_rng(seed)
    mz = {"k1": ("a", "b"), "k2": ("c", "d")}
    cover = {l: hoods for hoods in mz.values() for l in hoods}
    groups = (Group("A", 0.8, 0.06), Group("B", 0.4, 0.02))
    demand = {l: {g.id: int(rng.integers(2, 9)) for g in groups} for l in cover}
    return Instance(
        macrozones=mz,
        horizon=2,
        groups=groups,
        permanent_centers=(Center("P1", int(rng.integers(5, 12))), Center("P2", int(rng.integers(5, 12)))),
        temporary_centers=(Center("T1", int(rng.integers(8, 20))), Center("T2", int(rng.integers(8, 20)))),
        coverage=cover,
        supply=(60, 60),
        demand=demand,
        temp_center_cost=30,
        name=f"zoned-{seed}",
    )


def test_lumped_instance_shape():
    small, rep_of = lumped_instance(zoned(0))
    assert small.neighborhoods == ["a", "c"]
    assert small.coverage == {"a": ("a",), "c": ("c",)}
    assert rep_of == {"a": "a", "b": "a", "c": "c", "d": "c"}
    assert [c.capacity for c in small.permanent_centers] == [sum(c.capacity for c in zoned(0).permanent_centers)]
    assert small.total_demand == zoned(0).total_demand


def test_not_lumped_when_classes_overlap():
    inst = zoned(0)
    cover = dict(inst.coverage, b=("a", "b", "c"))
    assert lumped_instance(replace(inst, coverage=cover, permanent_centers=inst.permanent_centers[:1])) is None


def test_fixed_model_is_not_lumped():
    m = build_baseline(zoned(1))
    assert lump(m) is not None
    upper = m.upper.copy()
    upper[m.variables.kind_slice("y")] = 0.0
    assert lump(m.with_bounds(m.lower, upper)) is None


@pytest.mark.parametrize("seed", range(6))
def test_lumped_matches_direct_and_oracle(seed):
    inst = zoned(seed)
    m = build_baseline(inst)
    b = oracle_bounds(inst)
    for alpha in (0.0, 0.4, 0.9, 1.0):
        c = solve_blend(m, alpha, b, solve_highs, 30, refine=False, tie_break=False)
        o = oracle_solve(inst, alpha, b)
        assert c.blended == pytest.approx(o.blended, rel=1e-7, abs=1e-9)
        assert m.violations(c.values) == []
    for name in ("f1", "f2"):
        req = SolveRequest(m, m.objectives[name].coeffs, time_limit=30)
        assert solve_highs(req).objectives[name] == pytest.approx(_solve_direct(req).objectives[name], rel=1e-9, abs=1e-9)


def test_lumped_restriction_and_bounds():
    inst = zoned(3)
    m = add_group_restriction(build_baseline(inst), inst, ["A"])
    ours = compute_bounds(m, solve_highs, 30)
    ref = oracle_bounds(inst, ["A"])
    for name in ("f1", "f2"):
        assert ours[name] == pytest.approx(ref[name], rel=1e-7, abs=1e-7)


def test_fold_round_trip():
    inst = zoned(2)
    m = build_baseline(inst)
    lp = lump(m)
    c = m.objectives["f1"].coeffs
    sol = solve_highs(SolveRequest(m, c, time_limit=30))
    xl = lp.fold_values(sol.values)
    assert lp.objective(c) @ xl == pytest.approx(c @ sol.values)
    assert lp.model.violations(xl) == []


@pytest.mark.parametrize("seed", [0, 1, 2, 4, 5])
def test_start_does_not_change_optimum(seed):
    inst = tiny_instance(seed)
    m = build_baseline(inst)
    c = m.objectives["f1"].coeffs
    base = solve_highs(SolveRequest(m, c, time_limit=30))
    warm = solve_highs(SolveRequest(m, c, time_limit=30, start=base.values))
    assert warm.status == OPTIMAL
    assert warm.objectives["f1"] == pytest.approx(base.objectives["f1"], rel=1e-9)


def test_prefer_temporary_fills_temporary_centers():
    # 15 people, one day: the permanent center alone is too small, so the
    # temporary center opens; among equal-cost plans it should take 10
    inst = Instance(
        macrozones={"k": ("a",)},
        horizon=1,
        groups=(Group("A", 0.5, 0.1),),
        permanent_centers=(Center("P", 10),),
        temporary_centers=(Center("T", 10),),
        coverage={"a": ("a",)},
        supply=(15,),
        demand={"a": {"A": 15}},
        temp_center_cost=5,
    )
    m = build_baseline(inst)
    b = compute_bounds(m, solve_highs, 30)
    sol = solve_blend(m, 0.5, b, solve_highs, 30)
    assert sol.value("gamma", "a", "A", 1, "T") == pytest.approx(10.0)
    again = prefer_temporary(m, sol, solve_highs, 30)
    assert again.value("gamma", "a", "A", 1, "T") == pytest.approx(10.0)
