import itertools

import numpy as np
import pytest
from scipy.optimize import linprog

from vaxplan.instance import Center, Group, InputError, Instance, RobustInstance
from vaxplan.model import (
    FAMILIES,
    add_group_restriction,
    build_baseline,
    build_robust,
    read_mps,
    write_mps,
)
from vaxplan.oracle import oracle_bounds, payoff_entries
from vaxplan.solve import OPTIMAL, SolveRequest, solve_highs

from support import tiny_instance


def micro() -> Instance:
    return Instance(
        macrozones={"k": ("a", "b")},
        horizon=2,
        groups=(Group("A", 0.6, 0.2),),
        permanent_centers=(Center("P", 4),),
        temporary_centers=(Center("T", 5),),
        coverage={"a": ("a",), "b": ("b", "a")},
        supply=(20, 20),
        demand={"a": {"A": 6}, "b": {"A": 5}},
        temp_center_cost=3,
    )


def test_family_counts():
    inst = tiny_instance(3)
    L, P, T = len(inst.neighborhoods), len(inst.groups), inst.horizon
    I, J = len(inst.permanent_centers), len(inst.temporary_centers)
    m = build_baseline(inst)
    assert m.count("supply") == T
    assert m.count("demand") == L * P
    assert m.count("temp_capacity") == J * T
    assert m.count("perm_capacity") == I * T
    assert m.count("covering") == P * J * T * L
    assert m.count("linking") == P * J * L * T
    assert m.count("single_site") == J * T
    assert m.n_vars == L * P * T * (I + J) + J * T * L + J * P * T * L
    assert {fam for fam, _ in m.tags} <= set(FAMILIES)


def test_rows_in_canonical_order():
    m = build_baseline(tiny_instance(5))
    order = ["supply", "demand", "temp_capacity", "perm_capacity", "covering", "linking", "single_site"]
    seen = [fam for fam, _ in m.tags]
    firsts = [seen.index(f) for f in order]
    assert firsts == sorted(firsts)


def test_build_is_deterministic():
    a, b = build_baseline(tiny_instance(9)), build_baseline(tiny_instance(9))
    assert a.tags == b.tags
    assert (a.matrix != b.matrix).nnz == 0
    assert np.array_equal(a.rhs, b.rhs)


def test_zero_demand_rows_still_emitted():
    inst = micro()
    dem = {"a": {"A": 0}, "b": {"A": 5}}
    from dataclasses import replace

    m = build_baseline(replace(inst, demand=dem))
    rows = [k for k, (fam, key) in enumerate(m.tags) if fam == "linking" and key[2] == "a"]
    assert len(rows) == 2
    col = m.variables.id("v", "T", "A", 1, "a")
    assert m.matrix[rows[0], col] == 0.0


def test_objective_vectors():
    inst = micro()
    m = build_baseline(inst)
    c1 = m.objectives["f1"].coeffs
    assert c1[m.variables.id("phi", "a", "A", 2, "P")] == pytest.approx(0.4 * 1.2**2)
    assert c1[m.variables.id("gamma", "b", "A", 1, "T")] == pytest.approx(0.4 * 1.2)
    c2 = m.objectives["f2"].coeffs
    assert c2[m.variables.id("y", "T", 1, "a")] == 3
    assert m.objectives["f1"].sense == m.objectives["f2"].sense == "min"


def test_robust_model_has_third_objective():
    r = RobustInstance(micro(), {"a": {"A": 2.0}})
    m = build_robust(r)
    assert m.objectives["f3"].sense == "max"
    assert m.count("robust_demand") == 2 and m.count("demand") == 0
    row = m.family_rows("robust_demand")[0]
    assert m.matrix[row, m.variables.id("Gamma", "a", "A")] == -2.0
    assert m.upper[m.variables.id("Gamma", "a", "A")] == 1.0


def test_group_restriction_rows():
    inst = tiny_instance(11)
    m = add_group_restriction(build_baseline(inst), inst, ["A"])
    assert m.count("restriction") == inst.horizon * len(inst.permanent_centers)
    assert m.restricted_groups == {"A"}
    with pytest.raises(InputError):
        add_group_restriction(m, inst, ["Z"])


def test_violations_detects_each_kind():
    m = build_baseline(micro())
    x = np.zeros(m.n_vars)
    x[m.variables.id("y", "T", 1, "a")] = 0.5
    fams = {v[0] for v in m.violations(x)}
    assert {"demand", "integrality"} <= fams


def test_mps_round_trip(tmp_path):
    inst = tiny_instance(21)
    m = add_group_restriction(build_baseline(inst), inst, [inst.group_ids[0]])
    c = m.objectives["f1"].coeffs / 3.0  # non-terminating decimals
    path = tmp_path / "m.mps"
    write_mps(m, path, c)
    back = read_mps(path)
    assert np.array_equal(back["c"], c)
    assert (back["A"] != m.matrix).nnz == 0
    assert back["senses"] == m.senses
    assert np.array_equal(back["rhs"], m.rhs)
    assert np.array_equal(back["lower"], m.lower)
    assert np.array_equal(back["upper"], m.upper)
    assert np.array_equal(back["integer"], m.binary)


def test_mps_solves_to_same_optimum(tmp_path):
    import highspy

    inst = tiny_instance(4)
    m = build_baseline(inst)
    path = tmp_path / "m.mps"
    write_mps(m, path)
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(str(path))
    h.run()
    ours = solve_highs(SolveRequest(m, m.objectives["f1"].coeffs, time_limit=30))
    assert ours.status == OPTIMAL
    assert h.getInfo().objective_function_value == pytest.approx(ours.objectives["f1"], rel=1e-9)


def _lp_value(m, c, fixed):
    """Continuous optimum with every binary fixed (scipy, separate from the backend)."""
    lb, ub = m.lower.copy(), m.upper.copy()
    cols = np.flatnonzero(m.binary)
    lb[cols] = ub[cols] = fixed
    senses = np.asarray(m.senses)
    A = m.matrix
    le = senses == "<"
    ge = senses == ">"
    eq = senses == "="
    A_ub = np.vstack([A[le].toarray(), -A[ge].toarray()])
    b_ub = np.concatenate([m.rhs[le], -m.rhs[ge]])
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=A[eq].toarray() if eq.any() else None,
        b_eq=m.rhs[eq] if eq.any() else None,
        bounds=list(zip(lb, [None if not np.isfinite(u) else u for u in ub])),
        method="highs",
    )
    return res.fun if res.status == 0 else None


def test_oracle_matches_full_binary_enumeration():
    # every y and v pattern, not only the ones the oracle considers
    inst = micro()
    m = build_baseline(inst)
    nb = int(m.binary.sum())
    assert nb == 8
    c1 = m.objectives["f1"].coeffs
    c2 = m.objectives["f2"].coeffs
    pairs = []
    for bits in itertools.product((0.0, 1.0), repeat=nb):
        f1 = _lp_value(m, c1, np.array(bits))
        if f1 is not None:
            cols = np.flatnonzero(m.binary)
            pairs.append((f1, float(c2[cols] @ np.array(bits))))
    entries = payoff_entries(inst)
    assert min(p[0] for p in pairs) == pytest.approx(min(e.f1 for e in entries), rel=1e-9)
    assert min(p[1] for p in pairs) == pytest.approx(min(e.f2 for e in entries))
    # efficient frontier agrees
    def front(points):
        pts = sorted(set((round(a, 9), round(b, 9)) for a, b in points))
        out = []
        for a, b in pts:
            if not out or b < out[-1][1]:
                out.append((a, b))
        return out

    assert front(pairs) == front([(e.f1, e.f2) for e in entries])
    b = oracle_bounds(inst)
    assert b["f1"][0] == pytest.approx(min(p[0] for p in pairs), rel=1e-9)
