import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vaxplan.instance import InputError
from vaxplan.model import build_baseline
from vaxplan.oracle import oracle_bounds
from vaxplan.scalarization import (
    NormalizationBounds,
    blend,
    blend_weights,
    blended_value,
    compute_bounds,
    mark_dominated,
    normalize,
    sweep,
    sweep_rows,
    write_sweep_csv,
)
from vaxplan.solve import OPTIMAL, solve_highs, solve_oracle

from support import robust_reduction_gaps, tiny_instance

FEASIBLE = [0, 1, 2, 4, 5, 6, 7, 11, 12, 13]


def test_normalize_anchors():
    assert normalize(3.0, (3.0, 7.0)) == 0.0
    assert normalize(7.0, (3.0, 7.0)) == 1.0
    assert normalize(9.0, (3.0, 7.0)) == 1.5  # not clamped
    assert normalize(5.0, (5.0, 5.0)) == 0.0
    assert normalize(5.0, (5.0, 5.0 + 1e-14)) == 0.0


def test_blend_weights():
    assert blend_weights(0.3, "bi") == {"f1": 0.3, "f2": 0.7}
    assert blend_weights(0.5, "robust") == {"f1": 0.25, "f2": 0.25, "f3": -0.5}
    with pytest.raises(InputError):
        blend_weights(1.2, "bi")
    with pytest.raises(InputError):
        blend_weights(0.5, "tri")


def test_bounds_validation_and_dict():
    b = NormalizationBounds({"f1": (1.0, 2.0), "f2": (0.0, 5.0)})
    assert NormalizationBounds.from_dict(b.to_dict()) == b
    with pytest.raises(InputError):
        NormalizationBounds({"f1": (2.0, 1.0)})
    with pytest.raises(InputError):
        NormalizationBounds({"f1": (0.0, float("inf"))})


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), alpha=st.floats(0, 1))
def test_blend_vector_matches_formula(seed, alpha):
    m = build_baseline(tiny_instance(seed))
    rng = np.random.default_rng(seed)
    b = NormalizationBounds({"f1": (1.0, 50.0), "f2": (0.0, 40.0)})
    x = rng.uniform(0, 3, m.n_vars)
    c, off = blend(m, alpha, b)
    assert c @ x + off == pytest.approx(blended_value(m.objective_values(x), alpha, b), abs=1e-9)


@pytest.mark.parametrize("seed", FEASIBLE)
def test_bounds_match_oracle(seed):
    inst = tiny_instance(seed)
    ours = compute_bounds(build_baseline(inst), solve_highs, 30)
    ref = oracle_bounds(inst)
    for name in ("f1", "f2"):
        assert ours[name] == pytest.approx(ref[name], rel=1e-7, abs=1e-7)


def test_oracle_backend_bounds_delegate():
    inst = tiny_instance(2)
    assert compute_bounds(build_baseline(inst), solve_oracle) == oracle_bounds(inst)


def test_compute_bounds_needs_two_objectives():
    from dataclasses import replace

    m = build_baseline(tiny_instance(2))
    with pytest.raises(InputError):
        compute_bounds(replace(m, objectives={"f1": m.objectives["f1"]}), solve_highs)


@pytest.mark.parametrize("seed", FEASIBLE[:6])
def test_sweep_anchors_and_monotone(seed):
    inst = tiny_instance(seed)
    m = build_baseline(inst)
    res = sweep(m, [0.0, 0.25, 0.5, 0.75, 1.0], solve_highs, 30)
    b = res.bounds
    first, last = res.reports[0], res.reports[-1]
    assert first.objectives["f2"] == pytest.approx(b["f2"][0], abs=1e-6)
    assert last.objectives["f1"] == pytest.approx(b["f1"][0], rel=1e-7)
    f1 = [r.objectives["f1"] for r in res.reports]
    f2 = [r.objectives["f2"] for r in res.reports]
    assert all(a >= b_ - 1e-6 for a, b_ in zip(f1, f1[1:]))
    assert all(a <= b_ + 1e-6 for a, b_ in zip(f2, f2[1:]))
    # refined endpoints and interior optima are efficient
    assert not any(r.dominated for r in res.reports if r.status == OPTIMAL)


def test_sweep_rejects_unsorted_alphas():
    m = build_baseline(tiny_instance(1))
    with pytest.raises(InputError):
        sweep(m, [0.5, 0.2], solve_highs)
    with pytest.raises(InputError):
        sweep(m, [], solve_highs)


def test_sweep_csv(tmp_path):
    m = build_baseline(tiny_instance(4))
    res = sweep(m, [0.0, 1.0], solve_highs, 30)
    path = tmp_path / "s.csv"
    write_sweep_csv(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "alpha,f1_raw,f2_raw,f1_norm,f2_norm,Z,gap,runtime_s,status,P_pct,D_days,dominated"
    assert len(lines) == 3
    rows = sweep_rows(res)
    assert rows[0]["f2_norm"] == pytest.approx(0.0, abs=1e-9)
    assert rows[1]["f1_norm"] == pytest.approx(0.0, abs=1e-7)


def test_mark_dominated():
    from vaxplan.scalarization import SolveReport

    m = build_baseline(tiny_instance(1))
    reps = [
        SolveReport(0.0, OPTIMAL, {"f1": 5.0, "f2": 1.0}),
        SolveReport(0.5, OPTIMAL, {"f1": 5.0, "f2": 2.0}),
        SolveReport(1.0, OPTIMAL, {"f1": 4.0, "f2": 3.0}),
    ]
    mark_dominated(reps, m)
    assert [r.dominated for r in reps] == [False, True, False]


@pytest.mark.parametrize("seed", FEASIBLE[:5])
def test_robust_without_slack_matches_baseline(seed):
    assert robust_reduction_gaps(tiny_instance(seed)) <= 1e-6
