import math

import numpy as np
import pytest

from branchlab.criteria import (
    Criterion,
    CriterionSpec,
    EvalContext,
    evaluate_candidates,
)
from branchlab.lp import solve
from branchlab.model import MipProblem, detect_fractional
from branchlab.winnow import CListLeafSignal, WinnowParams, run, stage1


def fractional_problem(seed=5, n=6, m=4):
    """Random pure-IP whose LP relaxation has several fractional values."""
    rng = np.random.default_rng(seed)
    while True:
        obj = rng.integers(-6, 7, size=n).astype(float)
        rows = rng.integers(-4, 5, size=(m, n)).astype(float)
        mid = rng.uniform(0.5, 3.5, size=n)
        rhs = rows @ mid - rng.uniform(0.2, 2.0, size=m)
        p = MipProblem(name="w", obj=obj, rows=rows, rhs=rhs,
                       lower=np.zeros(n), upper=np.full(n, 4.0),
                       integer_mask=np.ones(n, bool))
        sol = solve(p.to_lp())
        if sol.is_optimal:
            frac = detect_fractional(sol, p)
            if len(frac) >= 3:
                return p, sol, frac


def test_stage1_orders_by_closeness_to_half():
    p, sol, frac = fractional_problem()
    ctx = EvalContext(problem=p, check_incumbent=False)
    params = WinnowParams(n0=2, n1=2)
    f0, f1, _ = stage1(p.to_lp(), sol, frac, params, ctx)
    dist = {j: abs(frac[j][1] - 0.5) for j in frac}
    worst_kept = max(dist[j] for j in f0)
    best_dropped = min((dist[j] for j in frac if j not in f0),
                       default=math.inf)
    assert worst_kept <= best_dropped + 1e-12
    assert set(f1) <= set(f0)


def test_stage1_admits_all_when_n0_large():
    p, sol, frac = fractional_problem()
    ctx = EvalContext(problem=p, check_incumbent=False)
    f0, _, _ = stage1(p.to_lp(), sol, frac, WinnowParams(n0=50), ctx)
    assert sorted(f0) == sorted(frac)


def test_clist_excluding_all_fractionals_makes_a_leaf():
    p, sol, frac = fractional_problem()
    ctx = EvalContext(problem=p, check_incumbent=False)
    dead = frozenset(j for j in range(p.n_cols) if j not in frac)
    with pytest.raises(CListLeafSignal):
        stage1(p.to_lp(), sol, frac, WinnowParams(clist=dead), ctx)


def test_stage2_counts_and_nesting():
    p, sol, frac = fractional_problem()
    ctx = EvalContext(problem=p, check_incumbent=False)
    params = WinnowParams(n1=3, n2_root=2, k2=3)
    f2, s2, f1, s1 = run(p.to_lp(), sol, frac, params, ctx, depth=0)
    assert set(f2) <= set(f1) <= set(frac)
    assert len(f2) == 2 and len(f1) == 3
    # two truncated probes per F1 member
    assert ctx.counters.lp_solves == 2 * len(f1)
    del s1, s2


def test_large_k2_matches_unbudgeted_evals():
    p, sol, frac = fractional_problem(seed=11)
    ctx = EvalContext(problem=p, check_incumbent=False)
    params = WinnowParams(n1=3, k2=5000)
    f2, s2, f1, _ = run(p.to_lp(), sol, frac, params, ctx, depth=0)
    full_ctx = EvalContext(problem=p, check_incumbent=False)
    spec = CriterionSpec(criterion=Criterion.C1_PRODUCT)
    full = evaluate_candidates(p.to_lp(), sol, f1, full_ctx, spec, frac)
    for j in f1:
        assert s2[j].eval_up == pytest.approx(full[j].eval_up, abs=1e-6)
        assert s2[j].eval_down == pytest.approx(full[j].eval_down, abs=1e-6)
    del f2


def test_monotone_evals_in_k2():
    p, sol, frac = fractional_problem(seed=21)
    evals_by_k = []
    for k2 in (1, 3, 10, 1000):
        ctx = EvalContext(problem=p, check_incumbent=False)
        params = WinnowParams(n1=3, k2=k2)
        _, s2, f1, _ = run(p.to_lp(), sol, frac, params, ctx, depth=0)
        evals_by_k.append({j: (s2[j].eval_up, s2[j].eval_down) for j in f1})
    for prev, nxt in zip(evals_by_k, evals_by_k[1:]):
        for j in prev:
            if j in nxt:
                assert nxt[j][0] >= prev[j][0] - 1e-9
                assert nxt[j][1] >= prev[j][1] - 1e-9


def test_stage1_ranking_matches_executed_pivot_order():
    from branchlab.criteria import BranchSignal

    for seed in (31, 32, 33, 34, 35):
        p, sol, frac = fractional_problem(seed=seed)
        ctx = EvalContext(problem=p, check_incumbent=False)
        try:
            _, _, s1 = stage1(p.to_lp(), sol, frac, WinnowParams(), ctx)
            break
        except BranchSignal:
            continue  # a probe found an infeasible side; try another seed
    else:
        pytest.fail("no clean instance found")
    # cross-check: the stored stage-1 estimates must equal the objective
    # change of one executed dual pivot (the lp tests prove the probe is
    # exact; here we check the ordering data the ranking used)
    from branchlab.lp import PivotBudget, apply_branch
    from branchlab.lp import solve as lp_solve

    for j, ev in s1.items():
        for direction, est in (("up", ev.eval_up), ("down", ev.eval_down)):
            child, warm = apply_branch(p.to_lp(), sol, j, direction)
            kid = lp_solve(child, warm_basis=warm,
                           budget=PivotBudget(max_pivots=1))
            assert kid.x_o - sol.x_o == pytest.approx(est, abs=1e-9)


def test_n2_depth_schedule():
    params = WinnowParams(n2_root=5, n2_mid=2, n2_deep=1)
    assert params.n2_for(0) == 5
    assert params.n2_for(1) == 2
    assert params.n2_for(2) == 1
    assert params.n2_for(9) == 1


def test_budget_exemplar_twenty_probes():
    # |F| = 40 with n1 = |F|/4 means 10 pairs, 20 truncated probes
    params = WinnowParams()
    n1 = max(1, math.ceil(40 / 4))
    assert n1 == 10
    del params
