import math

import numpy as np
import pytest

from branchlab.criteria import EvalContext, IncumbentSignal
from branchlab.lookahead import (
    AttractConfig,
    AttractCounters,
    LookaheadConfig,
    build_d2_tree,
    build_multi_trees,
    build_tree,
    _Builder,
    _root_node,
)
from branchlab.lp import solve
from branchlab.model import MipProblem, detect_fractional
from branchlab.winnow import WinnowParams


def triangle_fixture(n_triangles=7, seed=0):
    """Vertex-cover LP over disjoint triangles: every unresolved triangle
    keeps its three variables at 1/2, so nodes stay feasible and
    fractional throughout a shallow look-ahead tree."""
    rng = np.random.default_rng(seed)
    n = 3 * n_triangles
    rows = []
    for t in range(n_triangles):
        a, b, c = 3 * t, 3 * t + 1, 3 * t + 2
        for (i, j) in ((a, b), (b, c), (c, a)):
            row = np.zeros(n)
            row[i] = 1.0
            row[j] = 1.0
            rows.append(row)
    weights = 1.0 + rng.uniform(0.0, 1.0, size=n)
    return MipProblem(name="triangles", obj=weights, rows=np.array(rows),
                      rhs=np.ones(len(rows)), lower=np.zeros(n),
                      upper=np.ones(n), integer_mask=np.ones(n, bool))


def make_ctx(problem):
    return EvalContext(problem=problem, check_incumbent=False)


def base_cfg(**kw):
    params = WinnowParams(k2=3)
    defaults = dict(depth=3, winnow=params)
    defaults.update(kw)
    return LookaheadConfig(**defaults)


def build(problem, cfg):
    sol = solve(problem.to_lp())
    assert sol.is_optimal
    ctx = make_ctx(problem)
    return build_tree(problem, problem.to_lp(), sol, cfg, ctx)


class TestTreeCounts:
    def test_depth3_full_tree_has_14_nodes(self):
        result = build(triangle_fixture(), base_cfg(depth=3))
        assert result.depth_counts == [2, 4, 8]
        assert result.total_nodes == 14

    def test_depth6_full_tree_has_126_nodes(self):
        result = build(triangle_fixture(9), base_cfg(depth=6))
        assert result.depth_counts == [2, 4, 8, 16, 32, 64]
        assert result.total_nodes == 126

    def test_postwin_2a_gives_48(self):
        result = build(triangle_fixture(9),
                       base_cfg(depth=6, postwin="2a", lim=3, d0=2))
        assert result.depth_counts == [2, 4, 6, 12, 12, 12]
        assert result.total_nodes == 48

    def test_postwin_2b_gives_30(self):
        result = build(triangle_fixture(9),
                       base_cfg(depth=6, postwin="2b", lim=3, d0=2))
        assert result.depth_counts == [2, 4, 6, 6, 6, 6]
        assert result.total_nodes == 30

    def test_postwin_2c_caps_single_nodes(self):
        result = build(triangle_fixture(9),
                       base_cfg(depth=6, postwin="2c", lim=2, d0=2))
        # carried sets hold 2 nodes, possibly sharing a parent
        assert result.depth_counts[0:2] == [2, 4]
        assert all(c <= 4 for c in result.depth_counts[3:])


class TestStepFour:
    def test_choice_is_a_root_fractional(self):
        p = triangle_fixture()
        sol = solve(p.to_lp())
        frac = detect_fractional(sol, p)
        result = build(p, base_cfg())
        assert result.var in frac
        assert result.direction in ("up", "down")

    def test_full_path_accept_returns_whole_path(self):
        p = triangle_fixture()
        result = build(p, base_cfg(accept="path"))
        assert len(result.path) == 3
        assert result.path[0] == (result.var, result.direction)

    def test_scan_order_does_not_change_the_choice(self):
        p = triangle_fixture(5, seed=3)
        a = build(p, base_cfg(depth=3, scan_order="dfs"))
        b = build(p, base_cfg(depth=3, scan_order="bfs"))
        assert (a.var, a.direction) == (b.var, b.direction)
        a2 = build(p, base_cfg(depth=4, postwin="2a", lim=2, d0=2,
                               scan_order="dfs"))
        b2 = build(p, base_cfg(depth=4, postwin="2a", lim=2, d0=2,
                               scan_order="bfs"))
        assert (a2.var, a2.direction) == (b2.var, b2.direction)

    def test_missing_sibling_scored_at_incumbent(self):
        from branchlab.lookahead import TreeNode

        p = triangle_fixture(2)
        sol = solve(p.to_lp())
        ctx = EvalContext(problem=p, x_o_star=9.0, check_incumbent=False)
        builder = _Builder(p, base_cfg(depth=1), ctx)
        root = _root_node(p, p.to_lp(), sol)
        alive = TreeNode(node_id=1, parent=root, depth=1, var=0,
                         direction="up", model=p.to_lp(), solution=sol,
                         eval_vs_parent=0.5)
        bundles, handles = builder._leaf_bundles([[alive]], root)
        (bundle,) = bundles.values()
        assert bundle.down_infeasible
        assert bundle.eval_down == pytest.approx(9.0 - sol.x_o)
        del handles


class TestEarlyExit:
    def test_early_exit_matches_completed_tree(self):
        # lim=1 forces all survivors under one root side quickly; the
        # shortcut must agree with running the same gated build in full
        fired = 0
        for seed in range(6):
            p = triangle_fixture(7, seed=seed)
            gated = base_cfg(depth=5, postwin="2a", lim=1, d0=2)
            quick = build(p, LookaheadConfig(
                **{**gated.__dict__, "early_exit": True}))
            if not quick.early_exit:
                continue
            fired += 1
            full = build(p, gated)
            assert (quick.var, quick.direction) == (full.var,
                                                    full.direction)
            assert quick.total_nodes <= full.total_nodes
        assert fired >= 1


class TestD2Mode:
    def test_budget_split_v1(self):
        p = triangle_fixture(4)   # |F| = 12 at the root
        sol = solve(p.to_lp())
        assert len(detect_fractional(sol, p)) == 12
        cfg = base_cfg(depth=2, d2_mode=True, v=1.0)
        out = build_d2_tree(p, p.to_lp(), sol, cfg, make_ctx(p))
        assert out.pair_scores["n2_root"] == 4
        assert out.pair_scores["n2_child"] == 4

    def test_budget_split_v2(self):
        p = triangle_fixture(4)
        sol = solve(p.to_lp())
        cfg = base_cfg(depth=2, d2_mode=True, v=2.0)
        out = build_d2_tree(p, p.to_lp(), sol, cfg, make_ctx(p))
        assert out.pair_scores["n2_root"] == 6
        assert out.pair_scores["n2_child"] == 3

    def test_n2_one_degenerates_to_single_level(self):
        # one triangle plus a two-variable knapsack tail whose second
        # variable sits at 0.5: |F| = 4 so n2(0) = n2(1) = 1, and both
        # branches of every fractional variable stay feasible
        tri = triangle_fixture(1)
        n = tri.n_cols + 2
        rows = np.zeros((tri.n_rows + 1, n))
        rows[:tri.n_rows, :tri.n_cols] = tri.rows
        rows[-1, -2:] = [-2.0, -2.0]   # 2 x3 + 2 x4 <= 5
        p = MipProblem(name="mix", obj=np.append(tri.obj, [-3.0, -1.0]),
                       rows=rows, rhs=np.append(tri.rhs, -5.0),
                       lower=np.zeros(n),
                       upper=np.append(np.ones(tri.n_cols), [2.0, 2.0]),
                       integer_mask=np.ones(n, bool))
        sol = solve(p.to_lp())
        assert len(detect_fractional(sol, p)) == 4
        cfg = base_cfg(depth=2, d2_mode=True, v=1.0)
        out = build_d2_tree(p, p.to_lp(), sol, cfg, make_ctx(p))
        assert out.pair_scores["n2_root"] == 1
        assert out.var is not None


class TestMultiTree:
    def test_single_tree_is_plain_build(self):
        p = triangle_fixture(5, seed=2)
        sol = solve(p.to_lp())
        cfg = base_cfg(depth=2, n_trees=1)
        a = build_multi_trees(p, p.to_lp(), sol, cfg, make_ctx(p))
        b = build_tree(p, p.to_lp(), sol, cfg, make_ctx(p))
        assert (a.var, a.direction) == (b.var, b.direction)

    def test_later_trees_exclude_better_ranked_roots(self):
        p = triangle_fixture(5, seed=2)
        sol = solve(p.to_lp())
        ctx = make_ctx(p)
        cfg = base_cfg(depth=2, winnow=WinnowParams(k2=3, n2_root=3))
        builder = _Builder(p, cfg, ctx)
        builder.excluded = frozenset({0, 1, 2})
        root = _root_node(p, p.to_lp(), sol)
        result = builder.build(root, forced_root_var=4)
        for node in result.nodes:
            assert node.var not in {0, 1, 2}

    def test_trees_share_no_bound_vectors(self):
        p = triangle_fixture(5, seed=2)
        sol = solve(p.to_lp())
        ctx = make_ctx(p)
        cfg = base_cfg(depth=2, winnow=WinnowParams(k2=3, n2_root=4))
        from branchlab.winnow import run as winnow_run
        frac = detect_fractional(sol, p)
        f2, s2, _, _ = winnow_run(p.to_lp(), sol, frac, cfg.winnow, ctx, 0)
        assert len(f2) >= 2
        ranked = f2[:2]
        seen: set[tuple] = set()
        for rank, var in enumerate(ranked):
            builder = _Builder(p, cfg, ctx)
            builder.excluded = frozenset(ranked[:rank])
            result = builder.build(_root_node(p, p.to_lp(), sol),
                                   forced_root_var=var)
            for node in result.nodes:
                key = (tuple(node.model.lower), tuple(node.model.upper))
                assert key not in seen
                seen.add(key)

    def test_multi_tree_end_to_end(self):
        p = triangle_fixture(5, seed=2)
        sol = solve(p.to_lp())
        cfg = base_cfg(depth=2, n_trees=2,
                       winnow=WinnowParams(k2=3, n2_root=3))
        out = build_multi_trees(p, p.to_lp(), sol, cfg, make_ctx(p))
        assert out.var is not None


class TestAttract:
    def test_counters_accumulate_and_pick_majority(self):
        c = AttractCounters()
        for _ in range(5):
            c.bump(3, "up", "up")
        for _ in range(2):
            c.bump(3, "down", "up")
        val, direction = c.value(3)
        assert (val, direction) == (5, "up")
        val_half, _ = c.value(3, "down")
        assert val_half == 0

    def test_threshold_infinity_never_overrides(self):
        p = triangle_fixture(5, seed=1)
        cfg = base_cfg(depth=2, attract=AttractConfig(
            enabled=True, threshold=math.inf))
        result = build(p, cfg)
        assert not result.overridden

    def test_override_fires_above_threshold(self):
        from branchlab.lookahead import BuildResult, _maybe_override

        p = triangle_fixture(2)
        cfg = base_cfg(depth=2, attract=AttractConfig(enabled=True,
                                                      threshold=4.0))
        builder = _Builder(p, cfg, make_ctx(p))
        for _ in range(5):
            builder.attract.bump(1, "up", None)
        for _ in range(2):
            builder.attract.bump(1, "down", None)
        base = BuildResult(var=0, direction="down", path=[(0, "down")],
                           depth_counts=[2], total_nodes=2, leaves=[],
                           winner_leaf=None, root_candidates={},
                           attract=builder.attract)
        out = _maybe_override(base, builder, [0, 1], cfg)
        assert out.overridden
        assert (out.var, out.direction) == (1, "up")

    def test_half_tree_mode_ignores_other_half(self):
        from branchlab.lookahead import BuildResult, TreeNode, \
            _maybe_override

        p = triangle_fixture(2)
        cfg = base_cfg(depth=2, attract=AttractConfig(
            enabled=True, threshold=2.0, half_tree=True))
        builder = _Builder(p, cfg, make_ctx(p))
        for _ in range(9):
            builder.attract.bump(1, "up", "down")   # other half only
        sol = solve(p.to_lp())
        winner = TreeNode(node_id=9, parent=None, depth=1, var=0,
                          direction="up", model=p.to_lp(), solution=sol,
                          root_side="up")
        base = BuildResult(var=0, direction="up", path=[(0, "up")],
                           depth_counts=[2], total_nodes=2, leaves=[],
                           winner_leaf=winner, root_candidates={},
                           attract=builder.attract)
        out = _maybe_override(base, builder, [0, 1], cfg)
        assert not out.overridden


class TestStraddleMode:
    def test_straddle_build_accumulates_few_slack_rows(self):
        p = triangle_fixture(5, seed=4)
        cfg = base_cfg(depth=3, straddle=True)
        result = build(p, cfg)
        assert result.var is not None
        for leaf in result.leaves:
            assert len(leaf.model.straddle_rows) <= 3


class TestMonteCarloPathCorrectness:
    def test_depth3_probability_is_936(self):
        rng = np.random.default_rng(20240606)
        trials = 100_000
        draws = rng.random((trials, 3)) < 0.6
        hit = draws.any(axis=1).mean()
        assert hit == pytest.approx(1 - 0.4 ** 3, abs=0.005)

    def test_depth2_probability_is_84(self):
        rng = np.random.default_rng(7)
        draws = rng.random((100_000, 2)) < 0.6
        assert draws.any(axis=1).mean() == pytest.approx(0.84, abs=0.005)


def test_root_mip_feasible_raises_incumbent_signal():
    p = MipProblem(name="int", obj=[1.0, 1.0], rows=[[1.0, 1.0]],
                   rhs=[2.0], lower=[0.0, 0.0], upper=[3.0, 3.0],
                   integer_mask=[True, True])
    sol = solve(p.to_lp())
    assert not detect_fractional(sol, p)
    with pytest.raises(IncumbentSignal):
        build_tree(p, p.to_lp(), sol, base_cfg(depth=2), make_ctx(p))
