"""Progressive winnowing of branching candidates.

Stage 1 screens the fractional set by closeness of f_j to 0.5 (n0
survivors) and ranks those with single-dual-pivot branch estimates (n1
survivors).  Stage 2 probes each survivor by actually branching both ways
under a k2-pivot budget and keeps the n2 best under the configured
criterion.  The net effect is the nesting F2 <= F1 <= F0 <= F.

A fixed candidate list (CList) restricts stage 1 to a subset chosen at the
root; when no CList member is fractional the node becomes a leaf.  The
optional v_lim rule stops stage-2 probes early once the largest primal
violation falls below a fraction of the node's own fractionality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from branchlab.criteria import (
    BranchEval,
    BranchSignal,
    CompulsorySignal,
    Criterion,
    CriterionSpec,
    EvalContext,
    NodeInfeasibleSignal,
    attach_unit_costs,
    make_eval,
    score,
    solve_child,
    uc_lookup_from,
    weight_eval,
)
from branchlab.lp import LpModel, LpSolution, probe_single_pivot


class CListLeafSignal(BranchSignal):
    """No CList member is fractional: the node terminates as a leaf."""


@dataclass(frozen=True)
class WinnowParams:
    """Stage sizes and budgets; None fields resolve per node.

    n0 defaults to |F| (admit everything), n1 to ceil(|F|/4), k2 to one
    sixth of the running average pivots per full solve.  n2 is depth
    indexed: n2_root at d=0, n2_mid at d=1, n2_deep at d>=2.
    """

    n0: int | None = None
    n1: int | None = None
    n2_root: int = 4
    n2_mid: int = 2
    n2_deep: int = 1
    k2: int | None = None
    spec: CriterionSpec = field(default_factory=CriterionSpec)
    clist: frozenset | None = None
    vlim_mult: float | None = None

    def __post_init__(self):
        for v in (self.n0, self.n1, self.k2):
            if v is not None and v < 1:
                raise ValueError("stage sizes and budgets must be >= 1")
        if min(self.n2_root, self.n2_mid, self.n2_deep) < 1:
            raise ValueError("n2 must be >= 1 at every depth")
        if self.vlim_mult is not None and not 0 < self.vlim_mult < 1:
            raise ValueError("the v_lim multiplier must lie in (0, 1)")

    def n2_for(self, depth: int) -> int:
        if depth <= 0:
            return self.n2_root
        if depth == 1:
            return self.n2_mid
        return self.n2_deep


def _rank(evals: dict[int, BranchEval], spec: CriterionSpec,
          keep: int) -> list[int]:
    """Variable indices of the `keep` best evaluations under the criterion."""
    minimize = spec.criterion in (Criterion.C6, Criterion.C7)
    if spec.criterion is Criterion.C3_THRESHOLD:
        # C3 ranks by spread among threshold-eligible candidates, falling
        # back to the plain spread order when the threshold empties it
        mins = {j: ev.min_val for j, ev in evals.items()}
        lo, hi = min(mins.values()), max(mins.values())
        threshold = lo + spec.lam * (hi - lo)
        ordered = sorted(
            evals,
            key=lambda j: (mins[j] < threshold, -score(evals[j], spec), j))
        return ordered[:keep]
    ordered = sorted(
        evals,
        key=lambda j: (score(evals[j], spec) if minimize
                       else -score(evals[j], spec), j))
    return ordered[:keep]


def v_lim_for(fractions: dict, mult: float | None) -> float | None:
    if mult is None or not fractions:
        return None
    return mult * max(min(fp, fm) for fp, fm in fractions.values())


def stage1(model: LpModel, sol: LpSolution, fractions: dict,
           params: WinnowParams, ctx: EvalContext,
           straddle_mask=None) -> tuple[list[int], list[int], dict]:
    """Closeness-to-0.5 screen, then single-pivot probes under the criterion.

    Returns (F0, F1, stage-1 evals keyed by variable).  A probe that finds
    one side dual-unbounded raises the compulsory signal; both sides dead
    kills the node.  With a straddle mask the probes branch on the derived
    variable instead, where a single dead side is scored at the incumbent
    gap rather than forcing the plain branch.
    """
    pool = sorted(fractions)
    if params.clist is not None:
        pool = [j for j in pool if j in params.clist]
        if not pool:
            raise CListLeafSignal("no CList variable is fractional")
    if not pool:
        raise ValueError("stage1 needs a nonempty fractional set")
    n0 = params.n0 if params.n0 is not None else len(pool)
    f0 = sorted(pool, key=lambda j: (abs(fractions[j][1] - 0.5), j))[:n0]
    evals: dict[int, BranchEval] = {}
    for j in sorted(f0):
        if straddle_mask is not None:
            from branchlab.straddle import straddle_pivot_estimate
            est_up = straddle_pivot_estimate(model, sol, j, "up",
                                             straddle_mask, ctx)
            est_dn = straddle_pivot_estimate(model, sol, j, "down",
                                             straddle_mask, ctx)
            if math.isinf(est_up) and math.isinf(est_dn):
                raise NodeInfeasibleSignal(j)
            gap = ctx.x_o_star - sol.x_o
            if math.isinf(est_up):
                est_up = gap
            if math.isinf(est_dn):
                est_dn = gap
        else:
            est_up = probe_single_pivot(model, sol, j, "up")
            est_dn = probe_single_pivot(model, sol, j, "down")
            ctx.counters.probes += 2
            if math.isinf(est_up) and math.isinf(est_dn):
                raise NodeInfeasibleSignal(j)
            if math.isinf(est_up):
                raise CompulsorySignal(j, "down")
            if math.isinf(est_dn):
                raise CompulsorySignal(j, "up")
        evals[j] = BranchEval(var=j, eval_up=est_up, eval_down=est_dn,
                              x_up=sol.x_o + est_up, x_down=sol.x_o + est_dn)
    n1 = params.n1 if params.n1 is not None else max(1, math.ceil(len(pool) / 4))
    n1 = min(n1, len(f0))
    # single-pivot probes carry no fractional sets or infeasibility sums,
    # so criteria that want them degrade to their plain form here
    plain_spec = CriterionSpec(criterion=params.spec.criterion,
                               p=params.spec.p, lam=params.spec.lam,
                               w1=0.0, w2=0.0, mu=params.spec.mu,
                               use_max_variant=params.spec.use_max_variant)
    f1 = _rank(evals, plain_spec, n1)
    return f0, f1, evals


def stage2(model: LpModel, sol: LpSolution, f1: list[int], fractions: dict,
           params: WinnowParams, ctx: EvalContext, depth: int,
           k2: int | None = None,
           straddle_mask=None) -> tuple[list[int], dict]:
    """Branch both ways on every F1 member under a k2-pivot budget.

    Returns (F2, stage-2 evals for all of F1).  Evals are truncated-solve
    evaluations: x_o of the last dual iterate, plus the infeasibility sums
    that feed the w2 terms of the weighted criteria.
    """
    if k2 is None:
        k2 = params.k2 if params.k2 is not None else \
            (ctx.k2_default or 25)
    vlim = v_lim_for(fractions, params.vlim_mult)
    budget = replace(ctx.branch_budget(pivot_limit=k2), v_lim=vlim)
    evals: dict[int, BranchEval] = {}
    for j in sorted(f1):
        if straddle_mask is not None:
            from branchlab.straddle import straddle_eval
            evals[j] = straddle_eval(model, sol, j, ctx, fractions,
                                     budget=budget)
            continue
        sol_up = solve_child(model, sol, j, "up", ctx, budget=budget)
        sol_dn = solve_child(model, sol, j, "down", ctx, budget=budget)
        ev = make_eval(j, sol.x_o, sol_up, sol_dn, ctx)
        fp, fm = fractions[j]
        attach_unit_costs(ev, sol.x_o, fp, fm)
        evals[j] = ev
    flavor = params.spec.eval_flavor()
    scored = evals
    if flavor.value != "plain":
        lookup = uc_lookup_from(evals, sol)
        scored = {j: weight_eval(ev, flavor, params.spec.w1, params.spec.w2,
                                 lookup, params.spec.mincost_top_k)
                  for j, ev in evals.items()}
    n2 = min(params.n2_for(depth), len(f1))
    f2 = _rank(scored, params.spec, n2)
    return f2, scored


def run(model: LpModel, sol: LpSolution, fractions: dict,
        params: WinnowParams, ctx: EvalContext, depth: int,
        k2: int | None = None, straddle_mask=None):
    """Full two-stage winnow; returns (F2, stage2 evals, F1, stage1 evals)."""
    f0, f1, s1 = stage1(model, sol, fractions, params, ctx, straddle_mask)
    f2, s2 = stage2(model, sol, f1, fractions, params, ctx, depth, k2,
                    straddle_mask)
    return f2, s2, f1, s1
