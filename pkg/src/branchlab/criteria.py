"""Branch evaluations and the selection criteria built on them.

An up/down pair of child LPs is summarized as a BranchEval.  Evaluations
come in three flavors:

  plain          Eval+/- = child objective minus the node objective
  frac_weighted  plain plus w1 * sum of min(f+, f-) over the child's
                 fractional variables plus w2 * (child infeasibility sum)
  cost_weighted  plain plus w1 * sum of MinCost terms plus w2 *
                 infeasibility, where MinCost_i = min(UC_i+ * f_i+,
                 UC_i- * f_i-) prices a child-fractional variable by this
                 node's unit costs, falling back to |reduced cost| for
                 unprobed variables

Criteria C0..C7 score BranchEvals and pick a winner; the chosen branch
direction is up exactly when Eval+ < Eval-.  Infeasible children are
scored with the incumbent objective so the surviving sibling does not look
unduly attractive, and they raise control signals that the tree builders
react to (compulsory branch, dead node, improved incumbent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

from branchlab.lp import (
    INT_TOL,
    LpModel,
    LpSolution,
    LpStatus,
    PivotBudget,
    apply_branch,
    solve,
)
from branchlab.model import MipProblem, detect_fractional

UC_EPS = 1e-9        # stand-in numerator for zero unit costs
ZERO_SUB = 1e-6      # stand-in for zero factors in product criteria


class Flavor(Enum):
    PLAIN = "plain"
    FRAC_WEIGHTED = "frac_weighted"
    COST_WEIGHTED = "cost_weighted"


class Criterion(Enum):
    C0_CONVEX = "C0"
    C1_PRODUCT = "C1"
    C2A = "C2a"
    C2B = "C2b"
    C3_THRESHOLD = "C3"
    C4 = "C4"
    C5 = "C5"
    C6 = "C6"
    C7 = "C7"
    VOTE = "vote"


# flavors implied by the criterion definition; others default to plain
_IMPLIED_FLAVOR = {Criterion.C6: Flavor.FRAC_WEIGHTED,
                   Criterion.C7: Flavor.COST_WEIGHTED}


@dataclass(frozen=True)
class CriterionSpec:
    criterion: Criterion = Criterion.C1_PRODUCT
    p: float = 1.0
    lam: float = 0.75
    w1: float = 100.0
    w2: float = 10.0
    mu: float = 1.0 / 6.0
    use_max_variant: bool = False   # replace |E+ - E-|^p by Max^p in C2
    zero_sub: float = ZERO_SUB
    mincost_top_k: int | None = None
    flavor: Flavor | None = None    # None = implied by the criterion

    def __post_init__(self):
        if self.p < 0 or not 0 <= self.lam <= 1 or not 0 <= self.mu <= 1:
            raise ValueError("bad criterion parameters")
        if self.w1 < 0 or self.w2 < 0:
            raise ValueError("weights must be nonnegative")

    def eval_flavor(self) -> Flavor:
        if self.flavor is not None:
            return self.flavor
        return _IMPLIED_FLAVOR.get(self.criterion, Flavor.PLAIN)


@dataclass
class BranchEval:
    """Evaluation bundle for branching on one variable at one node."""

    var: int
    eval_up: float
    eval_down: float
    x_up: float
    x_down: float
    infeas_up: float = 0.0
    infeas_down: float = 0.0
    frac_up: dict = field(default_factory=dict)
    frac_down: dict = field(default_factory=dict)
    uc_up: float | None = None
    uc_down: float | None = None
    up_infeasible: bool = False
    down_infeasible: bool = False
    sol_up: LpSolution | None = None
    sol_down: LpSolution | None = None

    @property
    def max_val(self) -> float:
        return max(self.eval_up, self.eval_down)

    @property
    def min_val(self) -> float:
        return min(self.eval_up, self.eval_down)

    @property
    def direction(self) -> str:
        return "up" if self.eval_up < self.eval_down else "down"


class BranchSignal(Exception):
    """Control-flow signals raised while probing branches."""


class CompulsorySignal(BranchSignal):
    def __init__(self, var: int, direction: str, evaluation=None):
        super().__init__(f"compulsory {direction} branch on x_{var}")
        self.var = var
        self.direction = direction
        self.evaluation = evaluation


class NodeInfeasibleSignal(BranchSignal):
    def __init__(self, var: int):
        super().__init__(f"both branches on x_{var} infeasible")
        self.var = var


class IncumbentSignal(BranchSignal):
    def __init__(self, solution: LpSolution):
        super().__init__(f"new incumbent at {solution.x_o}")
        self.solution = solution


@dataclass
class SearchCounters:
    lp_solves: int = 0
    pivots: int = 0
    probes: int = 0
    nodes: int = 0

    def absorb(self, sol: LpSolution):
        self.lp_solves += 1
        self.pivots += sol.pivots


@dataclass
class EvalContext:
    """Everything branch probes need from the surrounding search."""

    problem: MipProblem
    x_o_star: float = math.inf       # incumbent objective; also prices
                                     # infeasible siblings
    cutoff: float = math.inf         # LP cutoff (x_o_star - eps)
    budget: PivotBudget = field(default_factory=PivotBudget)
    counters: SearchCounters = field(default_factory=SearchCounters)
    check_incumbent: bool = True
    uc_estimator: object = None      # optional pseudo/analytical shortcut
    k2_default: int | None = None    # driver-calibrated stage-2 budget

    def branch_budget(self, pivot_limit: int | None = None) -> PivotBudget:
        b = replace(self.budget, cutoff=self.cutoff)
        if pivot_limit is not None:
            b = replace(b, max_pivots=pivot_limit)
        return b


def solve_child(model: LpModel, parent_sol: LpSolution, j: int,
                direction: str, ctx: EvalContext,
                pivot_limit: int | None = None,
                budget: PivotBudget | None = None) -> LpSolution:
    """Solve one branch child; may raise IncumbentSignal."""
    child, warm = apply_branch(model, parent_sol, j, direction)
    sol = solve(child, warm_basis=warm,
                budget=budget or ctx.branch_budget(pivot_limit))
    ctx.counters.absorb(sol)
    if (ctx.check_incumbent and sol.status is LpStatus.OPTIMAL
            and not detect_fractional(sol, ctx.problem)):
        raise IncumbentSignal(sol)
    return sol


def _child_infeasible(sol: LpSolution) -> bool:
    return sol.status in (LpStatus.INFEASIBLE, LpStatus.CUTOFF_INFEASIBLE)


def _iterate_fractional(sol: LpSolution, problem: MipProblem) -> dict:
    """Fractional integer variables of an optimal or truncated iterate."""
    out = {}
    for j in problem.integer_indices:
        v = float(sol.x[j])
        if abs(v - round(v)) > INT_TOL:
            fm = v - math.floor(v)
            out[j] = (1.0 - fm, fm)
    return out


def make_eval(var: int, node_x_o: float, sol_up: LpSolution,
              sol_down: LpSolution, ctx: EvalContext,
              problem: MipProblem | None = None,
              signal_compulsory: bool = True) -> BranchEval:
    """Plain BranchEval from two child solves.

    An infeasible child is scored at the incumbent objective so the
    surviving sibling does not look unduly attractive; it also raises the
    compulsory signal (carrying the partially filled evaluation), and two
    dead children kill the node.  Probes on
    derived-variable disjunctions pass signal_compulsory=False: one dead
    side there restricts the derived variable, not the branching variable
    itself, so only the both-dead case may kill the node.
    """
    problem = problem or ctx.problem
    up_dead = _child_infeasible(sol_up)
    down_dead = _child_infeasible(sol_down)
    if up_dead and down_dead:
        raise NodeInfeasibleSignal(var)
    x_up = ctx.x_o_star if up_dead else sol_up.x_o
    x_down = ctx.x_o_star if down_dead else sol_down.x_o
    ev = BranchEval(
        var=var,
        eval_up=x_up - node_x_o,
        eval_down=x_down - node_x_o,
        x_up=x_up,
        x_down=x_down,
        infeas_up=0.0 if up_dead else sol_up.infeas,
        infeas_down=0.0 if down_dead else sol_down.infeas,
        frac_up={} if up_dead else _iterate_fractional(sol_up, problem),
        frac_down={} if down_dead else _iterate_fractional(sol_down, problem),
        up_infeasible=up_dead,
        down_infeasible=down_dead,
        sol_up=None if up_dead else sol_up,
        sol_down=None if down_dead else sol_down,
    )
    if signal_compulsory and (up_dead or down_dead):
        raise CompulsorySignal(var, "down" if up_dead else "up", ev)
    return ev


def attach_unit_costs(ev: BranchEval, node_x_o: float, f_plus: float,
                      f_minus: float) -> BranchEval:
    """UC_j = (child x_o - node x_o) / f, zero numerators lifted to eps."""
    up_num = max(ev.x_up - node_x_o, UC_EPS)
    dn_num = max(ev.x_down - node_x_o, UC_EPS)
    ev.uc_up = up_num / f_plus
    ev.uc_down = dn_num / f_minus
    return ev


def _mincost_sum(frac: dict, uc_lookup, top_k: int | None) -> float:
    terms = []
    for i, (fp, fm) in frac.items():
        uc_up, uc_dn = uc_lookup(i)
        terms.append(min(uc_up * fp, uc_dn * fm))
    if top_k is not None and len(terms) > top_k:
        terms = sorted(terms, reverse=True)[:top_k]
    return float(sum(terms))


def _fracsum(frac: dict) -> float:
    return float(sum(min(fp, fm) for fp, fm in frac.values()))


def weight_eval(ev: BranchEval, flavor: Flavor, w1: float, w2: float,
                uc_lookup=None, top_k: int | None = None) -> BranchEval:
    """Return a copy of ev with D1/D2- or D3/D4-augmented Eval values."""
    if flavor is Flavor.PLAIN or (w1 == 0 and w2 == 0):
        return ev
    if flavor is Flavor.FRAC_WEIGHTED:
        up_term = _fracsum(ev.frac_up)
        dn_term = _fracsum(ev.frac_down)
    else:
        if uc_lookup is None:
            raise ValueError("cost weighting needs a unit-cost lookup")
        up_term = _mincost_sum(ev.frac_up, uc_lookup, top_k)
        dn_term = _mincost_sum(ev.frac_down, uc_lookup, top_k)
    out = replace_eval(ev)
    out.eval_up = ev.eval_up + w1 * up_term + w2 * ev.infeas_up
    out.eval_down = ev.eval_down + w1 * dn_term + w2 * ev.infeas_down
    return out


def replace_eval(ev: BranchEval) -> BranchEval:
    return BranchEval(**{k: getattr(ev, k) for k in (
        "var", "eval_up", "eval_down", "x_up", "x_down", "infeas_up",
        "infeas_down", "frac_up", "frac_down", "uc_up", "uc_down",
        "up_infeasible", "down_infeasible", "sol_up", "sol_down")})


def uc_lookup_from(evals: dict, parent_sol: LpSolution):
    """Unit costs from this node's probes, |RC| fallback elsewhere."""

    def lookup(i: int) -> tuple[float, float]:
        ev = evals.get(i)
        if ev is not None and ev.uc_up is not None:
            return ev.uc_up, ev.uc_down
        rc = abs(float(parent_sol.reduced[i]))
        return rc, rc

    return lookup


def evaluate_candidates(model: LpModel, parent_sol: LpSolution,
                        candidates, ctx: EvalContext, spec: CriterionSpec,
                        fractions: dict,
                        pivot_limit: int | None = None) -> dict:
    """Solve both children of every candidate and score per the flavor.

    Two passes so that cost weighting can price child fractionals with the
    unit costs collected across all candidates first.  Compulsory and
    node-infeasible conditions propagate as signals.
    """
    plain: dict[int, BranchEval] = {}
    for j in sorted(candidates):
        fp, fm = fractions[j]
        sol_up = solve_child(model, parent_sol, j, "up", ctx, pivot_limit)
        sol_dn = solve_child(model, parent_sol, j, "down", ctx, pivot_limit)
        ev = make_eval(j, parent_sol.x_o, sol_up, sol_dn, ctx)
        attach_unit_costs(ev, parent_sol.x_o, fp, fm)
        plain[j] = ev
    flavor = spec.eval_flavor()
    if flavor is Flavor.PLAIN:
        return plain
    lookup = uc_lookup_from(plain, parent_sol)
    return {j: weight_eval(ev, flavor, spec.w1, spec.w2, lookup,
                           spec.mincost_top_k)
            for j, ev in plain.items()}


# -- criterion scoring ----------------------------------------------------


def _pos(value: float, sub: float) -> float:
    return value if value > sub else sub


def score(ev: BranchEval, spec: CriterionSpec) -> float:
    """Criterion score; maximized for C0-C5, minimized for C6/C7."""
    up, dn = ev.eval_up, ev.eval_down
    lo, hi = ev.min_val, ev.max_val
    sub = spec.zero_sub
    c = spec.criterion
    if c is Criterion.C0_CONVEX:
        return spec.mu * hi + (1.0 - spec.mu) * lo
    if c is Criterion.C1_PRODUCT:
        return _pos(up, sub) * _pos(dn, sub)
    if c in (Criterion.C2A, Criterion.C2B):
        spread = _pos(hi, sub) if spec.use_max_variant \
            else _pos(abs(up - dn), sub)
        base = _pos(up, sub) * _pos(dn, sub) if c is Criterion.C2A \
            else _pos(lo, sub)
        return base * spread ** spec.p
    if c is Criterion.C3_THRESHOLD:
        return abs(up - dn)
    if c is Criterion.C4:
        return _pos(hi, sub) * _pos(abs(up - dn), sub)
    if c is Criterion.C5:
        return _pos(lo, sub) ** spec.p * (up + dn)
    if c in (Criterion.C6, Criterion.C7):
        return lo
    raise ValueError(f"{c} has no direct score")


@dataclass(frozen=True)
class Selection:
    var: int
    direction: str
    scores: dict


def select(evals, spec: CriterionSpec) -> Selection:
    """Winner and direction under one criterion.

    C3 restricts candidates to Min_j >= T(lambda) and falls back to the
    MaxMin variable when floating point leaves the eligible set empty.
    """
    evals = {ev.var: ev for ev in evals} if not isinstance(evals, dict) \
        else evals
    if not evals:
        raise ValueError("no evaluations to select from")
    if spec.criterion is Criterion.VOTE:
        raise ValueError("vote() handles the vote pseudo-criterion")
    scores = {j: score(ev, spec) for j, ev in sorted(evals.items())}
    if spec.criterion is Criterion.C3_THRESHOLD:
        mins = {j: ev.min_val for j, ev in evals.items()}
        lo = min(mins.values())
        hi = max(mins.values())
        threshold = lo + spec.lam * (hi - lo)
        eligible = [j for j in sorted(evals) if mins[j] >= threshold]
        if not eligible:
            winner = max(sorted(evals), key=lambda j: (mins[j], -j))
        else:
            winner = max(eligible, key=lambda j: (scores[j], -j))
    elif spec.criterion in (Criterion.C6, Criterion.C7):
        winner = min(sorted(evals), key=lambda j: (scores[j], j))
    else:
        winner = max(sorted(evals), key=lambda j: (scores[j], -j))
    return Selection(var=winner, direction=evals[winner].direction,
                     scores=scores)


def vote(evals, specs) -> Selection:
    """Plurality vote across criteria; ties to the lowest variable index.

    The direction follows the majority among the criteria that voted for
    the winning variable, defaulting to the winner's own direction rule on
    a tie.
    """
    specs = list(specs)
    if len(specs) < 2:
        raise ValueError("voting needs at least two criteria")
    evals = {ev.var: ev for ev in evals} if not isinstance(evals, dict) \
        else evals
    picks = [select(evals, s) for s in specs]
    tally: dict[int, int] = {}
    for pick in picks:
        tally[pick.var] = tally.get(pick.var, 0) + 1
    best = max(tally.values())
    winner = min(j for j, n in tally.items() if n == best)
    dirs = [p.direction for p in picks if p.var == winner]
    ups = sum(1 for d in dirs if d == "up")
    downs = len(dirs) - ups
    if ups > downs:
        direction = "up"
    elif downs > ups:
        direction = "down"
    else:
        direction = evals[winner].direction
    merged: dict = {}
    for s, pick in zip(specs, picks):
        merged[s.criterion.value] = pick.var
    return Selection(var=winner, direction=direction, scores=merged)
