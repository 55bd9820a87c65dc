"""Branch-and-bound driver tying the strategy modules together.

One solve owns the incumbent, the open-node set, every cost memory, and a
deterministic JSON-able trace.  Branch decisions come either from the
look-ahead tree builders or from winnowed criterion selection; branch
probe signals (compulsory branch, dead node, new incumbent) restart the
decision at the owning node, with a restart cap as a numeric safety net.
After the cap the driver falls back to branching on the most fractional
candidate so no region is ever silently dropped.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from branchlab.costmem import (
    AnalyticalThresholds,
    DvalCalibrator,
    ExtendedTree,
    PathStep,
    PseudoCostTable,
    ReferenceSet,
    analytical_uc,
)
from branchlab.criteria import (
    CompulsorySignal,
    Criterion,
    CriterionSpec,
    EvalContext,
    IncumbentSignal,
    NodeInfeasibleSignal,
    SearchCounters,
    evaluate_candidates,
    select,
    uc_lookup_from,
    vote,
)
from branchlab.lookahead import (
    LookaheadConfig,
    build_d2_tree,
    build_multi_trees,
    build_tree,
)
from branchlab.lp import (
    LpStatus,
    PivotBudget,
    apply_reversal_update,
    fractional_parts,
    solve,
)
from branchlab.model import (
    BranchRecord,
    Incumbent,
    MipProblem,
    NodeState,
    detect_fractional,
)
from branchlab.winnow import CListLeafSignal, WinnowParams
from branchlab.winnow import run as winnow_run

TRACE_SCHEMA = 1
NODE_BUDGET = PivotBudget(max_pivots=50_000, max_degenerate=5_000)

VOTE_PANEL = (
    CriterionSpec(criterion=Criterion.C1_PRODUCT),
    CriterionSpec(criterion=Criterion.C2A, p=1.0),
    CriterionSpec(criterion=Criterion.C4),
    CriterionSpec(criterion=Criterion.C5, p=0.3),
)


@dataclass(frozen=True)
class ReversalConfig:
    enabled: bool = False
    beta: float = 0.5


@dataclass(frozen=True)
class SolveConfig:
    criterion: CriterionSpec = field(default_factory=lambda: CriterionSpec(
        criterion=Criterion.C2A, p=1.0))
    vote_panel: tuple = VOTE_PANEL
    winnow: WinnowParams = field(default_factory=WinnowParams)
    lookahead: LookaheadConfig | None = None
    pseudo: str = "off"               # off | classic | analytical
    thresholds: AnalyticalThresholds = field(
        default_factory=AnalyticalThresholds)
    refset: bool = False
    refset_theta: float = 0.5
    refset_rmax: int = 10
    refset_p: float = 0.5
    node_select: str = "dfs"          # dfs | dval
    dval_approach: int = 1
    reversal: ReversalConfig = field(default_factory=ReversalConfig)
    eps: float = 1e-6
    max_nodes: int = 100_000
    max_time: float = 300.0
    max_restarts: int = 20
    seed: int = 0
    dump_extended: bool = False       # include extended-tree analytics in
                                      # the trace JSON
    attract_restart: bool = False     # one restart re-rooting the search
                                      # on the most persistently
                                      # attractive branch seen so far

    def __post_init__(self):
        if self.pseudo not in ("off", "classic", "analytical"):
            raise ValueError(f"unknown pseudo mode {self.pseudo!r}")
        if self.node_select not in ("dfs", "dval"):
            raise ValueError(f"unknown node selection {self.node_select!r}")
        if self.max_nodes <= 0 or self.max_time <= 0 or \
                self.max_restarts <= 0:
            raise ValueError("limits must be positive")


@dataclass
class SolveResult:
    status: str                      # optimal | feasible | infeasible | limit
    objective: float
    bound: float
    x: np.ndarray | None
    trace: dict
    counters: SearchCounters
    ext: ExtendedTree | None = None


class _Search:
    def __init__(self, problem: MipProblem, config: SolveConfig):
        self.problem = problem
        self.config = config
        self.incumbent = Incumbent(eps=config.eps)
        self.counters = SearchCounters()
        self.pseudo = PseudoCostTable()
        self.ext = ExtendedTree()
        self.dval = DvalCalibrator(approach=config.dval_approach)
        self.refset: ReferenceSet | None = None
        self.open: list[tuple[int, int]] = []     # (node_id, push order)
        self.nodes: dict[int, NodeState] = {}
        self.next_id = 0
        self.order = 0
        self.trace_map: dict[int, dict] = {}
        self.incumbent_log: list[dict] = []
        self.reversal_log: list[dict] = []
        self.started = time.monotonic()
        self.root_x: np.ndarray | None = None
        self.incomplete = False       # a region was closed heuristically
        self.closed_bound = math.inf  # best bound among such regions
        self.global_attract: dict[tuple[int, str], int] = {}
        self.pending_restart = False
        self.restarted = False
        self.forced_root: tuple[int, str] | None = None
        self.full_solves = 0
        self.full_pivots = 0
        self._pending_seed = None

    # -- plumbing ---------------------------------------------------------

    def ctx(self) -> EvalContext:
        return EvalContext(problem=self.problem,
                           x_o_star=self.incumbent.x_o,
                           cutoff=self.incumbent.cutoff,
                           counters=self.counters,
                           k2_default=self.k2_default())

    def k2_default(self) -> int | None:
        """One sixth of the running average pivots per full node solve."""
        if self.full_solves == 0:
            return None
        return max(1, math.ceil(self.full_pivots / self.full_solves / 6))

    def new_node(self, parent: NodeState | None, record, lower, upper,
                 dval_parts=None) -> NodeState:
        node = NodeState(node_id=self.next_id,
                         parent_id=parent.node_id if parent else None,
                         depth=parent.depth + 1 if parent else 0,
                         branch=record, lower=lower, upper=upper,
                         bound=parent.solution.x_o if parent and
                         parent.solution else -math.inf)
        node.dval_parts = dval_parts
        self.nodes[node.node_id] = node
        self.next_id += 1
        self.trace_node(node, "open")
        return node

    def push(self, node: NodeState):
        self.open.append((node.node_id, self.order))
        self.order += 1

    def node_model(self, node: NodeState):
        return self.problem.lp_with_bounds(node.lower, node.upper)

    def trace_node(self, node: NodeState, status: str, reason=None):
        """Upsert the node's trace record (one record per node id)."""
        rec = self.trace_map.get(node.node_id)
        if rec is None:
            rec = {
                "id": node.node_id,
                "parent": node.parent_id,
                "depth": node.depth,
                "branch": None if node.branch is None else {
                    "var": int(node.branch.var),
                    "direction": node.branch.direction,
                    "bound": float(node.branch.bound)},
                "x_o": None,
                "status": status,
                "implied": 0,
            }
            self.trace_map[node.node_id] = rec
        rec["status"] = status
        rec["implied"] = len(node.implied)
        if node.solution is not None:
            rec["x_o"] = round(float(node.solution.x_o), 9)
        if reason:
            rec["prune_reason"] = reason
        elif "prune_reason" in rec:
            del rec["prune_reason"]

    # -- incumbent flow ----------------------------------------------------

    def install_incumbent(self, x, x_o: float, depth: int,
                          path_node: NodeState | None) -> bool:
        changed = self.incumbent.update(x, x_o, depth, self.problem)
        if not changed:
            return False
        self.incumbent_log.append({"objective": round(float(x_o), 9),
                                   "order": self.order})
        cutoff = self.incumbent.cutoff
        kept = []
        for node_id, order in self.open:
            node = self.nodes[node_id]
            if node.bound > cutoff + 1e-9:
                self.trace_node(node, "pruned", reason="incumbent cutoff")
            else:
                kept.append((node_id, order))
        self.open = kept
        if path_node is not None:
            self.calibrate_dval(path_node, x_o)
            if self.refset is not None:
                branch_vars = set()
                walk: NodeState | None = path_node
                while walk is not None and walk.branch is not None:
                    if not walk.branch.compulsory:
                        branch_vars.add(walk.branch.var)
                    walk = self.nodes.get(walk.parent_id)
                self.refset.add(x, x_o, branch_vars)
        if self.config.attract_restart and not self.restarted and \
                self.global_attract:
            self.pending_restart = True
        return True

    def merge_attract(self, attract):
        for key, count in attract.counts.items():
            self.global_attract[key] = \
                self.global_attract.get(key, 0) + count

    def calibrate_dval(self, leaf: NodeState, x_o_star: float):
        chain: list[NodeState] = []
        walk: NodeState | None = leaf
        while walk is not None:
            chain.append(walk)
            walk = self.nodes.get(walk.parent_id) \
                if walk.parent_id is not None else None
        chain.reverse()
        steps = []
        for idx in range(1, len(chain) - 1):
            node = chain[idx]
            child = chain[idx + 1]
            if node.solution is None or child.solution is None:
                return
            mincost = child.dval_parts[1] if child.dval_parts else 0.0
            steps.append(PathStep(depth=idx,
                                  x_o_node=node.solution.x_o,
                                  x_child=child.solution.x_o,
                                  mincost_sum=float(mincost)))
        if steps:
            self.dval.calibrate(steps, x_o_star)

    # -- node selection ----------------------------------------------------

    def select_open(self) -> NodeState:
        if self.config.node_select == "dfs":
            best = max(self.open,
                       key=lambda t: (self.nodes[t[0]].depth, t[1]))
        else:
            def dval_key(t):
                node = self.nodes[t[0]]
                parts = node.dval_parts or (0.0, 0.0,
                                            max(node.depth - 1, 1))
                return (self.dval.dval(parts[0], parts[1], parts[2]),
                        t[0])
            best = min(self.open, key=dval_key)
        self.open.remove(best)
        return self.nodes[best[0]]

    # -- pseudo / analytical estimators --------------------------------------

    def estimator(self):
        mode = self.config.pseudo
        if mode == "off":
            return None
        if mode == "classic":
            def classic(j, f_plus, f_minus, node):
                if self.pseudo.count(j, "up") == 0 or \
                        self.pseudo.count(j, "down") == 0:
                    return None
                return self.pseudo.pseudo_eval(j, f_plus, f_minus)
            return classic

        def analytical(j, f_plus, f_minus, node):
            ext_id = getattr(node, "ext_id", None)
            parent = self.ext[ext_id] if ext_id is not None else self.ext[0]
            max_depth = max((r.depth for r in self.ext.records), default=0)
            up = analytical_uc(self.ext, j, "up", parent,
                               self.config.thresholds, max_depth,
                               forward_only=True)
            dn = analytical_uc(self.ext, j, "down", parent,
                               self.config.thresholds, max_depth,
                               forward_only=True)
            if up is None or dn is None:
                return None
            return up * f_plus, dn * f_minus
        return analytical

    # -- reference-set rationing ---------------------------------------------

    def gate_allows(self, node: NodeState, j: int, direction: str) -> bool:
        if self.refset is None or not len(self.refset):
            return True
        if direction == "up":
            acc = max(0.0, node.lower[j] - float(self.root_x[j]))
        else:
            acc = max(0.0, float(self.root_x[j]) - node.upper[j])
        return self.refset.gate(j, direction, acc,
                                theta=self.config.refset_theta,
                                is_binary=self.problem.is_binary(j))

    def apply_gate(self, node: NodeState, evals: dict, pick):
        var, direction = pick.var, pick.direction
        if self.gate_allows(node, var, direction):
            return var, direction
        flipped = "down" if direction == "up" else "up"
        if self.gate_allows(node, var, flipped):
            return var, flipped
        allowed = [j for j in evals if j != var
                   and (self.gate_allows(node, j, "up")
                        or self.gate_allows(node, j, "down"))]
        if not allowed:
            return var, direction   # rationing must not wedge the search
        spec = self.config.criterion
        subset = {j: evals[j] for j in allowed}
        sub = vote(subset, self.config.vote_panel) \
            if spec.criterion is Criterion.VOTE else select(subset, spec)
        var, direction = sub.var, sub.direction
        if not self.gate_allows(node, var, direction):
            direction = "down" if direction == "up" else "up"
        return var, direction

    # -- branch selection -----------------------------------------------------

    def pick_branch(self, node: NodeState, fractions: dict):
        """Returns (plan, dval seed per direction for the first step)."""
        cfg = self.config
        model = self.node_model(node)
        ctx = self.ctx()
        if cfg.lookahead is not None:
            la = cfg.lookahead
            if la.d2_mode:
                result = build_d2_tree(self.problem, model, node.solution,
                                       la, ctx)
            elif la.n_trees > 1:
                result = build_multi_trees(
                    self.problem, model, node.solution, la, ctx,
                    estimator=self.estimator(), ext_tree=self.ext,
                    ext_root=node.ext_id)
            else:
                result = build_tree(
                    self.problem, model, node.solution, la, ctx,
                    estimator=self.estimator(), ext_tree=self.ext,
                    ext_root=node.ext_id)
            if cfg.reversal.enabled and result.leaves:
                self.try_reversal(result.leaves, node)
            if la.attract.enabled:
                self.merge_attract(result.attract)
            return list(result.path), None
        f2, _, _, _ = winnow_run(model, node.solution, fractions,
                                 cfg.winnow, ctx, node.depth)
        spec = cfg.criterion
        ranking_spec = cfg.vote_panel[0] \
            if spec.criterion is Criterion.VOTE else spec
        evals = self.evaluate_with_estimates(model, node, f2, ctx,
                                             ranking_spec, fractions)
        pick = vote(evals, cfg.vote_panel) \
            if spec.criterion is Criterion.VOTE else select(evals, spec)
        var, direction = self.apply_gate(node, evals, pick)
        self.record_pseudo(evals)
        seed = None
        ev = evals.get(var)
        if ev is not None and ev.uc_up is not None:
            lookup = uc_lookup_from(evals, node.solution)
            seed = {
                "up": (ev.eval_up,
                       sum(min(lookup(i)[0] * fp, lookup(i)[1] * fm)
                           for i, (fp, fm) in ev.frac_up.items())),
                "down": (ev.eval_down,
                         sum(min(lookup(i)[0] * fp, lookup(i)[1] * fm)
                             for i, (fp, fm) in ev.frac_down.items())),
            }
        return [(var, direction)], seed

    def evaluate_with_estimates(self, model, node, candidates, ctx, spec,
                                fractions) -> dict:
        """Full candidate evals, letting pseudo estimates stand in where
        permitted; the selected candidate is always re-solved for real."""
        est = self.estimator()
        if est is None:
            return evaluate_candidates(model, node.solution, candidates,
                                       ctx, spec, fractions)
        from branchlab.criteria import BranchEval
        evals: dict = {}
        pending = []
        for j in sorted(candidates):
            fp, fm = fractions[j]
            guess = est(j, fp, fm, node)
            if guess is None:
                pending.append(j)
            else:
                up, dn = guess
                evals[j] = BranchEval(var=j, eval_up=up, eval_down=dn,
                                      x_up=node.solution.x_o + up,
                                      x_down=node.solution.x_o + dn)
        if pending:
            solved = evaluate_candidates(model, node.solution, pending,
                                         ctx, spec, fractions)
            evals.update(solved)
        pick = select(evals, spec)
        if evals[pick.var].sol_up is None and \
                not evals[pick.var].up_infeasible:
            solved = evaluate_candidates(model, node.solution, [pick.var],
                                         ctx, spec, fractions)
            evals.update(solved)
        return evals

    def record_pseudo(self, evals: dict):
        for j, ev in evals.items():
            if ev.uc_up is None:
                continue
            if not ev.up_infeasible and ev.sol_up is not None:
                self.pseudo.update(j, "up", ev.uc_up,
                                   ev.sol_up.status is LpStatus.OPTIMAL)
            if not ev.down_infeasible and ev.sol_down is not None:
                self.pseudo.update(j, "down", ev.uc_down,
                                   ev.sol_down.status is LpStatus.OPTIMAL)

    # -- reversals -------------------------------------------------------------

    @staticmethod
    def reversal_threshold(values, beta: float) -> float:
        """Convex mix of the average and maximum resistance values."""
        return beta * (sum(values) / len(values)) + \
            (1.0 - beta) * max(values)

    def try_reversal(self, leaves, owner: NodeState):
        """Reverse the most resisted look-ahead branch at one leaf.

        Candidates are path branches whose variable sits nonbasic at the
        bound the branch imposed in the leaf solution; the threshold mixes
        the average and maximum reduced cost over the candidates.  At most
        one reversal per tree build, trace-only (the reversed node
        replaces nothing in the search).
        """
        beta = self.config.reversal.beta
        candidates = []
        for leaf in leaves:
            if leaf.solution is None or not leaf.solution.is_optimal:
                continue
            seen = set()
            for rec in leaf.path_records():
                j = rec.var
                if j in seen:
                    continue
                seen.add(j)
                if j in leaf.solution.basis.basic:
                    continue
                at_upper = j in leaf.solution.basis.at_upper
                if rec.direction == "up":
                    # the branch imposed a lower bound; the variable must
                    # still sit on it, tightened relative to the owner
                    if at_upper or \
                            leaf.model.lower[j] <= owner.lower[j]:
                        continue
                else:
                    if not at_upper or \
                            leaf.model.upper[j] >= owner.upper[j]:
                        continue
                rc = float(leaf.solution.reduced[j])
                candidates.append((rc, j, rec.direction, leaf))
        if not candidates:
            return
        values = [c[0] for c in candidates]
        threshold = self.reversal_threshold(values, beta)
        eligible = [c for c in candidates if c[0] >= threshold - 1e-12]
        if not eligible:
            return
        rc, j, direction, leaf = max(eligible, key=lambda c: (c[0], -c[1]))
        antecedent = (owner.lower[j] if direction == "up"
                      else owner.upper[j])
        try:
            rev_model, warm = apply_reversal_update(
                leaf.model, leaf.solution, j, antecedent)
        except Exception:
            return
        rev = solve(rev_model, warm_basis=warm,
                    budget=PivotBudget(cutoff=self.incumbent.cutoff))
        self.counters.absorb(rev)
        realized = (leaf.solution.x_o - rev.x_o
                    if rev.status is LpStatus.OPTIMAL else None)
        self.reversal_log.append({
            "node": owner.node_id,
            "var": int(j),
            "direction": direction,
            "predicted_max": round(rc, 9),
            "realized": None if realized is None
            else round(float(realized), 9),
            "lower": [float(v) for v in rev_model.lower],
            "upper": [float(v) for v in rev_model.upper],
        })

    # -- expansion --------------------------------------------------------------

    def ensure_solved(self, node: NodeState) -> str:
        if node.solution is not None and node.solution.is_optimal:
            return "ok"
        warm = None
        parent = self.nodes.get(node.parent_id) \
            if node.parent_id is not None else None
        if parent is not None and parent.solution is not None:
            warm = parent.solution.basis
        budget = PivotBudget(max_pivots=NODE_BUDGET.max_pivots,
                             max_degenerate=NODE_BUDGET.max_degenerate,
                             cutoff=self.incumbent.cutoff)
        sol = solve(self.node_model(node), warm_basis=warm, budget=budget)
        self.counters.absorb(sol)
        node.solution = sol
        if sol.status is LpStatus.OPTIMAL:
            node.bound = sol.x_o
            self.full_solves += 1
            self.full_pivots += sol.pivots
            self.refresh_dval_parts(node, parent)
            return "ok"
        if sol.status is LpStatus.CUTOFF_INFEASIBLE:
            return "cutoff"
        if sol.status is LpStatus.INFEASIBLE:
            return "infeasible"
        return "limit"

    def refresh_dval_parts(self, node: NodeState, parent):
        """Exact open-node evaluation pieces once the node LP is solved."""
        if parent is None or parent.solution is None:
            return
        frac = detect_fractional(node.solution, self.problem)
        rc = parent.solution.reduced
        mincost = sum(abs(float(rc[i])) * min(fp, fm)
                      for i, (fp, fm) in frac.items())
        plain = node.solution.x_o - parent.solution.x_o
        node.dval_parts = (plain, mincost, max(parent.depth, 1))

    def make_children(self, node: NodeState, var: int, direction: str,
                      seed) -> tuple[NodeState, NodeState]:
        value = float(node.solution.x[var])
        up_rec = BranchRecord(var=var, direction="up",
                              bound=math.ceil(value))
        dn_rec = BranchRecord(var=var, direction="down",
                              bound=math.floor(value))
        kids = {}
        for rec in (up_rec, dn_rec):
            lo, up = node.child_bounds(rec)
            parts = None
            if seed is not None:
                plain, mincost = seed[rec.direction]
                parts = (plain, mincost, max(node.depth, 1))
            child = self.new_node(node, rec, lo, up, dval_parts=parts)
            ext_rec = self.ext.add(node.ext_id or 0, var=var,
                                   direction=rec.direction,
                                   bound=rec.bound, tentative=False,
                                   uc=None)
            child.ext_id = ext_rec.node_id
            kids[rec.direction] = child
        self.counters.nodes += 2
        preferred = kids[direction]
        sibling = kids["down" if direction == "up" else "up"]
        return preferred, sibling

    def apply_plan(self, node: NodeState, plan, fractions):
        """Create children along the accepted plan, pushing the untaken
        sibling of every step; the last preferred child joins the open set
        and everything deeper is expanded inline."""
        current = node
        for step, (var, direction) in enumerate(plan):
            if var not in detect_fractional(current.solution,
                                            self.problem):
                break
            preferred, sibling = self.make_children(
                current, var, direction,
                self.seed_for(current, var) if step == 0 else None)
            self.push(sibling)
            last = step == len(plan) - 1
            if last:
                self.push(preferred)
                break
            status = self.ensure_solved(preferred)
            if status == "cutoff":
                self.trace_node(preferred, "pruned", reason="cutoff")
                break
            if status in ("infeasible", "limit"):
                self.trace_node(preferred, "infeasible")
                break
            frac = detect_fractional(preferred.solution, self.problem)
            self.update_taken_pseudo(current, preferred)
            if not frac:
                self.install_incumbent(preferred.solution.x,
                                       preferred.solution.x_o,
                                       preferred.depth, preferred)
                self.trace_node(preferred, "integral")
                break
            current = preferred

    def seed_for(self, node: NodeState, var: int):
        seed = self._pending_seed
        self._pending_seed = None
        if seed is not None:
            return seed
        sol = node.solution
        rc = abs(float(sol.reduced[var]))
        fp, fm = fractional_parts(float(sol.x[var]))
        return {"up": (rc * fp, 0.0), "down": (rc * fm, 0.0)}

    def update_taken_pseudo(self, parent: NodeState, child: NodeState):
        if child.branch is None or parent.solution is None:
            return
        value = float(parent.solution.x[child.branch.var])
        fp, fm = fractional_parts(value)
        f = fp if child.branch.direction == "up" else fm
        if f <= 1e-12:
            return
        uc = max(child.solution.x_o - parent.solution.x_o, 1e-9) / f
        self.pseudo.update(child.branch.var, child.branch.direction, uc,
                           True)
        if child.ext_id is not None:
            self.ext.set_uc(child.ext_id, uc)

    # -- main loop ---------------------------------------------------------------

    def run(self) -> SolveResult:
        cfg = self.config
        root = self.new_node(None, None, self.problem.lower.copy(),
                             self.problem.upper.copy())
        root.ext_id = 0
        status = self.ensure_solved(root)
        if status in ("infeasible", "cutoff", "limit"):
            self.trace_node(root, "infeasible")
            return self.finish("infeasible")
        self.root_x = root.solution.x.copy()
        if cfg.refset:
            self.refset = ReferenceSet(root_x=self.root_x,
                                       root_x_o=root.solution.x_o,
                                       r_max=cfg.refset_rmax,
                                       p=cfg.refset_p)
        self.push(root)
        expansions = 0
        while self.open:
            if expansions >= cfg.max_nodes or \
                    time.monotonic() - self.started > cfg.max_time:
                return self.finish("limit")
            if self.pending_restart:
                self.do_attract_restart()
            node = self.select_open()
            if node.bound > self.incumbent.cutoff + 1e-9:
                self.trace_node(node, "pruned", reason="bound")
                continue
            status = self.ensure_solved(node)
            if status == "cutoff":
                self.trace_node(node, "pruned", reason="cutoff")
                continue
            if status == "infeasible":
                self.trace_node(node, "infeasible")
                continue
            if status == "limit":
                self.incomplete = True
                self.closed_bound = min(self.closed_bound, node.bound)
                self.trace_node(node, "closed", reason="solver limit")
                continue
            fractions = detect_fractional(node.solution, self.problem)
            if node.branch is not None and node.parent_id is not None:
                parent = self.nodes.get(node.parent_id)
                if parent is not None and parent.solution is not None:
                    self.update_taken_pseudo(parent, node)
            if not fractions:
                self.install_incumbent(node.solution.x,
                                       node.solution.x_o, node.depth,
                                       node)
                self.trace_node(node, "integral")
                continue
            expansions += 1
            plan = self.decide(node, fractions)
            if plan:
                self.trace_node(node, "branched")
                self.apply_plan(node, plan, fractions)
        if self.incumbent.x is None:
            return self.finish("infeasible")
        return self.finish("feasible" if self.incomplete else "optimal")

    def decide(self, node: NodeState, fractions: dict):
        """Branch plan for one node, with the signal-restart loop."""
        cfg = self.config
        if node.depth == 0 and self.forced_root is not None:
            var, direction = self.forced_root
            self.forced_root = None
            if var in fractions:
                self._pending_seed = None
                return [(var, direction)]
        restarts = 0
        while True:
            try:
                plan, seed = self.pick_branch(node, fractions)
                self._pending_seed = seed
                return plan
            except CompulsorySignal as sig:
                restarts += 1
                if not self.absorb_at(node, sig):
                    return []
                fractions = detect_fractional(node.solution, self.problem)
                if not fractions:
                    self.install_incumbent(node.solution.x,
                                           node.solution.x_o, node.depth,
                                           node)
                    self.trace_node(node, "integral")
                    return []
            except NodeInfeasibleSignal:
                self.trace_node(node, "infeasible",
                                reason="both branches dead")
                return []
            except IncumbentSignal as sig:
                restarts += 1
                self.install_incumbent(sig.solution.x, sig.solution.x_o,
                                       node.depth + 1, node)
                if node.bound > self.incumbent.cutoff + 1e-9:
                    self.trace_node(node, "pruned",
                                    reason="incumbent cutoff")
                    return []
            except CListLeafSignal:
                self.incomplete = True
                self.closed_bound = min(self.closed_bound, node.bound)
                self.trace_node(node, "clist-leaf")
                return []
            if restarts > cfg.max_restarts:
                j = max(fractions,
                        key=lambda i: (min(fractions[i]), -i))
                fp, fm = fractions[j]
                self._pending_seed = None
                return [(j, "up" if fp < fm else "down")]

    def do_attract_restart(self):
        """One-shot restart re-rooting on the best accumulated counter."""
        self.pending_restart = False
        self.restarted = True
        best = max(self.global_attract,
                   key=lambda k: (self.global_attract[k], -k[0]))
        self.forced_root = best
        for node_id, _ in self.open:
            self.trace_node(self.nodes[node_id], "dropped",
                            reason="attract restart")
        self.open = []
        fresh = self.new_node(None, None, self.problem.lower.copy(),
                              self.problem.upper.copy())
        fresh.ext_id = 0
        self.push(fresh)

    def absorb_at(self, node: NodeState, sig: CompulsorySignal) -> bool:
        value = float(node.solution.x[sig.var])
        if sig.direction == "up":
            bound = math.ceil(value)
            node.lower = node.lower.copy()
            node.lower[sig.var] = bound
        else:
            bound = math.floor(value)
            node.upper = node.upper.copy()
            node.upper[sig.var] = bound
        node.implied.append(BranchRecord(var=sig.var,
                                         direction=sig.direction,
                                         bound=bound, compulsory=True))
        if node.ext_id is not None:
            self.ext.add_compulsory(node.ext_id)
        sol = solve(self.node_model(node), warm_basis=node.solution.basis,
                    budget=PivotBudget(cutoff=self.incumbent.cutoff))
        self.counters.absorb(sol)
        if sol.status is not LpStatus.OPTIMAL:
            self.trace_node(node, "infeasible",
                            reason="compulsory branch failed")
            return False
        node.solution = sol
        node.bound = sol.x_o
        return True

    def finish(self, status: str) -> SolveResult:
        open_bounds = [self.nodes[nid].bound for nid, _ in self.open]
        if status == "optimal":
            bound = self.incumbent.x_o
        elif status == "infeasible":
            bound = math.inf
        else:
            pieces = open_bounds + [self.closed_bound, self.incumbent.x_o]
            finite = [b for b in pieces if math.isfinite(b)]
            bound = min(finite) if finite else -math.inf
        if status == "limit" and self.incumbent.x is not None:
            status = "feasible"
        trace = {
            "schema": TRACE_SCHEMA,
            "instance": self.problem.name,
            "seed": self.config.seed,
            "status": status,
            "objective": None if self.incumbent.x is None
            else round(float(self.incumbent.x_o), 9),
            "bound": None if not math.isfinite(bound)
            else round(float(bound), 9),
            "nodes": [self.trace_map[k] for k in sorted(self.trace_map)],
            "incumbents": self.incumbent_log,
            "reversals": self.reversal_log,
            "counters": {
                "nodes": self.counters.nodes,
                "lp_solves": self.counters.lp_solves,
                "pivots": self.counters.pivots,
                "probes": self.counters.probes,
            },
        }
        if self.config.dump_extended:
            trace["extended"] = [
                {"id": r.node_id, "parent": r.parent_id, "var": r.var,
                 "direction": r.direction, "tentative": r.tentative,
                 "uc": None if r.uc is None else round(float(r.uc), 9),
                 "depth": r.depth, "compulsory": r.compulsory}
                for r in self.ext.records]
        return SolveResult(status=status,
                           objective=self.incumbent.x_o,
                           bound=bound,
                           x=None if self.incumbent.x is None
                           else self.incumbent.x.copy(),
                           trace=trace,
                           counters=self.counters,
                           ext=self.ext)


def solve_mip(problem: MipProblem, config: SolveConfig | None = None) \
        -> SolveResult:
    return _Search(problem, config or SolveConfig()).run()


def trace_to_json(trace: dict) -> str:
    return json.dumps(trace, indent=1, sort_keys=False) + "\n"
