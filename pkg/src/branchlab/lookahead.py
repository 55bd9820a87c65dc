"""Narrow look-ahead tree generation for picking one branch at a node.

The builder scans depths 0..D-1.  Each scanned node is winnowed down to a
candidate set F2, both children of every candidate are solved (Step 2),
one branching variable is chosen per node, and its child pair joins the
tree.  Sibling leaf pairs at depth D are scored against the *root*
objective (Step 3) and the depth-0 branch above the winning pair is the
answer (Step 4), or the whole root-to-leaf path in path-accept mode.

Post-winnowing caps the sibling pairs carried forward from depth d0 on.
At the first gated depth the cap is applied to the prospective pairs
before their LPs are solved (their selection evaluations are already in
hand from the winnowing stage); at later depths every scanned node's pair
is solved and the cap picks which pairs continue.  This reproduces the
node-count identities 2+4+8 = 14, 126, 2+4+6+12+12+12 = 48 (mode 2a) and
2+4+6+6+6+6 = 30 (mode 2b) on an always-feasible fixture.

Signals: a compulsory branch or dead node discovered while scanning depth
0 propagates to the caller, as does any new incumbent (the caller applies
it and restarts the build).  Deeper compulsory branches are absorbed into
the scanned node, which is re-solved and re-scanned; deeper dead nodes
are removed and their missing leaves are scored at the incumbent
objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from branchlab.criteria import (
    BranchEval,
    CompulsorySignal,
    Criterion,
    CriterionSpec,
    EvalContext,
    IncumbentSignal,
    NodeInfeasibleSignal,
    attach_unit_costs,
    evaluate_candidates,
    make_eval,
    score,
    select,
    solve_child,
    uc_lookup_from,
    weight_eval,
)
from branchlab.lp import LpModel, LpSolution, LpStatus, apply_branch, solve
from branchlab.model import BranchRecord, MipProblem, detect_fractional
from branchlab.straddle import (
    drop_inactive_straddle_rows,
    make_straddle,
    straddle_eval,
)
from branchlab.winnow import CListLeafSignal, WinnowParams
from branchlab.winnow import run as winnow_run


@dataclass(frozen=True)
class AttractConfig:
    enabled: bool = False
    threshold: float = 3.0
    half_tree: bool = False


@dataclass(frozen=True)
class LookaheadConfig:
    depth: int = 3
    winnow: WinnowParams = field(default_factory=WinnowParams)
    leaf_spec: CriterionSpec = field(default_factory=lambda: CriterionSpec(
        criterion=Criterion.C2A, p=1.0))
    frac_weight: float = 0.0          # additive leaf penalty, <= 0
    postwin: str = "off"              # off | 2a | 2b | 2c
    lim: int = 3
    d0: int = 2
    accept: str = "first"             # first | path
    n_trees: int = 1
    d2_mode: bool = False
    v: float = 1.0                    # d2 budget ratio n2(0)/n2(1)
    straddle: bool = False
    attract: AttractConfig = field(default_factory=AttractConfig)
    scan_order: str = "dfs"           # within-level processing order
    early_exit: bool = False          # stop once one root side owns all
                                      # carried nodes (optional shortcut)

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("look-ahead depth must be >= 1")
        if self.postwin not in ("off", "2a", "2b", "2c"):
            raise ValueError(f"unknown post-winnow mode {self.postwin!r}")
        if self.postwin != "off" and (self.lim < 1 or self.d0 < 1):
            raise ValueError("post-winnowing needs lim >= 1 and d0 >= 1")
        if self.accept not in ("first", "path"):
            raise ValueError(f"unknown accept mode {self.accept!r}")
        if self.scan_order not in ("dfs", "bfs"):
            raise ValueError(f"unknown scan order {self.scan_order!r}")
        if not 1.0 <= self.v <= 2.0:
            raise ValueError("the d2 ratio v must lie in [1, 2]")
        if self.frac_weight > 0:
            raise ValueError("the fractionality weight must be <= 0")


class AttractCounters:
    """Persistent-attractiveness tallies for one tree build."""

    def __init__(self):
        self.counts: dict[tuple[int, str], int] = {}
        self.half: dict[str, dict[tuple[int, str], int]] = {
            "up": {}, "down": {}}

    def bump(self, j: int, direction: str, half: str | None):
        key = (j, direction)
        self.counts[key] = self.counts.get(key, 0) + 1
        halves = [half] if half is not None else ["up", "down"]
        for h in halves:
            self.half[h][key] = self.half[h].get(key, 0) + 1

    def value(self, j: int, half: str | None = None) -> tuple[float, str]:
        table = self.counts if half is None else self.half[half]
        up = table.get((j, "up"), 0)
        down = table.get((j, "down"), 0)
        if up >= down:
            return up, "up"
        return down, "down"


@dataclass
class TreeNode:
    node_id: int
    parent: "TreeNode | None"
    depth: int
    var: int | None
    direction: str | None
    model: LpModel
    solution: LpSolution | None
    eval_vs_parent: float = 0.0
    alive: bool = True
    root_side: str | None = None     # which depth-1 child it descends from
    ext_id: int | None = None
    implied: int = 0

    def path_records(self) -> list[BranchRecord]:
        out = []
        node = self
        while node is not None and node.var is not None:
            out.append(BranchRecord(var=node.var, direction=node.direction,
                                    bound=0.0))
            node = node.parent
        out.reverse()
        return out

    def path_key(self) -> tuple:
        """Traversal-order-independent identity of this node."""
        return tuple((r.var, r.direction) for r in self.path_records())


@dataclass
class BuildResult:
    var: int
    direction: str
    path: list[tuple[int, str]]
    depth_counts: list[int]
    total_nodes: int
    leaves: list[TreeNode]
    winner_leaf: TreeNode | None
    root_candidates: dict
    attract: AttractCounters
    early_exit: bool = False
    overridden: bool = False
    pair_scores: dict = field(default_factory=dict)
    nodes: list = field(default_factory=list)


@dataclass
class _Proposal:
    parent: TreeNode
    var: int
    sel_score: float
    stage_eval: BranchEval
    solved: BranchEval | None = None


class _Builder:
    def __init__(self, problem: MipProblem, cfg: LookaheadConfig,
                 ctx: EvalContext, estimator=None, ext_tree=None):
        self.problem = problem
        self.cfg = cfg
        self.ctx = ctx
        self.estimator = estimator
        self.ext = ext_tree
        self.counter = 0
        self.attract = AttractCounters()
        self.depth_counts: list[int] = []
        self.excluded: frozenset[int] = frozenset()
        self.root_f2: list[int] = []
        self.all_nodes: list[TreeNode] = []

    # -- helpers ----------------------------------------------------------

    def _next_id(self) -> int:
        self.counter += 1
        return self.counter

    def _record_ext(self, parent: TreeNode, var, direction, bound,
                    tentative, uc):
        if self.ext is None:
            return None
        pid = parent.ext_id if parent.ext_id is not None else 0
        rec = self.ext.add(pid, var=var, direction=direction, bound=bound,
                           tentative=tentative, uc=uc)
        return rec.node_id

    def _fractions(self, node: TreeNode) -> dict:
        frac = detect_fractional(node.solution, self.problem)
        if self.excluded:
            frac = {j: v for j, v in frac.items() if j not in self.excluded}
        return frac

    def _winnow(self, node: TreeNode, fractions: dict):
        params = self.cfg.winnow
        mask = self.problem.integer_mask if self.cfg.straddle else None
        return winnow_run(node.model, node.solution, fractions, params,
                          self.ctx, node.depth, straddle_mask=mask)

    def _reduce_straddle(self, node: TreeNode) -> None:
        """Drop straddle rows whose slack went nonbasic, re-solving once.

        Dropping a tight row relaxes the node, so its solution (and hence
        the fractional set seen by the scan) must be refreshed before any
        candidate work happens.
        """
        if not self.cfg.straddle or not node.model.straddle_rows:
            return
        model, basis = drop_inactive_straddle_rows(node.model,
                                                   node.solution)
        if basis is node.solution.basis and model is node.model:
            return
        node.model = model
        if basis is None:
            sol = solve(model, budget=self.ctx.branch_budget())
            self.ctx.counters.absorb(sol)
            if sol.status is not LpStatus.OPTIMAL:
                node.alive = False
                return
            node.solution = sol

    def _solve_pair(self, node: TreeNode, j: int,
                    fractions: dict) -> BranchEval:
        """Full child solves for candidate j at a scanned node."""
        if self.cfg.straddle:
            ev = straddle_eval(node.model, node.solution, j, self.ctx,
                               fractions)
        else:
            sol_up = solve_child(node.model, node.solution, j, "up",
                                 self.ctx)
            sol_dn = solve_child(node.model, node.solution, j, "down",
                                 self.ctx)
            ev = make_eval(j, node.solution.x_o, sol_up, sol_dn, self.ctx)
            fp, fm = fractions[j]
            attach_unit_costs(ev, node.solution.x_o, fp, fm)
        self._log_pair(node, ev, tentative=True)
        return ev

    def _log_pair(self, node: TreeNode, ev: BranchEval, tentative: bool):
        if self.ext is None:
            return
        for direction, uc, dead in (("up", ev.uc_up, ev.up_infeasible),
                                    ("down", ev.uc_down,
                                     ev.down_infeasible)):
            if not dead:
                self._record_ext(node, ev.var, direction, 0.0, tentative,
                                 uc)

    def _absorb_compulsory(self, node: TreeNode,
                           sig: CompulsorySignal) -> bool:
        """Tighten node bounds with a forced branch; False kills the node."""
        sol = node.solution
        value = float(sol.x[sig.var])
        if sig.direction == "up":
            bound = math.ceil(value)
            model = node.model.with_bounds(sig.var, lower=bound)
        else:
            bound = math.floor(value)
            model = node.model.with_bounds(sig.var, upper=bound)
        fresh = solve(model, warm_basis=sol.basis,
                      budget=self.ctx.branch_budget())
        self.ctx.counters.absorb(fresh)
        if fresh.status is not LpStatus.OPTIMAL:
            return False
        node.model = model
        node.solution = fresh
        node.implied += 1
        if self.ext is not None and node.ext_id is not None:
            self.ext.add_compulsory(node.ext_id)
        if not detect_fractional(fresh, self.problem):
            raise IncumbentSignal(fresh)
        return True

    # -- scanning ---------------------------------------------------------

    def _propose(self, node: TreeNode) -> _Proposal | None:
        """Winnow + Step 2 at one node; None when the node dies."""
        attempts = 0
        self._reduce_straddle(node)
        if not node.alive:
            return None
        while True:
            attempts += 1
            if attempts > 50:
                return None
            fractions = self._fractions(node)
            if not fractions:
                raise IncumbentSignal(node.solution)
            try:
                f2, s2, f1, _ = self._winnow(node, fractions)
            except CompulsorySignal as sig:
                if node.depth == 0:
                    raise
                if not self._absorb_compulsory(node, sig):
                    node.alive = False
                    return None
                continue
            except NodeInfeasibleSignal:
                if node.depth == 0:
                    raise
                node.alive = False
                return None
            except CListLeafSignal:
                if node.depth == 0:
                    raise
                return None   # the node stays an unexpanded tree leaf
            if node.depth == 0:
                self.root_f2 = list(f2)
            half = node.root_side
            for j in f1:
                if j not in f2:
                    self.attract.bump(j, s2[j].direction, half)
            n2 = len(f2)
            try:
                if n2 == 1:
                    j = f2[0]
                    # the pair itself is solved only if this proposal
                    # survives post-winnow gating
                    sel = score(s2[j], self.cfg.winnow.spec)
                    self.attract.bump(j, s2[j].direction, half)
                    return _Proposal(parent=node, var=j, sel_score=sel,
                                     stage_eval=s2[j])
                evals = self._full_evals(node, f2, fractions)
                chosen = select(evals, self.cfg.winnow.spec)
                for j in f2:
                    self.attract.bump(j, evals[j].direction, half)
                ev = evals[chosen.var]
                return _Proposal(parent=node, var=chosen.var,
                                 sel_score=score(ev, self.cfg.winnow.spec),
                                 stage_eval=ev, solved=ev)
            except CompulsorySignal as sig:
                if node.depth == 0:
                    raise
                if not self._absorb_compulsory(node, sig):
                    node.alive = False
                    return None
            except NodeInfeasibleSignal:
                if node.depth == 0:
                    raise
                node.alive = False
                return None

    def _full_evals(self, node: TreeNode, candidates, fractions) -> dict:
        """Step-2 solves for every candidate, estimator shortcuts allowed.

        Estimated candidates are ranked without LP solves; the winner is
        then solved for real so its children can join the tree.
        """
        est = self.estimator
        evals: dict[int, BranchEval] = {}
        pending = []
        if est is not None:
            for j in sorted(candidates):
                fp, fm = fractions[j]
                pair = est(j, fp, fm, node)
                if pair is None:
                    pending.append(j)
                else:
                    up, dn = pair
                    evals[j] = BranchEval(
                        var=j, eval_up=up, eval_down=dn,
                        x_up=node.solution.x_o + up,
                        x_down=node.solution.x_o + dn)
        else:
            pending = sorted(candidates)
        for j in pending:
            evals[j] = self._solve_pair(node, j, fractions)
        chosen = select(evals, self.cfg.winnow.spec)
        if evals[chosen.var].sol_up is None \
                and not evals[chosen.var].up_infeasible:
            evals[chosen.var] = self._solve_pair(node, chosen.var,
                                                 fractions)
        return evals

    def _admit_pair(self, prop: _Proposal, fractions: dict | None = None):
        """Solve (if needed) and attach the chosen pair as tree nodes."""
        node = prop.parent
        if prop.solved is None:
            fractions = fractions or self._fractions(node)
            try:
                prop.solved = self._solve_pair(node, prop.var, fractions)
            except CompulsorySignal as sig:
                if node.depth == 0:
                    raise
                ev = sig.evaluation
                if ev is None:
                    node.alive = False
                    return []
                prop.solved = ev
            except NodeInfeasibleSignal:
                if node.depth == 0:
                    raise
                node.alive = False
                return []
        ev = prop.solved
        kids = []
        for direction, sol, dead in (("up", ev.sol_up, ev.up_infeasible),
                                     ("down", ev.sol_down,
                                      ev.down_infeasible)):
            if dead or sol is None:
                continue
            if self.cfg.straddle:
                child_model, _, _ = make_straddle(
                    node.model, node.solution, prop.var, direction,
                    self.problem.integer_mask)
            else:
                child_model, _ = apply_branch(node.model, node.solution,
                                              prop.var, direction)
            kid = TreeNode(
                node_id=self._next_id(), parent=node,
                depth=node.depth + 1, var=prop.var, direction=direction,
                model=child_model, solution=sol,
                eval_vs_parent=(ev.eval_up if direction == "up"
                                else ev.eval_down),
                root_side=(node.root_side if node.root_side is not None
                           else direction))
            kid.ext_id = self._record_ext(
                node, prop.var, direction, 0.0, tentative=False,
                uc=(ev.uc_up if direction == "up" else ev.uc_down))
            kids.append(kid)
            self.all_nodes.append(kid)
        return kids

    # -- main build -------------------------------------------------------

    def build(self, root: TreeNode,
              forced_root_var: int | None = None) -> BuildResult:
        cfg = self.cfg
        scan = [root]
        self.depth_counts = []
        pairs_by_depth: dict[int, list[list[TreeNode]]] = {}
        early_exit = False
        root_candidates: dict = {}
        for d in range(cfg.depth):
            proposals = []
            for node in scan:
                if not node.alive:
                    continue
                if forced_root_var is not None and d == 0:
                    fractions = self._fractions(node)
                    ev = self._solve_pair(node, forced_root_var, fractions)
                    proposals.append(_Proposal(
                        parent=node, var=forced_root_var,
                        sel_score=score(ev, cfg.winnow.spec),
                        stage_eval=ev, solved=ev))
                    continue
                prop = self._propose(node)
                if prop is not None:
                    proposals.append(prop)
            if d == 0:
                if not proposals:
                    raise NodeInfeasibleSignal(-1)
                root_candidates = {proposals[0].var: proposals[0]}
            gated = cfg.postwin != "off" and d >= cfg.d0
            if gated and d == cfg.d0 and len(proposals) > cfg.lim:
                # first gate: rank prospective pairs before solving them
                proposals.sort(key=lambda p: (-p.sel_score,
                                              p.parent.path_key()))
                proposals = proposals[:cfg.lim]
            pairs = []
            for prop in proposals:
                kids = self._admit_pair(prop)
                if kids:
                    pairs.append(kids)
            level_nodes = [k for pair in pairs for k in pair]
            self.depth_counts.append(len(level_nodes))
            pairs_by_depth[d + 1] = pairs
            if d + 1 == cfg.depth:
                scan = []
                break
            if gated and d > cfg.d0:
                carried = post_winnow(pairs, cfg.postwin, cfg.lim,
                                      cfg.winnow.spec)
            elif gated and d == cfg.d0:
                carried = post_winnow(pairs, cfg.postwin, cfg.lim,
                                      cfg.winnow.spec, already_capped=True)
            else:
                carried = [k for pair in pairs for k in pair]
            if cfg.early_exit and cfg.postwin != "off" and d >= cfg.d0 \
                    and carried:
                sides = {k.root_side for k in carried}
                if len(sides) == 1:
                    early_exit = True
                    side = sides.pop()
                    winner = carried[0]
                    return self._finish(root, pairs_by_depth, cfg,
                                        early_side=side,
                                        early_node=winner,
                                        early_exit=early_exit)
            scan = sorted(carried, key=lambda k: k.path_key(),
                          reverse=cfg.scan_order == "bfs")
        return self._finish(root, pairs_by_depth, cfg)

    def _leaf_bundles(self, pairs: list[list[TreeNode]], root: TreeNode):
        bundles = {}
        handles = {}
        pairs = sorted(pairs, key=lambda pair: pair[0].path_key()[:-1])
        for idx, pair in enumerate(pairs):
            up_node = next((k for k in pair if k.direction == "up"), None)
            dn_node = next((k for k in pair if k.direction == "down"), None)
            gap = self.ctx.x_o_star - root.solution.x_o
            ev_up = (up_node.solution.x_o - root.solution.x_o
                     if up_node is not None else gap)
            ev_dn = (dn_node.solution.x_o - root.solution.x_o
                     if dn_node is not None else gap)
            if self.cfg.frac_weight != 0.0:
                for node, attr in ((up_node, "up"), (dn_node, "down")):
                    if node is None:
                        continue
                    frac = detect_fractional(node.solution, self.problem)
                    pen = self.cfg.frac_weight * sum(
                        min(fp, fm) for fp, fm in frac.values())
                    if attr == "up":
                        ev_up += pen
                    else:
                        ev_dn += pen
            var = (up_node or dn_node).var
            bundles[idx] = BranchEval(
                var=idx, eval_up=ev_up, eval_down=ev_dn,
                x_up=ev_up, x_down=ev_dn,
                up_infeasible=up_node is None,
                down_infeasible=dn_node is None)
            handles[idx] = (up_node, dn_node, var)
        return bundles, handles

    def _finish(self, root, pairs_by_depth, cfg, early_side=None,
                early_node=None, early_exit=False) -> BuildResult:
        total = sum(self.depth_counts)
        leaves = [k for pair in pairs_by_depth.get(cfg.depth, [])
                  for k in pair]
        if early_exit:
            choice_var = early_node.path_records()[0].var
            result = BuildResult(
                var=choice_var, direction=early_side,
                path=[(choice_var, early_side)],
                depth_counts=self.depth_counts, total_nodes=total,
                leaves=leaves, winner_leaf=None,
                root_candidates={}, attract=self.attract,
                early_exit=True, nodes=self.all_nodes)
            return result
        deepest = max((d for d, pairs in pairs_by_depth.items() if pairs),
                      default=0)
        pairs = pairs_by_depth.get(deepest, [])
        if not pairs:
            raise NodeInfeasibleSignal(-1)
        bundles, handles = self._leaf_bundles(pairs, root)
        pick = select(bundles, cfg.leaf_spec)
        up_node, dn_node, _ = handles[pick.var]
        winner = up_node if pick.direction == "up" else dn_node
        if winner is None:
            winner = up_node or dn_node
        top = winner.path_records()[0]
        path = [(rec.var, rec.direction) for rec in winner.path_records()]
        return BuildResult(
            var=top.var, direction=top.direction,
            path=path if cfg.accept == "path" else [(top.var,
                                                     top.direction)],
            depth_counts=self.depth_counts, total_nodes=total,
            leaves=leaves, winner_leaf=winner,
            root_candidates={}, attract=self.attract,
            pair_scores={k: pick.scores.get(k) for k in bundles},
            nodes=self.all_nodes)


def post_winnow(pairs: list[list[TreeNode]], mode: str, lim: int,
                spec: CriterionSpec,
                already_capped: bool = False) -> list[TreeNode]:
    """Select the nodes carried forward from one generated level.

    2a keeps the lim best sibling pairs; 2b keeps only the lower-eval node
    of each kept pair; 2c keeps the lim best single nodes across pairs.
    """
    if mode == "off":
        return [k for pair in pairs for k in pair]
    if mode == "2c":
        nodes = [k for pair in pairs for k in pair]
        nodes.sort(key=lambda k: (k.eval_vs_parent, k.path_key()))
        return nodes[:lim]
    scored = []
    for pair in pairs:
        up = next((k for k in pair if k.direction == "up"), None)
        dn = next((k for k in pair if k.direction == "down"), None)
        ev = BranchEval(
            var=0,
            eval_up=up.eval_vs_parent if up else math.inf,
            eval_down=dn.eval_vs_parent if dn else math.inf,
            x_up=0.0, x_down=0.0)
        scored.append((score(ev, spec), pair))
    if not already_capped:
        scored.sort(key=lambda t: (-t[0], t[1][0].path_key()))
        scored = scored[:lim]
    kept_pairs = [pair for _, pair in scored]
    if mode == "2a":
        return [k for pair in kept_pairs for k in pair]
    # 2b: best sibling only
    out = []
    for pair in kept_pairs:
        best = min(pair, key=lambda k: (k.eval_vs_parent, k.path_key()))
        out.append(best)
    return out


def _maybe_override(result: BuildResult, builder: _Builder,
                    root_f2: list[int], cfg: LookaheadConfig) -> BuildResult:
    att = cfg.attract
    if not att.enabled or not root_f2:
        return result
    half = None
    if att.half_tree and result.winner_leaf is not None:
        half = result.winner_leaf.root_side
    best_j, best_val, best_dir = None, -1.0, "up"
    for j in sorted(root_f2):
        val, direction = builder.attract.value(j, half)
        if val > best_val:
            best_j, best_val, best_dir = j, val, direction
    if best_j is not None and best_val > att.threshold:
        return replace_result(result, var=best_j, direction=best_dir,
                              overridden=True)
    return result


def replace_result(result: BuildResult, **kw) -> BuildResult:
    data = dict(result.__dict__)
    data.update(kw)
    if kw.get("overridden"):
        data["path"] = [(kw["var"], kw["direction"])]
    return BuildResult(**data)


def _root_node(problem: MipProblem, model: LpModel, sol: LpSolution,
               ext_root: int | None = None) -> TreeNode:
    return TreeNode(node_id=0, parent=None, depth=0, var=None,
                    direction=None, model=model, solution=sol,
                    ext_id=ext_root)


def build_tree(problem: MipProblem, model: LpModel, sol: LpSolution,
               cfg: LookaheadConfig, ctx: EvalContext, estimator=None,
               ext_tree=None, ext_root: int | None = None) -> BuildResult:
    """One look-ahead tree; probe signals propagate to the caller."""
    builder = _Builder(problem, cfg, ctx, estimator, ext_tree)
    root = _root_node(problem, model, sol, ext_root)
    fractions = detect_fractional(sol, problem)
    if not fractions:
        raise IncumbentSignal(sol)
    result = builder.build(root)
    return _maybe_override(result, builder, builder.root_f2, cfg)


def build_d2_tree(problem: MipProblem, model: LpModel, sol: LpSolution,
                  cfg: LookaheadConfig, ctx: EvalContext) -> BuildResult:
    """Simplified two-level strategy with |F|-proportioned pair budgets.

    Solves 2*n2(0) LPs at the root and 2*n2(1) at each depth-1 child; the
    depth-2 sibling pairs are scored with unit-cost weighted (second
    order) evaluations, pricing each leaf fractional by probes from the
    d=1 parent first, the root's probes second, and the root's reduced
    costs last.
    """
    fractions = detect_fractional(sol, problem)
    if not fractions:
        raise IncumbentSignal(sol)
    f_size = len(fractions)
    n2_1 = max(1, round(f_size / (cfg.v + 2.0)))
    n2_0 = max(1, round(cfg.v * f_size / (cfg.v + 2.0)))
    params = replace(cfg.winnow, n0=None, n1=None, k2=1,
                     n2_root=n2_0, n2_mid=n2_1)
    spec = params.spec
    # root scan
    f2, _, _, _ = winnow_run(model, sol, fractions, params, ctx, 0)
    root_evals = evaluate_candidates(model, sol, f2, ctx, spec, fractions)
    choice = select(root_evals, spec)
    root_ev = root_evals[choice.var]
    root_lookup = uc_lookup_from(root_evals, sol)
    leaf_spec = CriterionSpec(criterion=Criterion.C7, w1=spec.w1 or 1.0,
                              w2=0.0)
    bundles = {}
    handles = {}
    for direction, child_sol, dead in (
            ("up", root_ev.sol_up, root_ev.up_infeasible),
            ("down", root_ev.sol_down, root_ev.down_infeasible)):
        if dead or child_sol is None:
            continue
        child_model, _ = apply_branch(model, sol, choice.var, direction)
        child_frac = detect_fractional(child_sol, problem)
        if not child_frac:
            raise IncumbentSignal(child_sol)
        child_evals = None
        for _ in range(20):
            try:
                cf2, _, _, _ = winnow_run(child_model, child_sol,
                                          child_frac, params, ctx, 1)
                child_evals = evaluate_candidates(child_model, child_sol,
                                                  cf2, ctx, spec,
                                                  child_frac)
                break
            except CompulsorySignal as sig:
                # absorb the forced branch into this depth-1 child
                value = float(child_sol.x[sig.var])
                if sig.direction == "up":
                    child_model = child_model.with_bounds(
                        sig.var, lower=math.ceil(value))
                else:
                    child_model = child_model.with_bounds(
                        sig.var, upper=math.floor(value))
                fresh = solve(child_model, warm_basis=child_sol.basis,
                              budget=ctx.branch_budget())
                ctx.counters.absorb(fresh)
                if fresh.status is not LpStatus.OPTIMAL:
                    child_evals = None
                    break
                child_sol = fresh
                child_frac = detect_fractional(child_sol, problem)
                if not child_frac:
                    raise IncumbentSignal(child_sol)
            except NodeInfeasibleSignal:
                child_evals = None
                break
        if child_evals is None:
            continue

        def lookup(i, _child_evals=child_evals):
            ev = _child_evals.get(i)
            if ev is not None and ev.uc_up is not None:
                return ev.uc_up, ev.uc_down
            rev = root_evals.get(i)
            if rev is not None and rev.uc_up is not None:
                return rev.uc_up, rev.uc_down
            rc = abs(float(sol.reduced[i]))   # root reduced costs
            return rc, rc

        pick = select(child_evals, spec)
        leaf = child_evals[pick.var]
        weighted = weight_eval(
            replace_leaf_baseline(leaf, child_sol.x_o, sol.x_o),
            leaf_spec.eval_flavor(), leaf_spec.w1, leaf_spec.w2, lookup)
        bundles[0 if direction == "up" else 1] = BranchEval(
            var=0 if direction == "up" else 1,
            eval_up=weighted.eval_up, eval_down=weighted.eval_down,
            x_up=weighted.x_up, x_down=weighted.x_down,
            up_infeasible=weighted.up_infeasible,
            down_infeasible=weighted.down_infeasible)
        handles[0 if direction == "up" else 1] = direction
    if not bundles:
        raise NodeInfeasibleSignal(choice.var)
    pick = select(bundles, leaf_spec)
    direction = handles[pick.var]
    counts = [2, 2 * len(bundles)]
    return BuildResult(var=choice.var, direction=direction,
                       path=[(choice.var, direction)],
                       depth_counts=counts, total_nodes=sum(counts),
                       leaves=[], winner_leaf=None,
                       root_candidates=root_evals,
                       attract=AttractCounters(),
                       pair_scores={"n2_root": n2_0, "n2_child": n2_1})


def replace_leaf_baseline(ev: BranchEval, parent_x_o: float,
                          root_x_o: float) -> BranchEval:
    """Re-express child evals against the root objective (Step 3)."""
    shift = parent_x_o - root_x_o
    out = BranchEval(**{k: getattr(ev, k) for k in (
        "var", "eval_up", "eval_down", "x_up", "x_down", "infeas_up",
        "infeas_down", "frac_up", "frac_down", "uc_up", "uc_down",
        "up_infeasible", "down_infeasible", "sol_up", "sol_down")})
    out.eval_up = ev.eval_up + shift
    out.eval_down = ev.eval_down + shift
    return out


def build_multi_trees(problem: MipProblem, model: LpModel,
                      sol: LpSolution, cfg: LookaheadConfig,
                      ctx: EvalContext, estimator=None,
                      ext_tree=None, ext_root: int | None = None) -> BuildResult:
    """Lexicographically deduplicated trees from the top root candidates.

    The k-th tree is rooted at the k-th best depth-0 candidate and may not
    branch anywhere on a better-ranked candidate, so no two trees can
    generate the same node.  The best leaf across trees decides.
    """
    if cfg.n_trees < 2:
        return build_tree(problem, model, sol, cfg, ctx, estimator,
                          ext_tree, ext_root)
    fractions = detect_fractional(sol, problem)
    if not fractions:
        raise IncumbentSignal(sol)
    f2, s2, _, _ = winnow_run(model, sol, fractions, cfg.winnow, ctx, 0)
    if cfg.n_trees >= len(f2) + 1 and len(f2) < 2:
        return build_tree(problem, model, sol, cfg, ctx, estimator,
                          ext_tree, ext_root)
    root_evals = evaluate_candidates(model, sol, f2, ctx, cfg.winnow.spec,
                                     fractions)
    minimize = cfg.winnow.spec.criterion in (Criterion.C6, Criterion.C7)
    ranked = sorted(
        root_evals,
        key=lambda j: (score(root_evals[j], cfg.winnow.spec)
                       * (1 if minimize else -1), j))
    ranked = ranked[:min(cfg.n_trees, len(ranked))]
    best: tuple[float, BuildResult] | None = None
    for rank, var in enumerate(ranked):
        builder = _Builder(problem, cfg, ctx, estimator, ext_tree)
        builder.excluded = frozenset(ranked[:rank])
        root = _root_node(problem, model, sol, ext_root)
        try:
            result = builder.build(root, forced_root_var=var)
        except NodeInfeasibleSignal:
            continue
        quality = max((v for v in result.pair_scores.values()
                       if v is not None), default=-math.inf)
        if best is None or quality > best[0]:
            best = (quality, result)
    if best is None:
        raise NodeInfeasibleSignal(-1)
    return best[1]
