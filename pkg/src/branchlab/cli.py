"""Command line front end: `branchlab solve` and `branchlab bench`."""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

from branchlab.costmem import AnalyticalThresholds
from branchlab.criteria import Criterion, CriterionSpec
from branchlab.driver import (
    ReversalConfig,
    SolveConfig,
    solve_mip,
    trace_to_json,
)
from branchlab.lookahead import AttractConfig, LookaheadConfig
from branchlab.mps import MpsParseError, parse_mps
from branchlab.winnow import WinnowParams

_CRITERIA = {
    "C0": Criterion.C0_CONVEX,
    "C1": Criterion.C1_PRODUCT,
    "C2a": Criterion.C2A,
    "C2b": Criterion.C2B,
    "C3": Criterion.C3_THRESHOLD,
    "C4": Criterion.C4,
    "C5": Criterion.C5,
    "C6": Criterion.C6,
    "C7": Criterion.C7,
    "vote": Criterion.VOTE,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchlab",
        description="Instrumented branch-and-bound MIP solver for "
                    "comparing look-ahead branching strategies.")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve one MPS instance")
    s.add_argument("instance", type=Path)
    s.add_argument("--criterion", choices=sorted(_CRITERIA), default="C2a")
    s.add_argument("--p", type=float, default=1.0,
                   help="criterion exponent (C2/C5)")
    s.add_argument("--lambda", dest="lam", type=float, default=0.75,
                   help="C3 threshold weight")
    s.add_argument("--w1", type=float, default=100.0)
    s.add_argument("--w2", type=float, default=10.0)
    s.add_argument("--mu", type=float, default=1 / 6,
                   help="C0 convex weight on the larger evaluation")
    s.add_argument("--lookahead", type=int, default=3, metavar="D",
                   help="look-ahead tree depth (0 = plain branching); "
                        "the default strategy looks ahead 3 levels")
    s.add_argument("--postwin", choices=["off", "2a", "2b", "2c"],
                   default="2a")
    s.add_argument("--lim", type=int, default=3)
    s.add_argument("--d0", type=int, default=2)
    s.add_argument("--accept", choices=["first", "path"], default="first")
    s.add_argument("--early-exit", action="store_true")
    s.add_argument("--d2-mode", action="store_true")
    s.add_argument("--v", type=float, default=1.0)
    s.add_argument("--multi-tree", type=int, default=1, metavar="N")
    s.add_argument("--straddle", action="store_true")
    s.add_argument("--attract", type=float, default=None, metavar="T",
                   help="persistent-attractiveness override threshold")
    s.add_argument("--attract-half", action="store_true")
    s.add_argument("--attract-restart", action="store_true",
                   help="restart once, re-rooting on the most "
                        "persistently attractive branch")
    s.add_argument("--pseudo", choices=["off", "classic", "analytical"],
                   default="off")
    s.add_argument("--refset", action="store_true")
    s.add_argument("--theta", type=float, default=0.5,
                   help="reference-set gate mix of min/max distance")
    s.add_argument("--reversals", action="store_true")
    s.add_argument("--beta", type=float, default=0.5)
    s.add_argument("--node-select", choices=["dfs", "dval"],
                   default="dfs")
    s.add_argument("--dval-approach", type=int, choices=[1, 2], default=1)
    s.add_argument("--n0", type=int, default=None)
    s.add_argument("--n1", type=int, default=None)
    s.add_argument("--n2", type=int, default=None,
                   help="stage-2 survivors at the root")
    s.add_argument("--k2", type=int, default=None)
    s.add_argument("--clist", type=int, default=None, metavar="N",
                   help="fixed candidate list size chosen at the root")
    s.add_argument("--vlim", type=float, default=None, metavar="M",
                   help="early-stop multiplier m for stage-2 probes")
    s.add_argument("--max-nodes", type=int, default=100_000)
    s.add_argument("--max-time", type=float, default=300.0)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--integral-eps", action="store_true",
                   help="use eps = 1 for integral objectives")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--trace", type=Path, default=None, metavar="OUT.JSON")

    b = sub.add_parser("bench", help="strategy matrix over a directory")
    b.add_argument("directory", type=Path)
    b.add_argument("--configs", type=Path, default=None,
                   help="JSON file of named option sets")
    b.add_argument("--out", type=Path, default=None,
                   help="write the JSON report here")
    return parser


def config_from_options(opt: dict) -> SolveConfig:
    """SolveConfig from a dict of CLI-style option values."""
    crit = _CRITERIA[opt.get("criterion", "C2a")]
    spec = CriterionSpec(criterion=crit,
                         p=opt.get("p", 1.0),
                         lam=opt.get("lambda", 0.75),
                         w1=opt.get("w1", 100.0),
                         w2=opt.get("w2", 10.0),
                         mu=opt.get("mu", 1 / 6))
    winnow = WinnowParams(n0=opt.get("n0"), n1=opt.get("n1"),
                          n2_root=opt.get("n2") or 4,
                          k2=opt.get("k2"),
                          spec=spec,
                          vlim_mult=opt.get("vlim"))
    lookahead = None
    depth = opt.get("lookahead", 0)
    if depth or opt.get("d2_mode"):
        attract_threshold = opt.get("attract")
        lookahead = LookaheadConfig(
            depth=depth or 2,
            winnow=winnow,
            postwin=opt.get("postwin", "off"),
            lim=opt.get("lim", 3),
            d0=opt.get("d0", 2),
            accept=opt.get("accept", "first"),
            early_exit=opt.get("early_exit", False),
            n_trees=opt.get("multi_tree", 1),
            d2_mode=opt.get("d2_mode", False),
            v=opt.get("v", 1.0),
            straddle=opt.get("straddle", False),
            attract=AttractConfig(
                enabled=attract_threshold is not None,
                threshold=(attract_threshold
                           if attract_threshold is not None else 3.0),
                half_tree=opt.get("attract_half", False)))
    return SolveConfig(
        criterion=spec,
        winnow=winnow,
        lookahead=lookahead,
        pseudo=opt.get("pseudo", "off"),
        thresholds=AnalyticalThresholds(),
        refset=opt.get("refset", False),
        refset_theta=opt.get("theta", 0.5),
        node_select=opt.get("node_select", "dfs"),
        dval_approach=opt.get("dval_approach", 1),
        reversal=ReversalConfig(enabled=opt.get("reversals", False),
                                beta=opt.get("beta", 0.5)),
        eps=1.0 if opt.get("integral_eps") else opt.get("eps", 1e-6),
        max_nodes=opt.get("max_nodes", 100_000),
        max_time=opt.get("max_time", 300.0),
        seed=opt.get("seed", 0),
        attract_restart=opt.get("attract_restart", False))


def run_solve(args) -> int:
    try:
        problem = parse_mps(args.instance.read_text())
    except (MpsParseError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    opt = {
        "criterion": args.criterion, "p": args.p, "lambda": args.lam,
        "w1": args.w1, "w2": args.w2, "mu": args.mu,
        "lookahead": args.lookahead, "postwin": args.postwin,
        "lim": args.lim, "d0": args.d0, "accept": args.accept,
        "early_exit": args.early_exit, "d2_mode": args.d2_mode,
        "v": args.v, "multi_tree": args.multi_tree,
        "straddle": args.straddle, "attract": args.attract,
        "attract_half": args.attract_half,
        "attract_restart": args.attract_restart, "pseudo": args.pseudo,
        "refset": args.refset, "theta": args.theta,
        "reversals": args.reversals, "beta": args.beta,
        "node_select": args.node_select,
        "dval_approach": args.dval_approach,
        "n0": args.n0, "n1": args.n1, "n2": args.n2, "k2": args.k2,
        "vlim": args.vlim, "max_nodes": args.max_nodes,
        "max_time": args.max_time, "eps": args.eps,
        "integral_eps": args.integral_eps, "seed": args.seed,
    }
    config = config_from_options(opt)
    if args.clist is not None:
        # the fixed candidate list is the n0 best root candidates
        from branchlab.lp import solve as lp_solve
        from branchlab.model import detect_fractional
        from dataclasses import replace as dc_replace

        root = lp_solve(problem.to_lp())
        frac = detect_fractional(root, problem)
        members = sorted(frac, key=lambda j: (abs(frac[j][1] - 0.5), j))
        clist = frozenset(members[:args.clist])
        config = dc_replace(config,
                            winnow=dc_replace(config.winnow, clist=clist))
        if config.lookahead is not None:
            config = dc_replace(
                config,
                lookahead=dc_replace(config.lookahead,
                                     winnow=config.winnow))
    result = solve_mip(problem, config)
    obj = "-" if result.x is None else f"{result.objective:.9g}"
    bound = "-" if not math.isfinite(result.bound) \
        else f"{result.bound:.9g}"
    print(f"status    {result.status}")
    print(f"objective {obj}")
    print(f"bound     {bound}")
    print(f"nodes     {result.counters.nodes}")
    print(f"lp solves {result.counters.lp_solves}")
    print(f"pivots    {result.counters.pivots}")
    if result.x is not None:
        pairs = ", ".join(
            f"{name}={value:.6g}" for name, value in
            zip(problem.col_names, result.x))
        print(f"solution  {pairs}")
    if args.trace is not None:
        args.trace.write_text(trace_to_json(result.trace))
        print(f"trace     {args.trace}")
    return 0 if result.status in ("optimal", "feasible") else 1


def run_bench(args) -> int:
    from branchlab.bench import (
        load_matrix,
        report_to_json,
        run_benchmark,
    )

    matrix = load_matrix(args.configs) if args.configs else None
    report = run_benchmark(args.directory, matrix)
    if args.out is not None:
        args.out.write_text(report_to_json(report))
        print(f"report written to {args.out}")
    if not report["rows"]:
        print("error: no instances found", file=sys.stderr)
        return 2
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "solve":
        return run_solve(args)
    return run_bench(args)


if __name__ == "__main__":
    sys.exit(main())
