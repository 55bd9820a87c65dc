"""Benchmark harness: a strategy matrix over a directory of MPS files.

Each (instance, strategy) cell records node/LP/pivot counters and the
incumbent timeline.  The JSON report contains only deterministic fields
so identical runs are byte-identical; wall-clock times appear in the
printed table only.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import replace
from pathlib import Path

from branchlab.costmem import uc_error_report
from branchlab.criteria import Criterion, CriterionSpec
from branchlab.driver import ReversalConfig, SolveConfig, solve_mip
from branchlab.lookahead import AttractConfig, LookaheadConfig
from branchlab.mps import MpsParseError, parse_mps
from branchlab.winnow import WinnowParams

REPORT_SCHEMA = 1


def default_matrix() -> dict[str, SolveConfig]:
    """The strategy configurations compared out of the box."""
    la = LookaheadConfig(depth=3, winnow=WinnowParams(k2=5),
                         postwin="2a", lim=3, d0=2)
    return {
        "plain-c1": SolveConfig(
            criterion=CriterionSpec(criterion=Criterion.C1_PRODUCT)),
        "plain-c2a": SolveConfig(),
        "plain-c3": SolveConfig(
            criterion=CriterionSpec(criterion=Criterion.C3_THRESHOLD,
                                    lam=0.75)),
        "plain-c5": SolveConfig(
            criterion=CriterionSpec(criterion=Criterion.C5, p=0.3)),
        "plain-c7": SolveConfig(
            criterion=CriterionSpec(criterion=Criterion.C7, w1=1.0,
                                    w2=1.0)),
        "vote": SolveConfig(
            criterion=CriterionSpec(criterion=Criterion.VOTE)),
        "la-d3-2a": SolveConfig(lookahead=la),
        "la-d3-2b": SolveConfig(lookahead=replace(la, postwin="2b")),
        "la-d2-mode": SolveConfig(lookahead=LookaheadConfig(
            depth=2, winnow=WinnowParams(k2=1), d2_mode=True, v=1.0)),
        "la-straddle": SolveConfig(lookahead=replace(la, straddle=True)),
        "la-attract": SolveConfig(lookahead=replace(
            la, attract=AttractConfig(enabled=True, threshold=3.0))),
        "la-reversals": SolveConfig(
            lookahead=replace(la, postwin="off"),
            reversal=ReversalConfig(enabled=True, beta=0.5)),
        "pseudo-classic": SolveConfig(pseudo="classic"),
        "pseudo-analytical": SolveConfig(pseudo="analytical"),
        "dval-select": SolveConfig(node_select="dval", dval_approach=1),
        "refset": SolveConfig(refset=True),
    }


def run_benchmark(instance_dir: Path,
                  matrix: dict[str, SolveConfig] | None = None,
                  log=print) -> dict:
    """Solve every instance under every strategy; returns the report."""
    matrix = matrix or default_matrix()
    paths = sorted(Path(instance_dir).glob("*.mps"))
    rows = []
    timings = {}
    for path in paths:
        try:
            problem = parse_mps(path.read_text())
        except (MpsParseError, OSError) as err:
            log(f"warning: skipping {path.name}: {err}")
            continue
        for name, config in matrix.items():
            start = time.monotonic()
            result = solve_mip(problem, config)
            elapsed = time.monotonic() - start
            timings[(path.name, name)] = elapsed
            incumbents = result.trace["incumbents"]
            first_optimal = None
            if incumbents and result.x is not None:
                final = incumbents[-1]["objective"]
                first_optimal = next(e["order"] for e in incumbents
                                     if e["objective"] == final)
            errors = uc_error_report(result.ext) if result.ext else {}
            rows.append({
                "instance": path.name,
                "strategy": name,
                "status": result.status,
                "objective": None if result.x is None
                else round(float(result.objective), 9),
                "bound": None if not math.isfinite(result.bound)
                else round(float(result.bound), 9),
                "nodes": result.counters.nodes,
                "lp_solves": result.counters.lp_solves,
                "pivots": result.counters.pivots,
                "probes": result.counters.probes,
                "nodes_to_first_optimal": first_optimal,
                "incumbents": incumbents,
                "analytical_uc_mae": _rounded(
                    errors.get("analytical_mae")),
                "classic_uc_mae": _rounded(errors.get("classic_mae")),
            })
    report = {
        "schema": REPORT_SCHEMA,
        "instances": [p.name for p in paths],
        "strategies": sorted(matrix),
        "rows": rows,
    }
    if rows:
        log(format_table(rows, timings))
    return report


def _rounded(value):
    return None if value is None else round(float(value), 9)


def format_table(rows, timings) -> str:
    header = (f"{'instance':<12} {'strategy':<18} {'status':<10} "
              f"{'objective':>12} {'nodes':>7} {'lps':>7} {'time s':>8}")
    lines = [header, "-" * len(header)]
    for row in rows:
        t = timings.get((row["instance"], row["strategy"]), 0.0)
        obj = "-" if row["objective"] is None else f"{row['objective']:.6g}"
        lines.append(
            f"{row['instance']:<12} {row['strategy']:<18} "
            f"{row['status']:<10} {obj:>12} {row['nodes']:>7} "
            f"{row['lp_solves']:>7} {t:>8.3f}")
    return "\n".join(lines)


def report_to_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=False) + "\n"


def load_matrix(path: Path) -> dict[str, SolveConfig]:
    """Strategy matrix from a JSON file of named CLI-style option sets."""
    from branchlab.cli import config_from_options

    data = json.loads(Path(path).read_text())
    configs = {}
    for name, options in data["configs"].items():
        configs[name] = config_from_options(options)
    return configs
