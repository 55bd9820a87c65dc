"""branchlab: an instrumented branch-and-bound MIP solver.

The package implements look-ahead branching over small deep trees,
progressive winnowing of branch candidates, straddle branching on derived
integer variables, branch reversals, classic and path-analytical
pseudo-costs, depth-calibrated open-node scores, and reference-set global
costs, all behind one driver so the strategies can be compared on
desk-scale instances.
"""

from branchlab.lp import (
    Basis,
    LpModel,
    LpSolution,
    LpStatus,
    PivotBudget,
    apply_branch,
    apply_reversal_update,
    probe_single_pivot,
    solve,
)
from branchlab.model import Incumbent, MipProblem, NodeState, detect_fractional
from branchlab.mps import parse_mps, write_mps

__version__ = "0.1.0"

__all__ = [
    "Basis",
    "Incumbent",
    "LpModel",
    "LpSolution",
    "LpStatus",
    "MipProblem",
    "NodeState",
    "PivotBudget",
    "apply_branch",
    "apply_reversal_update",
    "detect_fractional",
    "parse_mps",
    "probe_single_pivot",
    "solve",
    "write_mps",
]
