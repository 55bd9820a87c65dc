import math

import numpy as np
import pytest

from branchlab.lp import apply_branch, solve
from branchlab.model import (
    BranchRecord,
    Incumbent,
    MipProblem,
    ModelError,
    NodeState,
    detect_fractional,
)


def small_problem():
    # min -x1 - x2 s.t. 3x1 + 2x2 <= 5 (stored as >=); LP root is fractional
    return MipProblem(name="p", obj=[-1.0, -1.0],
                      rows=[[-3.0, -2.0]], rhs=[-5.0],
                      lower=[0.0, 0.0], upper=[2.0, 2.0],
                      integer_mask=[True, True])


def test_detect_fractional_basic_arithmetic():
    p = small_problem()
    sol = solve(p.to_lp())
    frac = detect_fractional(sol, p)
    for j, (fp, fm) in frac.items():
        assert fp + fm == pytest.approx(1.0)
        v = sol.x[j]
        assert fp == pytest.approx(math.ceil(v) - v)
        assert fm == pytest.approx(v - math.floor(v))


def test_detect_fractional_examples():
    p = MipProblem(name="q", obj=[0.0, 0.0], rows=[[1.0, 1.0]], rhs=[5.4],
                   lower=[0.0, 0.0], upper=[9.0, 9.0],
                   integer_mask=[True, True])
    sol = solve(p.to_lp())
    frac = detect_fractional(sol, p)
    # exactly one variable carries the fractional mass 5.4
    assert len(frac) == 1
    ((j, (fp, fm)),) = frac.items()
    assert fm == pytest.approx(0.4)
    assert fp == pytest.approx(0.6)
    del j


def test_near_integral_values_respect_tolerance():
    p = small_problem()
    sol = solve(p.to_lp())
    fake = sol.__class__(status=sol.status, x_o=sol.x_o,
                         x=np.array([2.0000004, 0.0]), reduced=sol.reduced,
                         infeas=0.0, pivots=0, basis=sol.basis)
    assert detect_fractional(fake, p) == {}


def test_child_region_is_strictly_tighter():
    p = small_problem()
    sol = solve(p.to_lp())
    frac = detect_fractional(sol, p)
    assert frac
    j = min(frac)
    for direction in ("up", "down"):
        child, _ = apply_branch(p.to_lp(), sol, j, direction)
        assert np.all(child.lower >= p.lower)
        assert np.all(child.upper <= p.upper)
        assert (child.lower[j] > p.lower[j]) or (child.upper[j] < p.upper[j])


def test_incumbent_update_and_cutoff():
    p = small_problem()
    inc = Incumbent(eps=1e-6)
    assert inc.cutoff == math.inf
    assert inc.update([1.0, 0.0], -1.0, depth=2, problem=p)
    assert inc.x_o == -1.0
    assert inc.depth_found == 2
    assert inc.cutoff == pytest.approx(-1.0 - 1e-6)
    # equal objective is not an improvement
    assert not inc.update([0.0, 1.0], -1.0, depth=3, problem=p)
    # later improvements do not move depth_found (it calibrates d*)
    assert inc.update([0.0, 2.0], -2.0, depth=5, problem=p)
    assert inc.depth_found == 2
    assert inc.history == [-1.0, -2.0]


def test_incumbent_rejects_fractional_candidates():
    p = small_problem()
    inc = Incumbent()
    with pytest.raises(ModelError):
        inc.update([0.5, 0.0], -0.5, depth=1, problem=p)


def test_node_child_bounds():
    p = small_problem()
    node = NodeState(node_id=0, parent_id=None, depth=0, branch=None,
                     lower=p.lower.copy(), upper=p.upper.copy())
    rec = BranchRecord(var=1, direction="up", bound=2.0)
    lo, up = node.child_bounds(rec)
    assert lo[1] == 2.0 and up[1] == p.upper[1]
    child = node.clone_for_child(1, rec, lo, up)
    assert child.depth == 1 and child.parent_id == 0
