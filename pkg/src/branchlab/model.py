"""MIP problem data, node bound state, and incumbent bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from branchlab.lp import INT_TOL, LpModel, LpSolution, fractional_parts


class ModelError(Exception):
    pass


class MipProblem:
    """Immutable MIP instance: an LpModel plus the integer column set.

    Integer columns get their global bounds tightened inward to integers at
    construction time.  Column order is meaningful and preserved.
    """

    __slots__ = ("name", "obj", "rows", "rhs", "lower", "upper",
                 "integer_mask", "col_names", "row_names")

    def __init__(self, name, obj, rows, rhs, lower, upper, integer_mask,
                 col_names=None, row_names=None):
        obj = np.asarray(obj, dtype=float)
        rows = np.asarray(rows, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        lower = np.asarray(lower, dtype=float).copy()
        upper = np.asarray(upper, dtype=float).copy()
        integer_mask = np.asarray(integer_mask, dtype=bool)
        n = obj.shape[0]
        if rows.size == 0:
            rows = rows.reshape(0, n)
        if integer_mask.shape[0] != n:
            raise ModelError("integer mask length mismatch")
        for j in np.flatnonzero(integer_mask):
            if math.isfinite(lower[j]):
                lower[j] = math.ceil(lower[j] - INT_TOL)
            if math.isfinite(upper[j]):
                upper[j] = math.floor(upper[j] + INT_TOL)
        for a in (obj, rows, rhs, lower, upper, integer_mask):
            a.setflags(write=False)
        object.__setattr__(self, "name", name)
        object.__setattr__(self, "obj", obj)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "integer_mask", integer_mask)
        object.__setattr__(self, "col_names",
                           tuple(col_names) if col_names
                           else tuple(f"C{j}" for j in range(n)))
        object.__setattr__(self, "row_names",
                           tuple(row_names) if row_names
                           else tuple(f"R{i}" for i in range(rows.shape[0])))

    def __setattr__(self, *a):
        raise AttributeError("MipProblem is immutable")

    def __eq__(self, other):
        if not isinstance(other, MipProblem):
            return NotImplemented
        return (self.name == other.name
                and self.col_names == other.col_names
                and self.row_names == other.row_names
                and np.array_equal(self.obj, other.obj)
                and np.array_equal(self.rows, other.rows)
                and np.array_equal(self.rhs, other.rhs)
                and np.array_equal(self.lower, other.lower)
                and np.array_equal(self.upper, other.upper)
                and np.array_equal(self.integer_mask, other.integer_mask))

    def __hash__(self):
        return hash((self.name, self.col_names))

    @property
    def n_cols(self) -> int:
        return self.obj.shape[0]

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def integer_indices(self) -> tuple[int, ...]:
        return tuple(int(j) for j in np.flatnonzero(self.integer_mask))

    def is_binary(self, j: int) -> bool:
        return (self.integer_mask[j] and self.lower[j] >= 0
                and self.upper[j] <= 1)

    def to_lp(self) -> LpModel:
        return LpModel(self.obj, self.rows, self.rhs, self.lower, self.upper)

    def lp_with_bounds(self, lower, upper) -> LpModel:
        return LpModel(self.obj, self.rows, self.rhs, lower, upper)


@dataclass(frozen=True)
class BranchRecord:
    """One imposed restriction: an explicit branch or a compulsory bound."""

    var: int
    direction: str          # "up" | "down"
    bound: float            # the bound imposed (lower for up, upper for down)
    compulsory: bool = False

    def key(self) -> tuple:
        return (self.var, self.direction, self.bound)


@dataclass
class NodeState:
    """One node of the search: local bounds plus solve/bookkeeping caches."""

    node_id: int
    parent_id: int | None
    depth: int
    branch: BranchRecord | None
    lower: np.ndarray
    upper: np.ndarray
    implied: list[BranchRecord] = field(default_factory=list)
    solution: LpSolution | None = None
    fractional: dict[int, tuple[float, float]] = field(default_factory=dict)
    warm_basis: object = None
    bound: float = -math.inf    # best known lower bound on this subtree
    ext_id: int | None = None   # matching node in the extended-tree log
    dval_parts: tuple | None = None

    def child_bounds(self, record: BranchRecord):
        lo = self.lower.copy()
        up = self.upper.copy()
        if record.direction == "up":
            lo[record.var] = record.bound
        else:
            up[record.var] = record.bound
        return lo, up

    def clone_for_child(self, node_id, record, lower, upper):
        return NodeState(node_id=node_id, parent_id=self.node_id,
                         depth=self.depth + 1, branch=record,
                         lower=lower, upper=upper,
                         implied=[], bound=self.bound)


def detect_fractional(sol: LpSolution, problem: MipProblem,
                      tol: float = INT_TOL) -> dict[int, tuple[float, float]]:
    """Fractional integer variables of an optimal solution.

    Returns {j: (f_plus, f_minus)} over integer columns whose value is
    further than tol from every integer; empty means MIP feasible.
    """
    if not sol.is_optimal:
        raise ModelError("fractional detection needs an optimal solution")
    out: dict[int, tuple[float, float]] = {}
    for j in problem.integer_indices:
        v = float(sol.x[j])
        if abs(v - round(v)) <= tol:
            continue
        f_plus, f_minus = fractional_parts(v)
        out[j] = (f_plus, f_minus)
    return out


@dataclass
class Incumbent:
    """Best MIP-feasible solution found so far."""

    x: np.ndarray | None = None
    x_o: float = math.inf
    eps: float = 1e-6
    depth_found: int | None = None   # depth of the first incumbent (d*)
    history: list[float] = field(default_factory=list)

    @property
    def cutoff(self) -> float:
        """LP feasibility requires x_o <= incumbent - eps."""
        if math.isinf(self.x_o):
            return math.inf
        return self.x_o - self.eps

    def update(self, x, x_o: float, depth: int, problem: MipProblem,
               tol: float = INT_TOL) -> bool:
        """Install a strictly better MIP-feasible solution.

        Returns True when the incumbent changed; the caller must then prune
        every live node whose bound is >= the new cutoff.
        """
        x = np.asarray(x, dtype=float)
        for j in problem.integer_indices:
            if abs(x[j] - round(x[j])) > tol:
                raise ModelError("incumbent candidate is not MIP feasible")
        if x_o >= self.x_o:
            return False
        if self.x is None:
            self.depth_found = depth
        object_x = x.copy()
        self.x = object_x
        self.x_o = float(x_o)
        self.history.append(float(x_o))
        return True
