"""Bounded-variable LP representation and a dense dual simplex engine.

The engine works on models of the form

    minimize    c . v
    subject to  A v >= b,   lower <= v <= upper

Each row gets a surplus column internally (A v - s = b, s >= 0), and the
basis is tracked as (basic column set, bound side of each nonbasic column).
Nonbasic variables are handled by bound-side bookkeeping: values, reduced
costs and ratio tests are computed as if every nonbasic variable had been
translated/complemented to sit at value 0, so the reduced costs reported at
dual-feasible iterates are always nonnegative (up to tolerance).

All arithmetic is dense numpy; the inverse of the basis matrix is kept
explicitly and rebuilt every REFACTOR_EVERY pivots.  This is intended for
desk-scale instances (tens of columns), not production LPs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

FEAS_TOL = 1e-7       # primal feasibility tolerance on rows and bounds
INT_TOL = 1e-6        # integrality tolerance
DUAL_TOL = 1e-9       # reduced-cost sign tolerance
PIVOT_TOL = 1e-9      # smallest usable pivot element
REFACTOR_EVERY = 64
BIG_BOUND = 1e8       # stand-in upper bound used to dual-start free columns

INF = math.inf


class LpStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    CUTOFF_INFEASIBLE = "cutoff_infeasible"
    PIVOT_LIMIT_HIT = "pivot_limit_hit"


class LpError(Exception):
    pass


class LpModelError(LpError):
    """Bad model data or mismatched dimensions."""


class LpNumericError(LpError):
    """Singular basis that refactorization could not repair."""


class LpProbeError(LpError):
    """Precondition failure in a probe/branch operation."""


@dataclass(frozen=True)
class PivotBudget:
    """Termination controls for one dual simplex run.

    cutoff: the largest still-acceptable objective; the solve is declared
        cutoff-infeasible as soon as any dual iterate exceeds it (callers
        pass incumbent - eps, making the test equivalent to reaching the
        incumbent objective).
    v_lim: optional early stop once the largest primal violation falls
        below this value (the iterate is returned as PIVOT_LIMIT_HIT).
    """

    max_pivots: int = 1000
    max_degenerate: int = 200
    cutoff: float = INF
    v_lim: float | None = None

    def __post_init__(self):
        if self.max_pivots <= 0:
            raise LpModelError("max_pivots must be positive")
        if self.max_degenerate <= 0:
            raise LpModelError("max_degenerate must be positive")
        if self.v_lim is not None and self.v_lim <= 0:
            raise LpModelError("v_lim must be positive when set")


@dataclass(frozen=True)
class Basis:
    """Basic column indices plus the bound side of every nonbasic column.

    Columns 0..n-1 are structural, n..n+m-1 are row surpluses.  `at_upper`
    holds the nonbasic columns currently sitting at their upper bound.
    """

    basic: tuple[int, ...]
    at_upper: frozenset[int] = frozenset()


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x_o: float
    x: np.ndarray            # structural values (undefined entries possible
                             # for non-optimal statuses, still reported)
    reduced: np.ndarray      # structural reduced costs, translated so that
                             # nonbasic entries are >= -tol; 0 for basic
    infeas: float            # sum of positive row/bound violations
    pivots: int
    basis: Basis

    @property
    def is_optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class LpModel:
    """Immutable bounded-variable LP: minimize obj.v s.t. rows.v >= rhs."""

    __slots__ = ("obj", "rows", "rhs", "lower", "upper", "straddle_rows")

    def __init__(self, obj, rows, rhs, lower, upper, straddle_rows=()):
        obj = np.asarray(obj, dtype=float)
        rows = np.asarray(rows, dtype=float)
        rhs = np.asarray(rhs, dtype=float)
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = obj.shape[0]
        if rows.ndim != 2 or rows.shape[1] != n:
            if rows.size == 0:
                rows = rows.reshape(0, n)
            else:
                raise LpModelError(
                    f"row matrix shape {rows.shape} does not match {n} columns")
        if rhs.shape[0] != rows.shape[0]:
            raise LpModelError("rhs length does not match row count")
        if lower.shape[0] != n or upper.shape[0] != n:
            raise LpModelError("bound vectors do not match column count")
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(rows))
                and np.all(np.isfinite(rhs))):
            raise LpModelError("coefficients must be finite")
        if np.any(np.isposinf(lower)) or np.any(np.isneginf(upper)):
            raise LpModelError("lower bounds must be < +inf, uppers > -inf")
        for a in (obj, rows, rhs, lower, upper):
            a.setflags(write=False)
        object.__setattr__(self, "obj", obj)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "rhs", rhs)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        # (row index, surplus column) pairs of appended straddle rows
        object.__setattr__(self, "straddle_rows", tuple(straddle_rows))

    def __setattr__(self, *a):
        raise AttributeError("LpModel is immutable")

    @property
    def n_rows(self) -> int:
        return self.rows.shape[0]

    @property
    def n_cols(self) -> int:
        return self.obj.shape[0]

    def with_bounds(self, j: int, lower: float | None = None,
                    upper: float | None = None) -> "LpModel":
        lo = self.lower.copy()
        up = self.upper.copy()
        if lower is not None:
            lo[j] = lower
        if upper is not None:
            up[j] = upper
        return LpModel(self.obj, self.rows, self.rhs, lo, up,
                       self.straddle_rows)

    def with_row(self, coeffs, rhs_value: float,
                 straddle: bool = False) -> "LpModel":
        """Append one >= row; its surplus column index is n_cols + n_rows."""
        rows = np.vstack([self.rows, np.asarray(coeffs, dtype=float)])
        rhs = np.append(self.rhs, float(rhs_value))
        marks = self.straddle_rows
        if straddle:
            marks = marks + ((self.n_rows, self.n_cols + self.n_rows),)
        return LpModel(self.obj, rows, rhs, self.lower, self.upper, marks)

    def without_rows(self, drop: set[int]) -> "LpModel":
        keep = [i for i in range(self.n_rows) if i not in drop]
        remap = {old: new for new, old in enumerate(keep)}
        marks = tuple((remap[r], self.n_cols + remap[r])
                      for r, _ in self.straddle_rows if r in remap)
        return LpModel(self.obj, self.rows[keep], self.rhs[keep],
                       self.lower, self.upper, marks)


class _Workspace:
    """Mutable dual simplex state for one model.

    Full column space: structural columns then one surplus per row.
    """

    def __init__(self, model: LpModel):
        self.model = model
        n, m = model.n_cols, model.n_rows
        self.n = n
        self.m = m
        self.ncols = n + m
        self.full = np.hstack([model.rows, -np.eye(m)]) if m else \
            np.zeros((0, n))
        self.cost = np.concatenate([model.obj, np.zeros(m)])
        self.lo = np.concatenate([model.lower, np.zeros(m)])
        self.up = np.concatenate([model.upper, np.full(m, INF)])
        self.artificial: set[int] = set()
        self.basic: list[int] = []
        self.in_basis = np.zeros(self.ncols, dtype=bool)
        self.at_upper = np.zeros(self.ncols, dtype=bool)
        self.binv = np.zeros((m, m))
        self.beta = np.zeros(m)
        self.rc = np.zeros(self.ncols)

    # -- basis management ------------------------------------------------

    def load_cold(self):
        """All-surplus basis; structural columns parked where dual feasible.

        Columns whose required side has no finite bound get a BIG_BOUND
        stand-in; if the optimum ends up resting on one, solve() raises.
        """
        self.basic = list(range(self.n, self.ncols))
        self.in_basis[:] = False
        self.in_basis[self.n:] = True
        self.at_upper[:] = False
        for j in range(self.n):
            if self.cost[j] < 0:
                if math.isinf(self.up[j]):
                    self.up[j] = BIG_BOUND
                    self.artificial.add(j)
                self.at_upper[j] = True
            elif math.isinf(self.lo[j]):
                if self.cost[j] == 0 and not math.isinf(self.up[j]):
                    self.at_upper[j] = True
                else:
                    self.lo[j] = -BIG_BOUND
                    self.artificial.add(j)
        self.refactorize()

    def load_basis(self, basis: Basis) -> bool:
        if len(basis.basic) != self.m:
            return False
        cols = set(basis.basic)
        if len(cols) != self.m or any(not 0 <= c < self.ncols
                                      for c in cols):
            return False
        self.basic = list(basis.basic)
        self.in_basis[:] = False
        for c in self.basic:
            self.in_basis[c] = True
        self.at_upper[:] = False
        for c in basis.at_upper:
            if c < self.ncols and not self.in_basis[c]:
                self.at_upper[c] = True
        try:
            self.refactorize()
        except LpNumericError:
            return False
        if not self._restore_dual_feasibility():
            return False
        return True

    def refactorize(self):
        if self.m == 0:
            self.binv = np.zeros((0, 0))
        else:
            B = self.full[:, self.basic]
            try:
                self.binv = np.linalg.inv(B)
            except np.linalg.LinAlgError:
                raise LpNumericError("singular basis")
        self._recompute_values()
        self._recompute_rc()

    def _recompute_values(self):
        vN = np.where(self.at_upper, self.up, self.lo)
        vN[self.in_basis] = 0.0
        if self.m:
            self.beta = self.binv @ (self.model.rhs - self.full @ vN)
        else:
            self.beta = np.zeros(0)
        self._vN = vN

    def _recompute_rc(self):
        if self.m:
            y = self.cost[self.basic] @ self.binv
            self.rc = self.cost - y @ self.full
        else:
            self.rc = self.cost.copy()
        self.rc[self.basic] = 0.0

    def _restore_dual_feasibility(self) -> bool:
        """Flip nonbasic columns whose reduced-cost sign is wrong.

        A flip is only possible onto a finite opposite bound; returns False
        when a wrong-signed column has no finite bound to move to.
        """
        changed = False
        for j in range(self.ncols):
            if self.in_basis[j]:
                continue
            if not self.at_upper[j] and self.rc[j] < -DUAL_TOL:
                if math.isinf(self.up[j]):
                    return False
                self.at_upper[j] = True
                changed = True
            elif self.at_upper[j] and self.rc[j] > DUAL_TOL:
                if math.isinf(-self.lo[j]):
                    return False
                self.at_upper[j] = False
                changed = True
        if changed:
            self._recompute_values()
        return True

    # -- queries ----------------------------------------------------------

    def values(self) -> np.ndarray:
        v = self._vN.copy()
        for pos, c in enumerate(self.basic):
            v[c] = self.beta[pos]
        return v

    def objective(self) -> float:
        v = self.values()
        return float(self.cost[:self.n] @ v[:self.n])

    def infeasibility(self) -> float:
        v = self.values()
        below = np.maximum(self.lo - v, 0.0)
        above = np.maximum(v - self.up, 0.0)
        below[np.isinf(below)] = 0.0
        return float(np.sum(below) + np.sum(above))

    def max_violation(self) -> tuple[float, int]:
        """Largest bound violation among basic columns; ties to lowest column."""
        best_viol = 0.0
        best_pos = -1
        for pos, c in enumerate(self.basic):
            val = self.beta[pos]
            viol = max(self.lo[c] - val, val - self.up[c])
            if viol > best_viol or (best_pos >= 0 and viol == best_viol
                                    and c < self.basic[best_pos]):
                best_viol = viol
                best_pos = pos
        return best_viol, best_pos

    def tableau_row(self, pos: int) -> np.ndarray:
        """Row of B^-1 A for basis position pos, over all columns (raw signs)."""
        return self.binv[pos] @ self.full

    def translated_rc(self) -> np.ndarray:
        rc = self.rc.copy()
        rc[self.at_upper & ~self.in_basis] *= -1.0
        rc[self.in_basis] = 0.0
        return rc

    # -- pivoting ----------------------------------------------------------

    def entering_column(self, pos: int) -> tuple[int, np.ndarray] | None:
        """Dual ratio test for the leaving variable at basis position pos.

        Returns (entering column, tableau row) or None when the ratio test
        is empty (dual unbounded, hence the LP is primal infeasible).
        """
        c_leave = self.basic[pos]
        below = self.beta[pos] < self.lo[c_leave]
        alpha = self.tableau_row(pos)
        rc_t = self.translated_rc()
        best_ratio = INF
        best_col = -1
        for j in range(self.ncols):
            if self.in_basis[j]:
                continue
            a = alpha[j]
            if abs(a) <= PIVOT_TOL:
                continue
            if below:
                elig = (a < 0) if not self.at_upper[j] else (a > 0)
            else:
                elig = (a > 0) if not self.at_upper[j] else (a < 0)
            if not elig:
                continue
            ratio = abs(rc_t[j] / a)
            if ratio < best_ratio - 1e-12:
                best_ratio, best_col = ratio, j
        if best_col < 0:
            return None
        return best_col, alpha

    def pivot(self, pos: int, enter: int, alpha: np.ndarray) -> float:
        """Swap basic position pos for column enter; returns objective delta."""
        leave = self.basic[pos]
        below = self.beta[pos] < self.lo[leave]
        target = self.lo[leave] if below else self.up[leave]
        step = (self.beta[pos] - target) / alpha[enter]
        before = self.objective()
        w = self.binv @ self.full[:, enter]
        # basic values move against the entering column's direction
        self.beta -= w * step
        enter_val = (self.up[enter] if self.at_upper[enter]
                     else self.lo[enter]) + step
        # basis exchange
        self.basic[pos] = enter
        self.in_basis[leave] = False
        self.in_basis[enter] = True
        self.at_upper[leave] = not below
        self.at_upper[enter] = False
        # eta update of the explicit inverse
        piv = w[pos]
        self.binv[pos] /= piv
        for i in range(self.m):
            if i != pos:
                self.binv[i] -= w[i] * self.binv[pos]
        self.beta[pos] = enter_val
        self._recompute_values_keep_beta()
        self._recompute_rc()
        return self.objective() - before

    def _recompute_values_keep_beta(self):
        vN = np.where(self.at_upper, self.up, self.lo)
        vN[self.in_basis] = 0.0
        self._vN = vN

    def snapshot_basis(self) -> Basis:
        ups = frozenset(int(j) for j in range(self.ncols)
                        if not self.in_basis[j] and self.at_upper[j])
        return Basis(tuple(int(c) for c in self.basic), ups)


def _run_dual_simplex(ws: _Workspace, budget: PivotBudget) -> tuple[LpStatus, int]:
    pivots = 0
    stalled = 0
    while True:
        # the cutoff is inclusive: an iterate exactly on it can still lead
        # to an acceptable solution, so only strictly worse ones die
        if ws.objective() > budget.cutoff + 1e-9:
            return LpStatus.CUTOFF_INFEASIBLE, pivots
        viol, pos = ws.max_violation()
        if viol <= FEAS_TOL:
            return LpStatus.OPTIMAL, pivots
        if budget.v_lim is not None and viol < budget.v_lim:
            return LpStatus.PIVOT_LIMIT_HIT, pivots
        if pivots >= budget.max_pivots or stalled >= budget.max_degenerate:
            return LpStatus.PIVOT_LIMIT_HIT, pivots
        found = ws.entering_column(pos)
        if found is None:
            return LpStatus.INFEASIBLE, pivots
        enter, alpha = found
        delta = ws.pivot(pos, enter, alpha)
        pivots += 1
        stalled = stalled + 1 if delta <= 1e-12 else 0
        if pivots % REFACTOR_EVERY == 0:
            ws.refactorize()


def solve(model: LpModel, warm_basis: Basis | None = None,
          budget: PivotBudget | None = None) -> LpSolution:
    """Dual simplex solve; warm basis must be dual-feasible or flippable."""
    budget = budget or PivotBudget()
    ws = _Workspace(model)
    loaded = False
    if warm_basis is not None:
        loaded = ws.load_basis(warm_basis)
    if not loaded:
        ws.load_cold()
        if not ws._restore_dual_feasibility():
            raise LpNumericError("could not construct a dual-feasible start")
    status, pivots = _run_dual_simplex(ws, budget)
    values = ws.values()
    x = values[:model.n_cols].copy()
    rc = ws.translated_rc()[:model.n_cols].copy()
    infeas = 0.0 if status is LpStatus.OPTIMAL else ws.infeasibility()
    if status is LpStatus.OPTIMAL and ws.artificial:
        for j in ws.artificial:
            if abs(values[j]) >= BIG_BOUND * 0.5:
                raise LpNumericError(
                    "optimum rests on an artificial bound; the LP is likely "
                    "unbounded below")
    x_o = INF if status is LpStatus.INFEASIBLE else ws.objective()
    return LpSolution(status=status, x_o=x_o, x=x, reduced=rc,
                      infeas=infeas, pivots=pivots,
                      basis=ws.snapshot_basis())


def fractional_parts(value: float) -> tuple[float, float]:
    """(f_plus, f_minus) = (ceil(v) - v, v - floor(v))."""
    fm = value - math.floor(value)
    return 1.0 - fm if fm > 0 else 0.0, fm


def is_fractional(value: float, tol: float = INT_TOL) -> bool:
    return abs(value - round(value)) > tol


def probe_single_pivot(model: LpModel, sol: LpSolution, j: int,
                       direction: str) -> float:
    """Objective-increase estimate for one dual pivot of a branch on x_j.

    Eligible ratios pair the (nonnegative, translated) reduced costs with
    the variable's raw tableau-row coefficient: for an up branch the sign
    pattern admits negative coefficients on at-lower columns and positive
    on at-upper columns; a down branch admits the opposite.  The smallest
    ratio magnitude times the relevant fractional part is the first-pivot
    objective change.  Returns +inf when no ratio is eligible (that branch
    is LP infeasible).
    """
    if direction not in ("up", "down"):
        raise LpProbeError(f"bad direction {direction!r}")
    ws = _Workspace(model)
    if not ws.load_basis(sol.basis):
        raise LpProbeError("solution basis does not fit the model")
    if j not in ws.basic:
        raise LpProbeError(f"x_{j} is nonbasic; probe needs a basic variable")
    pos = ws.basic.index(j)
    value = ws.beta[pos]
    if not is_fractional(value):
        raise LpProbeError(f"x_{j} = {value} is not fractional")
    f_plus, f_minus = fractional_parts(value)
    frac = f_plus if direction == "up" else f_minus
    alpha = ws.tableau_row(pos)
    rc_t = ws.translated_rc()
    want_below = direction == "up"   # an up branch leaves x_j below its new lower bound
    best = INF
    for col in range(ws.ncols):
        if ws.in_basis[col]:
            continue
        a = alpha[col]
        if abs(a) <= PIVOT_TOL:
            continue
        if want_below:
            elig = (a < 0) if not ws.at_upper[col] else (a > 0)
        else:
            elig = (a > 0) if not ws.at_upper[col] else (a < 0)
        if elig:
            best = min(best, abs(rc_t[col] / a))
    return best * frac if math.isfinite(best) else INF


def apply_branch(model: LpModel, sol: LpSolution, j: int,
                 direction: str) -> tuple[LpModel, Basis]:
    """Child model for an up/down branch on x_j plus the parent warm basis."""
    value = float(sol.x[j])
    if not is_fractional(value):
        raise LpProbeError(f"x_{j} = {value} is not fractional")
    if direction == "up":
        child = model.with_bounds(j, lower=math.ceil(value))
    elif direction == "down":
        child = model.with_bounds(j, upper=math.floor(value))
    else:
        raise LpProbeError(f"bad direction {direction!r}")
    return child, sol.basis


def apply_reversal_update(model: LpModel, sol: LpSolution, j: int,
                          antecedent: float) -> tuple[LpModel, Basis]:
    """Reverse the branch that left x_j nonbasic at one of its bounds.

    Nonbasic at lower bound L: the branch bound is dropped (the antecedent
    lower bound is reinstated) and the upper bound becomes L - 1; nonbasic
    at upper bound U symmetrically becomes lower bound U + 1.  The returned
    warm basis keeps the parent basic set with x_j parked at its new near
    bound, which shifts the constant column by the variable's updated
    column; solve() flips the side again if dual feasibility demands it.
    """
    if j in sol.basis.basic:
        raise LpProbeError(f"x_{j} is basic; reversals need a nonbasic column")
    if j in sol.basis.at_upper:
        bound = model.upper[j]
        child = model.with_bounds(j, lower=bound + 1, upper=antecedent)
        at_upper = sol.basis.at_upper - {j}
    else:
        bound = model.lower[j]
        child = model.with_bounds(j, lower=antecedent, upper=bound - 1)
        at_upper = sol.basis.at_upper | {j}
    return child, Basis(sol.basis.basic, frozenset(at_upper))


def tableau_row_for(model: LpModel, basis: Basis, j: int):
    """Raw tableau row of basic variable x_j at the given basis.

    Returns (alpha over all columns, at_upper mask over all columns,
    current value of x_j, number of structural columns).  Used by the
    straddle construction and by tests.
    """
    ws = _Workspace(model)
    if not ws.load_basis(basis):
        raise LpProbeError("basis does not fit the model")
    if j not in ws.basic:
        raise LpProbeError(f"x_{j} is not basic")
    pos = ws.basic.index(j)
    mask = ws.at_upper & ~ws.in_basis
    return ws.tableau_row(pos), mask, float(ws.beta[pos]), ws.n
