"""Dense simplex and best-first branch-and-bound for small mixed-integer programs.

Problems are maximized. The LP engine works on a bounded-variable tableau: every
column carries a finite lower bound and a possibly infinite upper bound, nonbasic
columns sit at one of them. Inequalities get slack columns. A cold solve runs the
two-phase primal simplex (Dantzig pricing, Bland's rule after a run of degenerate
pivots); branch-and-bound children restart from the parent basis with the dual
simplex.
"""
import heapq
import itertools
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from stackmarket.core.config import settings
from stackmarket.models.milp import MilpProblem, MilpSolution, MilpStatus, Relation

logger = logging.getLogger(__name__)

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
FIXED_TOL = 1e-12
FEASIBILITY_TOL = 1e-7
INTEGRALITY_TOL = 1e-6
PRUNE_TOL = 1e-9
BLAND_AFTER = 50
REFACTOR_EVERY = 100


class _Form:
    """Equality form  a z = b  with column costs and the slack column of every row"""

    def __init__(self, a, b, c, slack_col, slack_sign, columns):
        self.a = a
        self.b = b
        self.c = c
        self.slack_col = slack_col
        self.slack_sign = slack_sign
        # columns[k] lists (column, sign) pairs composing original variable k
        self.columns = columns

    @property
    def shape(self) -> Tuple[int, int]:
        return self.a.shape

    def without_rows(self, rows: Sequence[int]) -> "_Form":
        keep = np.setdiff1d(np.arange(self.a.shape[0]), np.asarray(rows, dtype=int))
        return _Form(self.a[keep], self.b[keep], self.c, self.slack_col[keep], self.slack_sign[keep], self.columns)

    def to_original(self, z: np.ndarray) -> np.ndarray:
        return np.array([sum(sign * z[col] for col, sign in parts) for parts in self.columns])


def _standardize(problem: MilpProblem) -> Tuple[_Form, np.ndarray, np.ndarray]:
    a_cols: List[np.ndarray] = []
    costs: List[float] = []
    lo: List[float] = []
    hi: List[float] = []
    columns: List[List[Tuple[int, float]]] = []
    m = problem.n_rows

    def add(col: np.ndarray, cost: float, lower: float, upper: float) -> int:
        a_cols.append(col)
        costs.append(cost)
        lo.append(lower)
        hi.append(upper)
        return len(a_cols) - 1

    for k in range(problem.n_vars):
        col = problem.a_matrix[:, k]
        c = problem.objective[k]
        lower, upper = problem.lower[k], problem.upper[k]
        if np.isfinite(lower):
            columns.append([(add(col, c, lower, upper), 1.0)])
        elif np.isfinite(upper):
            columns.append([(add(-col, -c, -upper, np.inf), -1.0)])
        else:
            plus = add(col, c, 0.0, np.inf)
            minus = add(-col, -c, 0.0, np.inf)
            columns.append([(plus, 1.0), (minus, -1.0)])

    slack_col = np.full(m, -1, dtype=int)
    slack_sign = np.zeros(m)
    for i, relation in enumerate(problem.relations):
        if relation is Relation.EQ:
            continue
        sign = 1.0 if relation is Relation.LE else -1.0
        unit = np.zeros(m)
        unit[i] = sign
        slack_col[i] = add(unit, 0.0, 0.0, np.inf)
        slack_sign[i] = sign

    a = np.column_stack(a_cols) if a_cols else np.zeros((m, 0))
    form = _Form(a.reshape(m, len(a_cols)), problem.rhs.copy(), np.array(costs), slack_col, slack_sign, columns)
    return form, np.array(lo), np.array(hi)


class _Tableau:
    """Bounded-variable simplex tableau t = B^-1 A with basic values and reduced costs"""

    def __init__(self, a, b, cost, lo, hi, basis, at_upper):
        self.a = a
        self.b = b
        self.cost = cost
        self.lo = lo
        self.hi = hi
        self.basis = np.asarray(basis, dtype=int)
        self.at_upper = np.asarray(at_upper, dtype=bool)
        self.is_basic = np.zeros(a.shape[1], dtype=bool)
        self.is_basic[self.basis] = True
        self.t = np.zeros(a.shape)
        self.xb = np.zeros(a.shape[0])
        self.d = np.zeros(a.shape[1])
        self.pivots = 0
        self._since_refactor = 0

    def copy(self) -> "_Tableau":
        other = _Tableau(self.a, self.b, self.cost, self.lo.copy(), self.hi.copy(), self.basis.copy(), self.at_upper.copy())
        other.t = self.t.copy()
        other.xb = self.xb.copy()
        other.d = self.d.copy()
        return other

    def nonbasic_values(self) -> np.ndarray:
        z = np.where(self.at_upper, self.hi, self.lo)
        z[self.basis] = 0.0
        return z

    def values(self) -> np.ndarray:
        z = np.where(self.at_upper, self.hi, self.lo)
        z[self.basis] = self.xb
        return z

    def refactor(self) -> None:
        m = self.a.shape[0]
        if m:
            basis_matrix = self.a[:, self.basis]
            self.t = np.linalg.solve(basis_matrix, self.a)
            self.xb = np.linalg.solve(basis_matrix, self.b - self.a @ self.nonbasic_values())
        self.d = self.cost - self.cost[self.basis] @ self.t
        self._since_refactor = 0

    def change_bounds(self, col: int, lower: float, upper: float) -> None:
        """Move one column's bounds, keeping basic values consistent"""
        if not self.is_basic[col]:
            old = self.hi[col] if self.at_upper[col] else self.lo[col]
            self.lo[col], self.hi[col] = lower, upper
            if self.at_upper[col] and not np.isfinite(upper):
                self.at_upper[col] = False
            new = self.hi[col] if self.at_upper[col] else self.lo[col]
            self.xb -= self.t[:, col] * (new - old)
        else:
            self.lo[col], self.hi[col] = lower, upper

    def _pivot(self, r: int, j: int) -> None:
        t = self.t
        t[r] /= t[r, j]
        column = t[:, j].copy()
        column[r] = 0.0
        t -= column[:, None] * t[r]
        t[:, j] = 0.0
        t[r, j] = 1.0
        self.d -= self.d[j] * t[r]
        self.d[j] = 0.0
        self.is_basic[self.basis[r]] = False
        self.is_basic[j] = True
        self.basis[r] = j
        self.pivots += 1
        self._since_refactor += 1

    def _movable(self) -> np.ndarray:
        return ~self.is_basic & (self.hi - self.lo > FIXED_TOL)

    def _ratio_test(self, alpha: np.ndarray, bland: bool) -> Tuple[float, int, bool]:
        if alpha.size == 0:
            return np.inf, -1, False
        lo_b = self.lo[self.basis]
        hi_b = self.hi[self.basis]
        ratios = np.full(alpha.shape, np.inf)
        down = alpha > PIVOT_TOL
        up = (alpha < -PIVOT_TOL) & np.isfinite(hi_b)
        ratios[down] = (self.xb[down] - lo_b[down]) / alpha[down]
        ratios[up] = (hi_b[up] - self.xb[up]) / (-alpha[up])
        ratios = np.maximum(ratios, 0.0)
        step = ratios.min()
        if not np.isfinite(step):
            return np.inf, -1, False
        ties = np.flatnonzero(ratios <= step + 1e-12)
        if bland:
            row = ties[np.argmin(self.basis[ties])]
        else:
            row = ties[np.argmax(np.abs(alpha[ties]))]
        return float(step), int(row), bool(alpha[row] < 0)

    def primal(self, limit: int) -> MilpStatus:
        degenerate = 0
        for _ in range(limit):
            movable = self._movable()
            improving = movable & (
                (~self.at_upper & (self.d > DUAL_TOL)) | (self.at_upper & (self.d < -DUAL_TOL))
            )
            candidates = np.flatnonzero(improving)
            if candidates.size == 0:
                return MilpStatus.OPTIMAL
            bland = degenerate >= BLAND_AFTER
            if bland:
                j = int(candidates[0])
            else:
                j = int(candidates[np.argmax(np.abs(self.d[candidates]))])
            direction = -1.0 if self.at_upper[j] else 1.0
            alpha = direction * self.t[:, j]
            step, row, to_upper = self._ratio_test(alpha, bland)
            span = self.hi[j] - self.lo[j]
            if np.isfinite(span) and span <= step:
                self.xb -= span * alpha
                self.at_upper[j] = not self.at_upper[j]
                degenerate = 0
                continue
            if row < 0:
                return MilpStatus.UNBOUNDED
            start = self.hi[j] if self.at_upper[j] else self.lo[j]
            self.xb -= step * alpha
            leaving = self.basis[row]
            self._pivot(row, j)
            self.xb[row] = start + direction * step
            self.at_upper[leaving] = to_upper
            self.at_upper[j] = False
            degenerate = degenerate + 1 if step <= 1e-12 else 0
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()
        return MilpStatus.ITER_LIMIT

    def dual(self, limit: int) -> MilpStatus:
        for _ in range(limit):
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            below = lo_b - self.xb
            above = self.xb - hi_b
            infeasibility = np.maximum(below, above)
            if infeasibility.size == 0:
                return MilpStatus.OPTIMAL
            r = int(np.argmax(infeasibility))
            if infeasibility[r] <= PRIMAL_TOL:
                return MilpStatus.OPTIMAL
            increase = below[r] > above[r]
            target = lo_b[r] if increase else hi_b[r]
            row = self.t[r]
            movable = self._movable()
            at_lo = movable & ~self.at_upper
            at_hi = movable & self.at_upper
            if increase:
                eligible = (at_lo & (row < -PIVOT_TOL)) | (at_hi & (row > PIVOT_TOL))
            else:
                eligible = (at_lo & (row > PIVOT_TOL)) | (at_hi & (row < -PIVOT_TOL))
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                return MilpStatus.INFEASIBLE
            ratios = np.abs(self.d[candidates]) / np.abs(row[candidates])
            ties = candidates[ratios <= ratios.min() + 1e-12]
            j = int(ties[np.argmax(np.abs(row[ties]))])
            delta = (self.xb[r] - target) / row[j]
            start = self.hi[j] if self.at_upper[j] else self.lo[j]
            self.xb -= self.t[:, j] * delta
            leaving = self.basis[r]
            self._pivot(r, j)
            self.xb[r] = start + delta
            self.at_upper[leaving] = not increase
            self.at_upper[j] = False
            if self._since_refactor >= REFACTOR_EVERY:
                self.refactor()
        return MilpStatus.ITER_LIMIT


def _two_phase(form: _Form, lo: np.ndarray, hi: np.ndarray, limit: int) -> Tuple[MilpStatus, Optional[_Tableau], _Form]:
    """Cold solve. Returns the status, the final tableau and the form it lives on"""
    m, n = form.shape
    start = lo.copy()
    residual = form.b - form.a @ start
    basis = np.empty(m, dtype=int)
    art_rows: List[int] = []
    art_signs: List[float] = []
    for i in range(m):
        k = form.slack_col[i]
        if k >= 0 and residual[i] * form.slack_sign[i] >= 0:
            basis[i] = k
        else:
            art_rows.append(i)
            art_signs.append(1.0 if residual[i] >= 0 else -1.0)

    n_art = len(art_rows)
    if n_art:
        artificial = np.zeros((m, n_art))
        for idx, (i, sign) in enumerate(zip(art_rows, art_signs)):
            artificial[i, idx] = sign
            basis[i] = n + idx
        a_ext = np.hstack([form.a, artificial])
        lo_ext = np.concatenate([lo, np.zeros(n_art)])
        hi_ext = np.concatenate([hi, np.full(n_art, np.inf)])
        cost = np.concatenate([np.zeros(n), -np.ones(n_art)])
        tab = _Tableau(a_ext, form.b, cost, lo_ext, hi_ext, basis, np.zeros(n + n_art, dtype=bool))
        tab.refactor()
        status = tab.primal(limit)
        if status is not MilpStatus.OPTIMAL:
            return MilpStatus.ITER_LIMIT if status is MilpStatus.ITER_LIMIT else MilpStatus.INFEASIBLE, None, form
        leftover = float(tab.values()[n:].sum())
        if leftover > FEASIBILITY_TOL * max(1.0, float(np.max(np.abs(form.b), initial=0.0))):
            return MilpStatus.INFEASIBLE, None, form

        redundant = []
        for r in range(m):
            if tab.basis[r] < n:
                continue
            row = tab.t[r, :n]
            candidates = np.flatnonzero(~tab.is_basic[:n] & (np.abs(row) > 1e-7))
            if candidates.size == 0:
                redundant.append(r)
                continue
            j = int(candidates[np.argmax(np.abs(row[candidates]))])
            delta = tab.xb[r] / row[j]
            value = tab.hi[j] if tab.at_upper[j] else tab.lo[j]
            tab.xb -= tab.t[:, j] * delta
            tab._pivot(r, j)
            tab.xb[r] = value + delta
            tab.at_upper[j] = False

        keep = np.setdiff1d(np.arange(m), redundant)
        if redundant:
            logger.debug(f"Dropping {len(redundant)} redundant rows")
            form = form.without_rows(redundant)
        tab = _Tableau(form.a, form.b, form.c, lo.copy(), hi.copy(), tab.basis[keep], tab.at_upper[:n])
    else:
        tab = _Tableau(form.a, form.b, form.c, lo.copy(), hi.copy(), basis, np.zeros(n, dtype=bool))

    tab.refactor()
    status = tab.primal(limit)
    return status, tab, form


def _polish(tab: _Tableau, limit: int) -> MilpStatus:
    """Refactor to shed accumulated round-off, then re-optimize"""
    tab.refactor()
    status = tab.dual(limit)
    if status is MilpStatus.OPTIMAL:
        status = tab.primal(limit)
    return status


Change = Tuple[int, float, float]


def _warm_solve(
    form: _Form, parent: _Tableau, changes: Sequence[Change], limit: int
) -> Tuple[MilpStatus, Optional[_Tableau], _Form]:
    """Re-optimize a copy of the parent with tightened column bounds, cold if the basis breaks down"""
    child = parent.copy()
    for col, lower, upper in changes:
        lower, upper = max(child.lo[col], lower), min(child.hi[col], upper)
        if lower > upper + FIXED_TOL:
            return MilpStatus.INFEASIBLE, None, form
        child.change_bounds(col, lower, max(lower, upper))
    try:
        status = child.dual(limit)
        if status is MilpStatus.OPTIMAL:
            status = child.primal(limit)
        if status in (MilpStatus.OPTIMAL, MilpStatus.INFEASIBLE):
            return status, child, form
    except np.linalg.LinAlgError as e:
        logger.debug(f"Warm start failed ({e}), solving from scratch")
    return _two_phase(form, child.lo.copy(), child.hi.copy(), limit)


def _solution_point(problem: MilpProblem, form: _Form, tab: _Tableau) -> Tuple[np.ndarray, float]:
    x = form.to_original(tab.values())
    return x, float(problem.objective @ x)


def _checked(problem: MilpProblem, x: np.ndarray, integral: bool = True) -> bool:
    """True when x satisfies every row and bound, and the integrality flags unless told not to"""
    violation = problem.max_violation(x)
    values = x[problem.integrality] if integral else x[:0]
    off_integer = float(np.max(np.abs(values - np.round(values)), initial=0.0))
    if violation > FEASIBILITY_TOL or off_integer > INTEGRALITY_TOL:
        logger.warning(f"Solution violates constraints by {violation:.3e}, integrality by {off_integer:.3e}")
        return False
    return True


def solve_lp(problem: MilpProblem, iteration_limit: Optional[int] = None) -> MilpSolution:
    """
    Solve the LP relaxation of a problem

    Args:
        problem: Problem whose integrality flags are ignored
        iteration_limit: Pivot budget per phase, defaults to settings.LP_ITERATION_LIMIT

    Returns:
        MilpSolution with status Optimal, Infeasible, Unbounded, IterLimit, or
        Numerical when the optimum cannot be brought within the feasibility tolerance
    """
    limit = iteration_limit or settings.LP_ITERATION_LIMIT
    form, lo, hi = _standardize(problem)
    status, tab, form = _two_phase(form, lo, hi, limit)
    if status is not MilpStatus.OPTIMAL:
        logger.debug(f"LP finished with status {status.value}")
        return MilpSolution(status=status, node_count=1)
    x, objective = _solution_point(problem, form, tab)
    if problem.max_violation(x) > FEASIBILITY_TOL:
        status = _polish(tab, limit)
        if status is not MilpStatus.OPTIMAL:
            return MilpSolution(status=status, node_count=1)
        x, objective = _solution_point(problem, form, tab)
    if not _checked(problem, x, integral=False):
        return MilpSolution(status=MilpStatus.NUMERICAL, node_count=1)
    return MilpSolution(status=MilpStatus.OPTIMAL, values=x, objective=objective, bound=objective, node_count=1)


def _branch_variable(x: np.ndarray, integral: np.ndarray) -> Optional[int]:
    """Integral variable whose fractional part is closest to 0.5, lowest index on ties"""
    if integral.size == 0:
        return None
    values = x[integral]
    frac = values - np.floor(values)
    fractional = np.minimum(frac, 1.0 - frac) > INTEGRALITY_TOL
    if not fractional.any():
        return None
    distance = np.where(fractional, np.abs(frac - 0.5), np.inf)
    return int(integral[int(np.argmin(distance))])


def _sos_branch(x: np.ndarray, groups: Sequence[Sequence[int]]) -> Optional[List[List[Tuple[int, float, float]]]]:
    """
    Split the first group holding two or more nonzero members at its weighted centre

    Returns one list of variable fixings per child, or None when every group holds.
    """
    for group in groups:
        values = x[list(group)]
        nonzero = values > INTEGRALITY_TOL
        if np.count_nonzero(nonzero) < 2:
            continue
        weights = np.where(nonzero, values, 0.0)
        centre = float(np.arange(len(group)) @ weights / weights.sum())
        cut = int(np.floor(centre)) + 1
        left, right = list(group[:cut]), list(group[cut:])
        return [[(k, 0.0, 0.0) for k in right], [(k, 0.0, 0.0) for k in left]]
    return None


def _variable_branch(x: np.ndarray, k: int, lower: float, upper: float) -> List[List[Tuple[int, float, float]]]:
    value = x[k]
    return [[(k, lower, float(np.floor(value)))], [(k, float(np.ceil(value)), upper)]]


class _Node:
    __slots__ = ("bound", "form", "lo", "hi", "basis", "at_upper", "x")

    def __init__(self, bound: float, form, tab: _Tableau, x: np.ndarray):
        self.bound = bound
        self.form = form
        self.lo = tab.lo.copy()
        self.hi = tab.hi.copy()
        self.basis = tab.basis.copy()
        self.at_upper = tab.at_upper.copy()
        self.x = x

    def tableau(self) -> _Tableau:
        tab = _Tableau(self.form.a, self.form.b, self.form.c, self.lo.copy(), self.hi.copy(), self.basis, self.at_upper)
        tab.refactor()
        return tab


class _Open:
    """A solved node still waiting to be branched, with its tableau in hand"""

    __slots__ = ("bound", "form", "tab", "x")

    def __init__(self, bound: float, form: _Form, tab: _Tableau, x: np.ndarray):
        self.bound = bound
        self.form = form
        self.tab = tab
        self.x = x


class _BranchAndBound:
    """
    Best-first search with plunging

    The better child of a branched node is processed next on its own tableau while it
    stays the best open node; everything else waits on a heap keyed by LP bound and
    refactors its basis when popped.
    """

    def __init__(self, problem: MilpProblem, gap: float, limit: int, node_limit: int):
        self.problem = problem
        self.gap = max(gap, PRUNE_TOL)
        self.limit = limit
        self.node_limit = node_limit
        self.integral = np.flatnonzero(problem.integrality)
        self.incumbent: Optional[np.ndarray] = None
        self.best = -np.inf
        self.dropped = -np.inf
        self.history: List[float] = []
        self.heap: List[Tuple[float, int, _Node]] = []
        self.counter = itertools.count()
        self.nodes = 1

    @property
    def cutoff(self) -> float:
        return self.best + self.gap

    def open_bound(self, *pending: _Open) -> float:
        bounds = [self.best, self.dropped] + [o.bound for o in pending] + [-entry[0] for entry in self.heap[:1]]
        return float(max(bounds))

    def drop(self, bound: float) -> None:
        if bound > self.best + PRUNE_TOL:
            self.dropped = max(self.dropped, bound)

    def evaluate(self, form: _Form, tab: _Tableau) -> Optional[_Open]:
        x, objective = _solution_point(self.problem, form, tab)
        if _sos_branch(x, self.problem.sos1) is None and _branch_variable(x, self.integral) is None:
            if objective > self.best:
                self.incumbent, self.best = x, objective
                self.history.append(objective)
                logger.debug(f"New incumbent {objective:.9g} after {self.nodes} nodes")
            return None
        if objective <= self.cutoff:
            self.drop(objective)
            return None
        return _Open(objective, form, tab, x)

    def children(self, node: _Open) -> List[List[Change]]:
        columns = node.form.columns
        branches = _sos_branch(node.x, self.problem.sos1)
        if branches is None:
            k = _branch_variable(node.x, self.integral)
            col = columns[k][0][0]
            branches = _variable_branch(node.x, k, node.tab.lo[col], node.tab.hi[col])
        return [[(columns[k][0][0], lower, upper) for k, lower, upper in fixings] for fixings in branches]

    def fix_by_reduced_cost(self, node: _Open) -> None:
        """Fix nonbasic integral columns whose move to the other bound cannot beat the incumbent"""
        if self.incumbent is None:
            return
        tab = node.tab
        cols = np.array([node.form.columns[k][0][0] for k in self.integral], dtype=int)
        span = tab.hi[cols] - tab.lo[cols]
        loss = np.where(tab.at_upper[cols], tab.d[cols], -tab.d[cols]) * span
        fix = ~tab.is_basic[cols] & (span > FIXED_TOL) & (loss > node.bound - self.best - PRUNE_TOL)
        for col in cols[fix]:
            if tab.at_upper[col]:
                tab.lo[col] = tab.hi[col]
            else:
                tab.hi[col] = tab.lo[col]

    def push(self, node: _Open) -> None:
        heapq.heappush(self.heap, (-node.bound, next(self.counter), _Node(node.bound, node.form, node.tab, node.x)))

    def pop(self) -> Optional[_Open]:
        while self.heap:
            _, _, node = heapq.heappop(self.heap)
            if node.bound <= self.cutoff:
                self.drop(node.bound)
                continue
            try:
                tab = node.tableau()
            except np.linalg.LinAlgError:
                status, tab, _ = _two_phase(node.form, node.lo.copy(), node.hi.copy(), self.limit)
                if status is not MilpStatus.OPTIMAL:
                    continue
            return _Open(node.bound, node.form, tab, node.x)
        return None

    def run(self, form: _Form, root: _Tableau) -> MilpSolution:
        current = self.evaluate(form, root)
        while True:
            if current is None:
                current = self.pop()
                if current is None:
                    break
            if current.bound <= self.cutoff:
                self.drop(current.bound)
                current = None
                continue
            self.fix_by_reduced_cost(current)
            solved: List[_Open] = []
            for changes in self.children(current):
                status, tab, child_form = _warm_solve(current.form, current.tab, changes, self.limit)
                self.nodes += 1
                if status is MilpStatus.OPTIMAL:
                    child = self.evaluate(child_form, tab)
                    if child is not None:
                        solved.append(child)
                elif status is MilpStatus.UNBOUNDED:
                    return MilpSolution(status=status, node_count=self.nodes)
                elif status is MilpStatus.ITER_LIMIT:
                    logger.warning(f"LP pivot budget exhausted at node {self.nodes}")
                    return self.finish(MilpStatus.ITER_LIMIT, self.open_bound(*solved))
                if self.nodes >= self.node_limit:
                    logger.warning(f"Node budget of {self.node_limit} exhausted")
                    return self.finish(MilpStatus.ITER_LIMIT, self.open_bound(current, *solved))
            solved.sort(key=lambda o: -o.bound)
            for other in solved[1:]:
                self.push(other)
            current = solved[0] if solved else None
            if current is not None and self.heap and self.incumbent is not None and current.bound < -self.heap[0][0]:
                self.push(current)
                current = None

        if self.incumbent is None:
            return MilpSolution(status=MilpStatus.INFEASIBLE, node_count=self.nodes)
        return self.finish(MilpStatus.OPTIMAL, self.open_bound())

    def finish(self, status: MilpStatus, bound: float) -> MilpSolution:
        if self.incumbent is None:
            return MilpSolution(status=status, bound=bound, node_count=self.nodes)
        incumbent, best = self.incumbent, self.best
        if not _checked(self.problem, incumbent):
            repaired = _resolve_with_integers_fixed(self.problem, incumbent, self.limit)
            if repaired.status is not MilpStatus.OPTIMAL:
                logger.error(f"Incumbent could not be repaired, LP status {repaired.status.value}")
                return MilpSolution(
                    status=MilpStatus.NUMERICAL, bound=bound, node_count=self.nodes, incumbent_history=self.history
                )
            incumbent, best = repaired.values, repaired.objective
        logger.debug(f"Branch-and-bound: status {status.value}, objective {best:.9g}, {self.nodes} nodes")
        return MilpSolution(
            status=status,
            values=incumbent,
            objective=best,
            bound=max(bound, best),
            node_count=self.nodes,
            incumbent_history=self.history,
        )


def _resolve_with_integers_fixed(problem: MilpProblem, x: np.ndarray, limit: int) -> MilpSolution:
    """Re-solve the continuous part with every integral variable pinned at its rounded value"""
    ints = problem.integrality
    pinned = np.clip(np.round(x[ints]), problem.lower[ints], problem.upper[ints])
    lower, upper = problem.lower.copy(), problem.upper.copy()
    lower[ints] = pinned
    upper[ints] = pinned
    fixed = MilpProblem.model_validate({**problem.model_dump(), "lower": lower, "upper": upper})
    return solve_lp(fixed, limit)


def solve_milp(
    problem: MilpProblem,
    node_limit: Optional[int] = None,
    iteration_limit: Optional[int] = None,
    gap: float = 0.0,
) -> MilpSolution:
    """
    Solve a mixed-integer program by best-first branch-and-bound

    Fractional sos1 groups are branched before single variables. A node is pruned when
    its bound does not beat the incumbent by more than max(gap, 1e-9); the returned
    bound is the largest bound that was pruned or left open.

    Args:
        problem: Problem to maximize
        node_limit: LP solves allowed, defaults to settings.MILP_NODE_LIMIT
        iteration_limit: Pivot budget per LP
        gap: Absolute optimality gap accepted

    Returns:
        MilpSolution; IterLimit carries the best incumbent found, if any, and Numerical
        means the incumbent failed the feasibility check even after re-solving
    """
    if not problem.integrality.any():
        return solve_lp(problem, iteration_limit)

    limit = iteration_limit or settings.LP_ITERATION_LIMIT
    form, lo, hi = _standardize(problem)
    status, root, form = _two_phase(form, lo, hi, limit)
    if status is not MilpStatus.OPTIMAL:
        return MilpSolution(status=status, node_count=1)
    search = _BranchAndBound(problem, gap, limit, node_limit or settings.MILP_NODE_LIMIT)
    return search.run(form, root)


class MilpBuilder:
    """Assembles a MilpProblem from named variables and sparse rows"""

    def __init__(self):
        self._names: List[str] = []
        self._index: Dict[str, int] = {}
        self._lower: List[float] = []
        self._upper: List[float] = []
        self._integral: List[bool] = []
        self._objective: List[float] = []
        self._rows: List[Tuple[Dict[int, float], Relation, float, str]] = []
        self._sos1: List[List[int]] = []

    @property
    def n_vars(self) -> int:
        return len(self._names)

    def add_variable(
        self, name: str, lower: float = 0.0, upper: float = np.inf, integral: bool = False, objective: float = 0.0
    ) -> int:
        if name in self._index:
            raise ValueError(f"duplicate variable {name}")
        self._index[name] = len(self._names)
        self._names.append(name)
        self._lower.append(lower)
        self._upper.append(upper)
        self._integral.append(integral)
        self._objective.append(objective)
        return self._index[name]

    def add_binary(self, name: str, objective: float = 0.0) -> int:
        return self.add_variable(name, 0.0, 1.0, integral=True, objective=objective)

    def index(self, name: str) -> int:
        return self._index[name]

    def add_row(self, terms: Iterable[Tuple[int, float]], relation: Union[Relation, str], rhs: float, name: str) -> None:
        coefficients: Dict[int, float] = {}
        for k, value in terms:
            coefficients[k] = coefficients.get(k, 0.0) + value
        self._rows.append((coefficients, Relation(relation), float(rhs), name))

    def add_sos1(self, members: Sequence[int]) -> None:
        """At most one of the given binaries may be nonzero; groups of one are ignored"""
        if len(members) > 1:
            self._sos1.append([int(k) for k in members])

    def build(self) -> MilpProblem:
        n = len(self._names)
        a = np.zeros((len(self._rows), n))
        for i, (coefficients, _, _, _) in enumerate(self._rows):
            for k, value in coefficients.items():
                a[i, k] = value
        return MilpProblem(
            objective=np.array(self._objective, dtype=float),
            a_matrix=a,
            relations=[row[1] for row in self._rows],
            rhs=np.array([row[2] for row in self._rows], dtype=float),
            lower=np.array(self._lower, dtype=float),
            upper=np.array(self._upper, dtype=float),
            integrality=np.array(self._integral, dtype=bool),
            var_names=list(self._names),
            row_names=[row[3] for row in self._rows],
            sos1=[list(group) for group in self._sos1],
        )


def _lp_name(name: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "_." else "_" for ch in name)


def _lp_terms(coefficients: np.ndarray, names: List[str]) -> str:
    parts = []
    for k in np.flatnonzero(coefficients):
        value = coefficients[k]
        sign = "-" if value < 0 else "+"
        parts.append(f"{sign} {abs(value):.17g} {names[k]}")
        if len(parts) % 8 == 0:
            parts.append("\n  ")
    return " ".join(parts) if parts else "0 " + names[0]


def write_lp_file(problem: MilpProblem, path: Union[str, Path]) -> Path:
    """Write the problem in CPLEX LP text format for cross-checking with external solvers"""
    names = [_lp_name(n) for n in problem.var_names] or [f"x{k}" for k in range(problem.n_vars)]
    rows = [_lp_name(n) for n in problem.row_names] or [f"r{i}" for i in range(problem.n_rows)]
    lines = ["\\ stackmarket MILP", "Maximize", f" obj: {_lp_terms(problem.objective, names)}", "Subject To"]
    for i, relation in enumerate(problem.relations):
        symbol = "=" if relation is Relation.EQ else relation.value
        lines.append(f" {rows[i]}: {_lp_terms(problem.a_matrix[i], names)} {symbol} {problem.rhs[i]:.17g}")
    lines.append("Bounds")
    binaries, generals = [], []
    for k, name in enumerate(names):
        lower, upper = problem.lower[k], problem.upper[k]
        if problem.integrality[k]:
            (binaries if lower == 0 and upper == 1 else generals).append(name)
        if not np.isfinite(lower) and not np.isfinite(upper):
            lines.append(f" {name} free")
        elif not np.isfinite(upper):
            lines.append(f" {name} >= {lower:.17g}")
        else:
            low = f"{lower:.17g}" if np.isfinite(lower) else "-inf"
            lines.append(f" {low} <= {name} <= {upper:.17g}")
    if binaries:
        lines += ["Binaries", " " + " ".join(binaries)]
    if generals:
        lines += ["Generals", " " + " ".join(generals)]
    if problem.sos1:
        lines.append("SOS")
        for g, group in enumerate(problem.sos1):
            members = " ".join(f"{names[k]}:{rank + 1}" for rank, k in enumerate(group))
            lines.append(f" sos{g}: S1:: {members}")
    lines.append("End")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"LP file written to {path}")
    return path
