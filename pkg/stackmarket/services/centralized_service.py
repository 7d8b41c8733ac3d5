"""Centralized association and pricing through piecewise McCormick relaxations.

The joint problem maximizes sum_ij w_j p_j s_ij with s_ij = (s_max_i - p_j/(2 alpha_i)) x_ij.
Each round linearizes it over the current price partitions, solves the resulting
MILP, evaluates the true objective at the relaxed prices and narrows the partition
each MSP's price landed in.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from stackmarket.core.exceptions import Infeasible, InvalidRange, RoundLimit
from stackmarket.models.central import (
    CentralSolution,
    PartitionSet,
    RoundRecord,
    Termination,
    TighteningConfig,
)
from stackmarket.models.equilibrium import DynamicsConfig
from stackmarket.models.milp import MilpProblem, MilpSolution, MilpStatus, Relation
from stackmarket.models.scenario import MspProfile, Scenario, UserProfile
from stackmarket.services.distributed_service import best_response_dynamics
from stackmarket.services.milp_service import MilpBuilder, solve_milp
from stackmarket.services.scenario_service import with_uniform_capacity

logger = logging.getLogger(__name__)

COUPLING_TOL = 1e-6
REPAIR_TOL = 1e-7
MILP_GAP_SHARE = 0.1
MILP_GAP_CAP = 1e-2


def compute_weights(msps: List[MspProfile]) -> np.ndarray:
    """Quality shares q^j / sum_k q^k"""
    q = np.array([m.quality for m in msps])
    return q / q.sum()


def true_objective(prices: Sequence[float], sales: Sequence[Sequence[float]], weights: Sequence[float]) -> float:
    """Weighted revenue sum_i sum_j w_j p_j s_ij"""
    s = np.asarray(sales, dtype=float)
    return float(np.sum(np.asarray(weights) * np.asarray(prices) * s))


def _price_ceiling(user: UserProfile) -> float:
    """Highest price at which the user still buys s_min"""
    return 2.0 * user.alpha * (user.s_max - user.s_min)


def _demand(user: UserProfile, price: float) -> float:
    return user.s_max - price / (2.0 * user.alpha)


def _served_bounds(user: UserProfile, lo: float, hi: float) -> Optional[Tuple[float, float]]:
    """Sales range of a served user while the price stays in [lo, hi], None if s_min is out of reach"""
    top = _price_ceiling(user)
    if lo > top:
        return None
    return _demand(user, min(hi, top)), _demand(user, lo)


def _face_points(points: Sequence[float], user: UserProfile) -> List[float]:
    """Interval endpoints where the served part of each price interval starts or stops"""
    top = min(_price_ceiling(user), points[-1])
    return [t for t in points if t < top] + [top]


def build_milp(scenario: Scenario, partitions: PartitionSet) -> MilpProblem:
    """
    Linearize the joint association and pricing problem over the given partitions

    p*x is replaced by its exact envelope over the activated interval, written through
    xy = x*y so that fixing y carries the interval bounds into every user's row. y*s is
    carried by ys, bounded by the responses at the interval ends. p*s is capped by the
    upper envelope faces of every interval; with s affine in p each face touches the
    revenue curve at an interval end, so all of them hold whichever interval is active.

    Raises:
        InvalidPartition: If the partitions do not match the scenario's MSPs
    """
    partitions.check(scenario.msps)
    weights = compute_weights(scenario.msps)
    users, msps = scenario.users, scenario.msps
    I, J = len(users), len(msps)
    b = MilpBuilder()

    p = [b.add_variable(f"p[{j}]", 0.0, msps[j].p_max) for j in range(J)]
    s = [[b.add_variable(f"s[{i},{j}]", 0.0, users[i].s_max) for j in range(J)] for i in range(I)]
    x = [[b.add_binary(f"x[{i},{j}]") for j in range(J)] for i in range(I)]
    y = [[b.add_binary(f"y[{j},{k}]") for k in range(partitions.size(j))] for j in range(J)]
    px = [[b.add_variable(f"px[{i},{j}]", 0.0, msps[j].p_max) for j in range(J)] for i in range(I)]
    ps = [[b.add_variable(f"ps[{i},{j}]", 0.0, np.inf, objective=weights[j]) for j in range(J)] for i in range(I)]
    sales_range = [
        [[_served_bounds(users[i], lo, hi) for lo, hi in partitions.intervals(j)] for j in range(J)] for i in range(I)
    ]
    xy = [
        [
            [
                b.add_variable(f"xy[{i},{j},{k}]", 0.0, 0.0 if bounds is None else 1.0)
                for k, bounds in enumerate(sales_range[i][j])
            ]
            for j in range(J)
        ]
        for i in range(I)
    ]
    ys = [
        [[b.add_variable(f"ys[{i},{j},{k}]", 0.0, users[i].s_max) for k in range(partitions.size(j))] for j in range(J)]
        for i in range(I)
    ]

    for j, msp in enumerate(msps):
        intervals = partitions.intervals(j)
        if msp.capacity is not None:
            b.add_row([(s[i][j], 1.0) for i in range(I)], Relation.LE, msp.capacity, f"capacity[{j}]")
        b.add_row([(y[j][k], 1.0) for k in range(len(intervals))], Relation.EQ, 1.0, f"select[{j}]")
        b.add_row(
            [(p[j], 1.0)] + [(y[j][k], -lo) for k, (lo, _) in enumerate(intervals)],
            Relation.GE, 0.0, f"active_lo[{j}]",
        )
        b.add_row(
            [(p[j], 1.0)] + [(y[j][k], -hi) for k, (_, hi) in enumerate(intervals)],
            Relation.LE, 0.0, f"active_up[{j}]",
        )
        b.add_sos1(y[j])

    for i, user in enumerate(users):
        top = _price_ceiling(user)
        b.add_row([(x[i][j], 1.0) for j in range(J)], Relation.LE, 1.0, f"assign[{i}]")
        for j, msp in enumerate(msps):
            intervals = partitions.intervals(j)
            b.add_row([(s[i][j], 1.0), (x[i][j], -user.s_min)], Relation.GE, 0.0, f"smin[{i},{j}]")
            b.add_row([(s[i][j], 1.0), (x[i][j], -user.s_max)], Relation.LE, 0.0, f"smax[{i},{j}]")
            b.add_row(
                [(s[i][j], 1.0), (x[i][j], -user.s_max), (px[i][j], 1.0 / (2.0 * user.alpha))],
                Relation.EQ, 0.0, f"response[{i},{j}]",
            )
            # p*x over [L_a, U_a] x [0, 1]; U_a*(1 - x) = sum_k U_k*(y_k - xy_k)
            b.add_row(
                [(px[i][j], 1.0), (p[j], -1.0)]
                + [(y[j][k], hi) for k, (_, hi) in enumerate(intervals)]
                + [(xy[i][j][k], -hi) for k, (_, hi) in enumerate(intervals)],
                Relation.GE, 0.0, f"px_lo[{i},{j}]",
            )
            b.add_row(
                [(px[i][j], 1.0), (p[j], -1.0)]
                + [(y[j][k], lo) for k, (lo, _) in enumerate(intervals)]
                + [(xy[i][j][k], -lo) for k, (lo, _) in enumerate(intervals)],
                Relation.LE, 0.0, f"px_up[{i},{j}]",
            )
            b.add_row(
                [(px[i][j], 1.0)] + [(xy[i][j][k], -lo) for k, (lo, _) in enumerate(intervals)],
                Relation.GE, 0.0, f"px_in_lo[{i},{j}]",
            )
            b.add_row(
                [(px[i][j], 1.0)] + [(xy[i][j][k], -min(hi, top)) for k, (_, hi) in enumerate(intervals)],
                Relation.LE, 0.0, f"px_in_up[{i},{j}]",
            )
            b.add_row(
                [(xy[i][j][k], 1.0) for k in range(len(intervals))] + [(x[i][j], -1.0)],
                Relation.EQ, 0.0, f"xy_sum[{i},{j}]",
            )
            b.add_row(
                [(ys[i][j][k], 1.0) for k in range(len(intervals))] + [(s[i][j], -1.0)],
                Relation.EQ, 0.0, f"ys_sum[{i},{j}]",
            )
            for k, bounds in enumerate(sales_range[i][j]):
                low, high = bounds if bounds is not None else (0.0, 0.0)
                b.add_row([(xy[i][j][k], 1.0), (y[j][k], -1.0)], Relation.LE, 0.0, f"xy_up[{i},{j},{k}]")
                b.add_row([(ys[i][j][k], 1.0), (xy[i][j][k], -low)], Relation.GE, 0.0, f"ys_lo[{i},{j},{k}]")
                b.add_row([(ys[i][j][k], 1.0), (xy[i][j][k], -high)], Relation.LE, 0.0, f"ys_up[{i},{j},{k}]")
            # p*s <= (s_max - t/alpha)*px + t^2/(2 alpha)*x, the face of the interval ending at t
            for n, t in enumerate(_face_points(partitions.points[j], user)):
                b.add_row(
                    [(ps[i][j], 1.0), (px[i][j], -(user.s_max - t / user.alpha)), (x[i][j], -t * t / (2.0 * user.alpha))],
                    Relation.LE, 0.0, f"ps_up[{i},{j},{n}]",
                )

    problem = b.build()
    logger.debug(f"Built MILP with {problem.n_vars} variables and {problem.n_rows} rows")
    return problem


class _Decoded:
    """Values of one MILP optimum keyed the way the tightening loop needs them"""

    def __init__(self, problem: MilpProblem, solution: MilpSolution, scenario: Scenario, partitions: PartitionSet):
        index = {name: k for k, name in enumerate(problem.var_names)}
        v = solution.values
        I, J = scenario.n_users, scenario.n_msps
        self.prices = np.array([v[index[f"p[{j}]"]] for j in range(J)])
        self.sales = np.array([[v[index[f"s[{i},{j}]"]] for j in range(J)] for i in range(I)])
        self.association = np.array([[int(round(v[index[f"x[{i},{j}]"]])) for j in range(J)] for i in range(I)])
        self.activation = [
            int(np.argmax([v[index[f"y[{j},{k}]"]] for k in range(partitions.size(j))])) for j in range(J)
        ]
        self.intervals = [partitions.intervals(j)[self.activation[j]] for j in range(J)]
        self.relaxed_objective = solution.bound


def repair_sales(scenario: Scenario, prices: np.ndarray, association: np.ndarray) -> Optional[np.ndarray]:
    """
    Follower purchases forced by the association at the given prices

    Purchases are recomputed from the response coupling; a capacity overrun is scaled
    away. Returns None when the result is not a feasible point.
    """
    alpha = np.array([u.alpha for u in scenario.users])
    s_min = np.array([u.s_min for u in scenario.users])
    s_max = np.array([u.s_max for u in scenario.users])
    if np.any(association.sum(axis=1) > 1):
        return None
    response = s_max[:, None] - prices[None, :] / (2.0 * alpha[:, None])
    sales = np.where(association == 1, response, 0.0)
    for j, msp in enumerate(scenario.msps):
        total = sales[:, j].sum()
        if msp.capacity is not None and total > msp.capacity:
            sales[:, j] *= msp.capacity / total
    served = association == 1
    if np.any(sales[served] < np.broadcast_to(s_min[:, None], sales.shape)[served] - REPAIR_TOL):
        return None
    if np.any(np.abs(sales - np.where(served, response, 0.0)) > COUPLING_TOL):
        return None
    return np.maximum(sales, 0.0)


def price_for_association(scenario: Scenario, association: np.ndarray, prices: np.ndarray) -> Optional[np.ndarray]:
    """
    Revenue-maximizing price of every MSP for a fixed association

    With the served set fixed, MSP j earns p*(A - p*B) with A = sum s_max and
    B = sum 1/(2 alpha), on the prices that keep every served user at or above s_min
    and the total within capacity. MSPs serving nobody keep their price from `prices`.
    Returns None when some MSP has no such price.
    """
    priced = np.array(prices, dtype=float)
    for j, msp in enumerate(scenario.msps):
        served = [u for u, flag in zip(scenario.users, association[:, j]) if flag == 1]
        if not served:
            continue
        a = sum(u.s_max for u in served)
        b = sum(1.0 / (2.0 * u.alpha) for u in served)
        low = 0.0 if msp.capacity is None else max(0.0, (a - msp.capacity) / b)
        high = min([msp.p_max] + [_price_ceiling(u) for u in served])
        if low > high + REPAIR_TOL:
            return None
        priced[j] = min(max(a / (2.0 * b), low), high)
    return priced


class CentralizedService:
    """Runs the dynamic bound-tightening loop over the linearized MILP"""

    def __init__(self, config: Optional[TighteningConfig] = None, node_limit: Optional[int] = None):
        self.config = config or TighteningConfig()
        self.node_limit = node_limit

    def _refine(self, partitions: PartitionSet, decoded: _Decoded) -> Tuple[PartitionSet, bool]:
        refined = False
        for j, (lo, hi) in enumerate(decoded.intervals):
            z = (hi - lo) / self.config.beta
            if z <= self.config.epsilon:
                continue
            price = decoded.prices[j]
            updated = partitions.insert(j, [max(lo, price - z), min(hi, price + z)])
            if updated.size(j) > partitions.size(j):
                refined = True
            partitions = updated
        return partitions, refined

    def _milp_gap(self, lower: float, upper: float, ceiling: float, exact: bool) -> float:
        """Absolute MILP gap for one round, loose while the outer gap is wide"""
        floor = 0.5 * self.config.tolerance(min(upper, ceiling))
        if exact:
            return floor
        share = MILP_GAP_SHARE * (upper - lower) if np.isfinite(upper) else np.inf
        return max(floor, min(share, MILP_GAP_CAP * ceiling))

    def _candidates(self, scenario: Scenario, decoded: _Decoded) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Feasible points derived from a MILP incumbent: its own prices and the best prices for its association"""
        points = []
        sales = repair_sales(scenario, decoded.prices, decoded.association)
        if sales is not None:
            points.append((decoded.prices, sales))
        priced = price_for_association(scenario, decoded.association, decoded.prices)
        if priced is not None:
            sales = repair_sales(scenario, priced, decoded.association)
            if sales is not None:
                points.append((priced, sales))
        return points

    def bound_tightening(self, scenario: Scenario) -> CentralSolution:
        """
        Solve the centralized problem by iterated partition refinement

        Each MILP is solved to a gap that shrinks with the outer gap; the upper bound
        takes the MILP's proven bound and the partitions are refined around its incumbent.

        Args:
            scenario: Market instance

        Returns:
            CentralSolution holding the best feasible point and the final bounds

        Raises:
            Infeasible: If a linearized MILP has no feasible point
            RoundLimit: If max_rounds runs out first, the MILP node budget does, or the
                activated partitions reach the epsilon resolution with the gap still open
        """
        cfg = self.config
        weights = compute_weights(scenario.msps)
        ceiling = float(weights.max() * sum(u.alpha * u.s_max**2 for u in scenario.users))
        partitions = PartitionSet.initial(scenario.msps)
        lower, upper = -np.inf, np.inf
        best: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray, List[int]]] = None
        history: List[Tuple[float, float]] = []
        log: List[RoundRecord] = []
        exact = False

        def snapshot(rounds: int, termination: Termination, converged: bool) -> CentralSolution:
            prices, sales, association, activation = best
            return CentralSolution(
                prices=prices.tolist(),
                sales=sales.tolist(),
                association=association.tolist(),
                partition_activation=activation,
                objective_lb=float(lower),
                objective_ub=float(upper),
                rounds=rounds,
                lb_ub_history=list(history),
                round_log=list(log),
                weights=weights.tolist(),
                termination=termination,
                converged=converged,
            )

        for rnd in range(1, cfg.max_rounds + 1):
            problem = build_milp(scenario, partitions)
            milp_gap = self._milp_gap(lower, upper, ceiling, exact)
            solution = solve_milp(problem, node_limit=self.node_limit, gap=milp_gap)
            if solution.status is MilpStatus.INFEASIBLE:
                logger.error(f"Round {rnd}: linearized problem is infeasible")
                raise Infeasible(f"round {rnd}: no feasible association")
            if solution.status is not MilpStatus.OPTIMAL:
                logger.error(f"Round {rnd}: MILP stopped with status {solution.status.value}")
                raise RoundLimit(
                    f"round {rnd}: MILP stopped with status {solution.status.value}",
                    solution=snapshot(rnd - 1, Termination.ROUND_LIMIT, False) if best else None,
                    gap=upper - lower,
                )

            decoded = _Decoded(problem, solution, scenario, partitions)
            upper = min(upper, decoded.relaxed_objective)
            candidates = self._candidates(scenario, decoded)
            if not candidates:
                logger.warning(f"Round {rnd}: relaxed point could not be repaired, lower bound kept")
            for prices, sales in candidates:
                value = true_objective(prices, sales, weights)
                if best is None or value > lower:
                    lower = value
                    best = (prices, sales, decoded.association, decoded.activation)
            if best is None:
                # serving nobody is always feasible
                zeros = np.zeros_like(decoded.sales)
                best = (decoded.prices, zeros, zeros.astype(int), decoded.activation)
                lower = 0.0

            gap = upper - lower
            history.append((float(lower), float(upper)))
            log.append(
                RoundRecord(
                    round=rnd,
                    lb=float(lower),
                    ub=float(upper),
                    gap=float(gap),
                    relaxed_objective=float(decoded.relaxed_objective),
                    activated=[(float(lo), float(hi)) for lo, hi in decoded.intervals],
                    prices=decoded.prices.tolist(),
                    nodes=solution.node_count,
                )
            )
            logger.info(
                f"Round {rnd}: LB={lower:.6f} UB={upper:.6f} gap={gap:.3e} "
                f"milp_gap={milp_gap:.1e} nodes={solution.node_count}"
            )

            tol = cfg.tolerance(upper)
            if gap <= tol:
                return snapshot(rnd, Termination.GAP, True)
            partitions, refined = self._refine(partitions, decoded)
            if refined:
                exact = False
            elif milp_gap > 0.5 * tol:
                logger.info(f"Round {rnd}: partitions at resolution, solving the same MILP to the final gap")
                exact = True
            else:
                logger.error(f"Round {rnd}: activated partitions reached the epsilon resolution, gap {gap:.3e}")
                raise RoundLimit(
                    f"gap {gap:.3e} open at the epsilon resolution after {rnd} rounds",
                    solution=snapshot(rnd, Termination.RESOLUTION, False),
                    gap=gap,
                )

        logger.error(f"Bound tightening used all {cfg.max_rounds} rounds, gap {upper - lower:.3e}")
        raise RoundLimit(
            f"gap {upper - lower:.3e} after {cfg.max_rounds} rounds",
            solution=snapshot(cfg.max_rounds, Termination.ROUND_LIMIT, False),
            gap=upper - lower,
        )


def bound_tightening(scenario: Scenario, config: Optional[TighteningConfig] = None) -> CentralSolution:
    return CentralizedService(config).bound_tightening(scenario)


def map_points(fn: Callable, items: Iterable, jobs: int = 1) -> list:
    """Apply fn to every item, in a process pool when jobs > 1; result order follows items"""
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _capacity_point(args: Tuple[Scenario, Optional[float], TighteningConfig]) -> CentralSolution:
    scenario, capacity, config = args
    return CentralizedService(config).bound_tightening(with_uniform_capacity(scenario, capacity))


def revenue_vs_capacity_sweep(
    scenario: Scenario,
    capacities: Sequence[float],
    tightening: Optional[TighteningConfig] = None,
    dynamics: Optional[DynamicsConfig] = None,
    jobs: int = 1,
    on_point: Optional[Callable[[float, CentralSolution], None]] = None,
) -> pd.DataFrame:
    """
    Total revenue of both schemes for each uniform capacity

    The distributed scheme ignores capacity, so it is solved once. `on_point` is called
    with every capacity and its solution, in capacity order.

    Returns:
        DataFrame with columns capacity, centralized_total, centralized_objective,
        distributed_total, served_users, rounds, gap
    """
    capacities = [float(c) for c in capacities]
    if not capacities or any(b < a for a, b in zip(capacities, capacities[1:])):
        raise InvalidRange("capacities must be a non-empty ascending list")
    tightening = tightening or TighteningConfig()
    equilibrium = best_response_dynamics(scenario, dynamics)
    solutions = map_points(_capacity_point, [(scenario, c, tightening) for c in capacities], jobs)
    rows = []
    for capacity, solution in zip(capacities, solutions):
        if on_point is not None:
            on_point(capacity, solution)
        rows.append(
            {
                "capacity": capacity,
                "centralized_total": solution.total_revenue,
                "centralized_objective": solution.objective,
                "distributed_total": equilibrium.total_revenue,
                "served_users": int(sum(solution.served_users)),
                "rounds": solution.rounds,
                "gap": solution.gap,
            }
        )
    return pd.DataFrame(rows)
