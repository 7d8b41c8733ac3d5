"""Distributed Stackelberg pricing: follower responses, leader revenues and
parallel best-response dynamics.

Users pick MSP j with probability proportional to q^j/p^j and buy
s = max(s_max - p/(2 alpha), 0) from it. Leaders climb their own revenue by a
central-difference gradient step, all reading the previous iterate.
"""
import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from stackmarket.core.config import settings
from stackmarket.core.exceptions import ClampedRegime, NotConverged, OutOfRange, PriceBelowFloor
from stackmarket.models.equilibrium import (
    DynamicsConfig,
    EquilibriumReport,
    EquilibriumResult,
    MspAggregates,
    PriceVector,
)
from stackmarket.models.scenario import MspProfile, Scenario, UserProfile

logger = logging.getLogger(__name__)

Prices = Union[PriceVector, Sequence[float], np.ndarray]

DEVIATION_GRID = 100
DEVIATION_REFINEMENTS = 4


def _price_array(prices: Prices, price_floor: Optional[float] = None) -> np.ndarray:
    values = prices.prices if isinstance(prices, PriceVector) else prices
    p = np.asarray(values, dtype=float)
    floor = settings.PRICE_FLOOR if price_floor is None else price_floor
    if np.any(p < floor):
        raise PriceBelowFloor(f"prices {p.tolist()} fall below the floor {floor}")
    return p


def pairing_probabilities(prices: Prices, msps: List[MspProfile], price_floor: Optional[float] = None) -> np.ndarray:
    """Probability that any user pairs with each MSP, proportional to q/p"""
    p = _price_array(prices, price_floor)
    ratio = np.array([m.quality for m in msps]) / p
    return ratio / ratio.sum()


def user_satisfaction(user: UserProfile, s: float) -> float:
    if s < 0 or s > user.s_max:
        raise OutOfRange(f"bandwidth {s} outside [0, {user.s_max}]")
    return user.alpha * s * (2.0 * user.s_max - s)


def user_best_response(user: UserProfile, price: float) -> float:
    """Utility-maximizing purchase at the given price"""
    return max(user.s_max - price / (2.0 * user.alpha), 0.0)


def user_expected_utility(
    user: UserProfile, prices: Prices, sales: Sequence[float], probs: Sequence[float]
) -> float:
    p = np.asarray(prices.prices if isinstance(prices, PriceVector) else prices, dtype=float)
    total = 0.0
    for lam, price, s in zip(probs, p, sales):
        total += lam * (user_satisfaction(user, s) - price * s)
    return float(total)


def msp_aggregates(j: int, scenario: Scenario, price: Optional[float] = None) -> MspAggregates:
    """
    Quality-weighted demand sums of MSP j

    Args:
        j: MSP index
        scenario: Market instance
        price: When given, only users still buying at this price are counted

    Returns:
        MspAggregates
    """
    q = scenario.msps[j].quality
    users = scenario.users
    if price is not None:
        users = [u for u in users if price < 2.0 * u.alpha * u.s_max]
    return MspAggregates(
        X=q * sum(u.s_max for u in users),
        Y=q * sum(1.0 / (2.0 * u.alpha) for u in users),
        users=len(users),
    )


def _competitor_term(j: int, p: np.ndarray, scenario: Scenario) -> float:
    return float(sum(m.quality / p[k] for k, m in enumerate(scenario.msps) if k != j))


def msp_expected_revenue(j: int, prices: Prices, scenario: Scenario, price_floor: Optional[float] = None) -> float:
    """Expected revenue of MSP j; closed form while every follower buys, definitional form otherwise"""
    p = _price_array(prices, price_floor)
    q = scenario.msps[j].quality
    denom = q / p[j] + _competitor_term(j, p, scenario)
    sales = [user_best_response(u, p[j]) for u in scenario.users]
    if all(s > 0 for s in sales):
        agg = msp_aggregates(j, scenario)
        value = (agg.X - p[j] * agg.Y) / denom
    else:
        value = p[j] * (q / p[j]) / denom * sum(sales)
    return max(float(value), 0.0)


def revenue_price_derivative(j: int, prices: Prices, scenario: Scenario, price_floor: Optional[float] = None) -> float:
    """
    Analytic dR^j/dp^j while every follower buys from MSP j

    Raises:
        ClampedRegime: If some follower buys nothing at p^j
        PriceBelowFloor: On invalid prices
    """
    p = _price_array(prices, price_floor)
    if any(p[j] >= 2.0 * u.alpha * u.s_max for u in scenario.users):
        raise ClampedRegime(f"a follower of MSP {j} buys nothing at price {p[j]}")
    q = scenario.msps[j].quality
    agg = msp_aggregates(j, scenario)
    others = _competitor_term(j, p, scenario)
    pi = -agg.Y * others + q * agg.X / p[j] ** 2 - 2.0 * q * agg.Y / p[j]
    return float(pi / (q / p[j] + others) ** 2)


def _standard_value(q: float, agg: MspAggregates, others: float) -> float:
    two_qy = 2.0 * q * agg.Y
    return 2.0 * q * agg.X / (two_qy + np.sqrt(two_qy ** 2 + 4.0 * q * agg.X * agg.Y * others))


def standard_function(j: int, prices: Prices, scenario: Scenario, price_floor: Optional[float] = None) -> float:
    """Stationary price of MSP j's closed-form revenue, counting every user"""
    p = _price_array(prices, price_floor)
    q = scenario.msps[j].quality
    return float(_standard_value(q, msp_aggregates(j, scenario), _competitor_term(j, p, scenario)))


def standard_response(j: int, prices: Prices, scenario: Scenario, price_floor: Optional[float] = None) -> float:
    """
    Best response of MSP j capped at p_max

    The stationary price is taken over the users still buying at the current p^j,
    which is the full user set whenever no follower clamps.
    """
    p = _price_array(prices, price_floor)
    msp = scenario.msps[j]
    agg = msp_aggregates(j, scenario, price=p[j])
    if agg.users == 0:
        agg = msp_aggregates(j, scenario)
    value = _standard_value(msp.quality, agg, _competitor_term(j, p, scenario))
    return float(min(value, msp.p_max))


class BestResponseDynamics:
    """Synchronous gradient play of the MSPs over the follower best responses"""

    def __init__(self, scenario: Scenario, config: Optional[DynamicsConfig] = None):
        self.scenario = scenario
        self.config = config or DynamicsConfig()
        self.alpha = np.array([u.alpha for u in scenario.users])
        self.s_max = np.array([u.s_max for u in scenario.users])
        self.quality = np.array([m.quality for m in scenario.msps])
        self.p_max = np.array([m.p_max for m in scenario.msps])

    def default_init(self) -> np.ndarray:
        return 0.5 * (self.config.price_floor + self.p_max)

    def sales(self, prices: np.ndarray) -> np.ndarray:
        """I x J follower purchases"""
        return np.maximum(self.s_max[:, None] - prices[None, :] / (2.0 * self.alpha[:, None]), 0.0)

    def revenues(self, prices: np.ndarray) -> np.ndarray:
        ratio = self.quality / prices
        return self.quality * self.sales(prices).sum(axis=0) / ratio.sum()

    def unilateral_revenues(self, own: np.ndarray, prices: np.ndarray) -> np.ndarray:
        """Revenue of every MSP j if it alone moved to own[j] while the rest keep `prices`"""
        ratio = self.quality / prices
        denom = ratio.sum() - ratio + self.quality / own
        return self.quality * self.sales(own).sum(axis=0) / denom

    def gradient(self, prices: np.ndarray) -> np.ndarray:
        dp = self.config.step_dp
        upper = self.unilateral_revenues(prices + dp, prices)
        lower = self.unilateral_revenues(prices - dp, prices)
        return (upper - lower) / (2.0 * dp)

    def step(self, prices: np.ndarray) -> np.ndarray:
        move = self.config.learning_rate * prices * self.gradient(prices)
        return np.clip(prices + move, self.config.price_floor, self.p_max)

    def fixed_point_residual(self, prices: np.ndarray) -> float:
        targets = [
            max(standard_response(j, prices, self.scenario, self.config.price_floor), self.config.price_floor)
            for j in range(len(prices))
        ]
        return float(np.max(np.abs(prices - np.array(targets))))

    def own_price_revenues(self, j: int, grid: np.ndarray, prices: np.ndarray) -> np.ndarray:
        """Revenue of MSP j at each price in grid while the others keep `prices`"""
        ratio = self.quality / prices
        others = ratio.sum() - ratio[j]
        sold = np.maximum(self.s_max[None, :] - grid[:, None] / (2.0 * self.alpha[None, :]), 0.0).sum(axis=1)
        return self.quality[j] * sold / (others + self.quality[j] / grid)

    def global_best_response(self, j: int, prices: np.ndarray) -> Tuple[float, float]:
        """
        Best own price of MSP j over [price_floor, p_max]

        Revenue is only piecewise smooth once followers clamp, so the whole range is
        gridded and the grid narrowed around the best point a few times.
        """
        lo, hi = self.config.price_floor, float(self.p_max[j])
        grid = np.linspace(lo, hi, DEVIATION_GRID)
        best_price, best_revenue = lo, -np.inf
        for _ in range(DEVIATION_REFINEMENTS):
            values = self.own_price_revenues(j, grid, prices)
            k = int(np.argmax(values))
            if values[k] > best_revenue:
                best_price, best_revenue = float(grid[k]), float(values[k])
            step = grid[1] - grid[0]
            grid = np.linspace(max(lo, best_price - step), min(hi, best_price + step), DEVIATION_GRID)
        return best_price, best_revenue

    def profitable_deviation(self, prices: np.ndarray) -> Optional[Tuple[int, float, float]]:
        """(msp, price, gain) of the largest unilateral gain above deviation_tol, None if there is none"""
        current = self.revenues(prices)
        best: Optional[Tuple[int, float, float]] = None
        for j in range(len(prices)):
            price, revenue = self.global_best_response(j, prices)
            gain = revenue - current[j]
            if gain > self.config.deviation_tol and (best is None or gain > best[2]):
                best = (j, price, gain)
        return best

    def result(self, prices: np.ndarray, trace, revenue_trace, converged: bool, iterations: int) -> EquilibriumResult:
        probs = self.quality / prices
        probs = probs / probs.sum()
        sales = self.sales(prices)
        utilities = []
        for i, user in enumerate(self.scenario.users):
            utilities.append(user_expected_utility(user, prices, sales[i], probs))
        return EquilibriumResult(
            prices=PriceVector(prices=prices.tolist()),
            sales=sales.tolist(),
            probabilities=np.tile(probs, (len(self.scenario.users), 1)).tolist(),
            revenues=self.revenues(prices).tolist(),
            utilities=utilities,
            trace=trace,
            revenue_trace=revenue_trace,
            converged=converged,
            iterations=iterations,
            clamped_followers=int(np.count_nonzero(sales <= 0.0)),
        )

    def run(self, init: Optional[Prices] = None) -> EquilibriumResult:
        """
        Iterate until the largest price move drops below the tolerance, the prices
        sit at their own best responses and no MSP gains by a unilateral move

        A gradient fixed point where some MSP still gains more than deviation_tol over
        its whole price range is left by moving that MSP to its global best response.

        Raises:
            NotConverged: If max_iters or max_jumps runs out, or the prices stall away
                from a fixed point; the exception carries the partial result
        """
        cfg = self.config
        if init is None:
            prices = self.default_init()
        else:
            prices = _price_array(init, cfg.price_floor)
            if np.any(prices > self.p_max):
                raise OutOfRange(f"initial prices {prices.tolist()} exceed p_max")
        trace = [prices.tolist()]
        revenue_trace = [self.revenues(prices).tolist()]
        converged = False
        iteration = 0
        jumps = 0
        for iteration in range(1, cfg.max_iters + 1):
            updated = self.step(prices)
            move = float(np.max(np.abs(updated - prices)))
            prices = updated
            trace.append(prices.tolist())
            revenue_trace.append(self.revenues(prices).tolist())
            if move < cfg.convergence_tol:
                residual = self.fixed_point_residual(prices)
                if residual < 10.0 * cfg.convergence_tol:
                    deviation = self.profitable_deviation(prices)
                    if deviation is None:
                        converged = True
                        break
                    j, price, gain = deviation
                    if jumps >= cfg.max_jumps:
                        logger.warning(f"MSP {j} still gains {gain:.3e} at {price:.6f} after {jumps} jumps")
                        break
                    logger.info(f"Iteration {iteration}: MSP {j} gains {gain:.3e} by jumping to {price:.6f}")
                    prices = prices.copy()
                    prices[j] = price
                    jumps += 1
                    trace[-1] = prices.tolist()
                    revenue_trace[-1] = self.revenues(prices).tolist()
                    continue
                if move == 0.0:
                    logger.warning(f"Prices stalled at {prices.tolist()} with fixed-point residual {residual:.3e}")
                    break
            if iteration % 10_000 == 0:
                logger.debug(f"Iteration {iteration}: prices {prices.tolist()}")

        result = self.result(prices, trace, revenue_trace, converged, iteration)
        if not converged:
            logger.error(f"Best-response dynamics did not converge after {iteration} iterations")
            raise NotConverged(f"no equilibrium after {iteration} iterations", result=result)
        logger.info(f"Converged in {iteration} iterations to prices {[round(p, 6) for p in prices]}")
        return result


def best_response_dynamics(
    scenario: Scenario, config: Optional[DynamicsConfig] = None, init: Optional[Prices] = None
) -> EquilibriumResult:
    return BestResponseDynamics(scenario, config).run(init)


def verify_equilibrium(
    result: EquilibriumResult, scenario: Scenario, tol: float, price_floor: Optional[float] = None
) -> EquilibriumReport:
    """
    Check the equilibrium conditions at a claimed solution

    Checks that every purchase equals the follower best response, that every price
    is its own best response within tol, and that no MSP gains more than tol by a
    unilateral move anywhere in [price_floor, p_max].
    """
    floor = settings.PRICE_FLOOR if price_floor is None else price_floor
    dynamics = BestResponseDynamics(scenario, DynamicsConfig(price_floor=floor))
    prices = np.asarray(result.prices.prices, dtype=float)

    follower_error = float(np.max(np.abs(np.asarray(result.sales) - dynamics.sales(prices))))
    fixed_point = dynamics.fixed_point_residual(prices)

    current = dynamics.revenues(prices)
    gain = max(dynamics.global_best_response(j, prices)[1] - current[j] for j in range(len(prices)))

    return EquilibriumReport(
        follower_ok=follower_error <= 1e-9,
        fixed_point_ok=fixed_point <= tol,
        deviation_ok=gain <= tol,
        max_follower_error=follower_error,
        max_fixed_point_residual=fixed_point,
        max_deviation_gain=max(float(gain), 0.0),
    )


def trace_frame(result: EquilibriumResult) -> pd.DataFrame:
    """One row per (iteration, MSP) with the price and revenue at that iterate"""
    rows = []
    for iteration, (prices, revenues) in enumerate(zip(result.trace, result.revenue_trace)):
        for j, (price, revenue) in enumerate(zip(prices, revenues)):
            rows.append({"iteration": iteration, "msp_index": j, "price": price, "revenue": revenue})
    return pd.DataFrame(rows, columns=["iteration", "msp_index", "price", "revenue"])
