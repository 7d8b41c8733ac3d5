"""Parameter sweeps over capacity, mean price sensitivity, MSP quality and price."""
import logging
from typing import Callable, List, Optional, Sequence, Tuple

import pandas as pd

from stackmarket.core.exceptions import InvalidRange
from stackmarket.models.central import CentralSolution, TighteningConfig
from stackmarket.models.equilibrium import DynamicsConfig
from stackmarket.models.run import SweepAxis
from stackmarket.models.scenario import Scenario, UserProfile
from stackmarket.services.centralized_service import CentralizedService, map_points, revenue_vs_capacity_sweep
from stackmarket.services.distributed_service import user_best_response
from stackmarket.services.scenario_service import scale_alpha, with_quality

logger = logging.getLogger(__name__)

PointCallback = Callable[[float, CentralSolution], None]


def _check_values(values: Sequence[float]) -> List[float]:
    values = [float(v) for v in values]
    if not values or any(b < a for a, b in zip(values, values[1:])):
        raise InvalidRange("sweep values must be a non-empty ascending list")
    return values


def _solve_point(args: Tuple[Scenario, TighteningConfig]) -> CentralSolution:
    scenario, config = args
    return CentralizedService(config).bound_tightening(scenario)


def _price_columns(values: Sequence[float], solutions: Sequence[CentralSolution], axis: str) -> pd.DataFrame:
    rows = []
    for value, solution in zip(values, solutions):
        row = {axis: value, "objective": solution.objective, "total_revenue": solution.total_revenue}
        for j, price in enumerate(solution.prices):
            row[f"price_{j}"] = price
        rows.append(row)
    return pd.DataFrame(rows)


def _centralized_sweep(
    scenarios: List[Scenario],
    values: List[float],
    axis: str,
    tightening: Optional[TighteningConfig],
    jobs: int,
    on_point: Optional[PointCallback],
) -> pd.DataFrame:
    config = tightening or TighteningConfig()
    solutions = map_points(_solve_point, [(s, config) for s in scenarios], jobs)
    if on_point is not None:
        for value, solution in zip(values, solutions):
            on_point(value, solution)
    logger.info(f"Swept {axis} over {len(values)} points")
    return _price_columns(values, solutions, axis)


def sweep_alpha_mean(
    scenario: Scenario,
    means: Sequence[float],
    tightening: Optional[TighteningConfig] = None,
    jobs: int = 1,
    on_point: Optional[PointCallback] = None,
) -> pd.DataFrame:
    """Centralized prices after rescaling every user's alpha to each mean"""
    means = _check_values(means)
    scenarios = [scale_alpha(scenario, m) for m in means]
    return _centralized_sweep(scenarios, means, "alpha_mean", tightening, jobs, on_point)


def sweep_quality(
    scenario: Scenario,
    qualities: Sequence[float],
    msp: int = 0,
    tightening: Optional[TighteningConfig] = None,
    jobs: int = 1,
    on_point: Optional[PointCallback] = None,
) -> pd.DataFrame:
    """Centralized prices while MSP `msp` takes each quality"""
    qualities = _check_values(qualities)
    if not 0 <= msp < scenario.n_msps:
        raise InvalidRange(f"no MSP {msp} in a scenario with {scenario.n_msps} MSPs")
    scenarios = [with_quality(scenario, msp, q) for q in qualities]
    return _centralized_sweep(scenarios, qualities, "quality", tightening, jobs, on_point)


def sweep_price(users: Sequence[UserProfile], prices: Sequence[float]) -> pd.DataFrame:
    """
    Follower purchase of every user at each price

    drop_pct is the relative decrease from the user's purchase at the first price.
    """
    prices = _check_values(prices)
    rows = []
    for i, user in enumerate(users):
        base = user_best_response(user, prices[0])
        for price in prices:
            sales = user_best_response(user, price)
            drop = 100.0 * (base - sales) / base if base > 0 else 0.0
            rows.append(
                {"user": i, "alpha": user.alpha, "s_max": user.s_max, "price": price, "sales": sales, "drop_pct": drop}
            )
    return pd.DataFrame(rows)


class SweepService:
    """Dispatches a sweep axis to its table builder"""

    def __init__(
        self,
        tightening: Optional[TighteningConfig] = None,
        dynamics: Optional[DynamicsConfig] = None,
        jobs: int = 1,
    ):
        self.tightening = tightening or TighteningConfig()
        self.dynamics = dynamics
        self.jobs = jobs

    def run(
        self,
        axis: SweepAxis,
        values: Sequence[float],
        scenario: Scenario,
        on_point: Optional[PointCallback] = None,
    ) -> pd.DataFrame:
        axis = SweepAxis(axis)
        logger.info(f"Starting {axis.value} sweep over {len(values)} values with {self.jobs} job(s)")
        if axis is SweepAxis.CAPACITY:
            return revenue_vs_capacity_sweep(
                scenario, values, self.tightening, self.dynamics, jobs=self.jobs, on_point=on_point
            )
        if axis is SweepAxis.ALPHA_MEAN:
            return sweep_alpha_mean(scenario, values, self.tightening, self.jobs, on_point)
        if axis is SweepAxis.QUALITY:
            return sweep_quality(scenario, values, 0, self.tightening, self.jobs, on_point)
        return sweep_price(scenario.users, values)
