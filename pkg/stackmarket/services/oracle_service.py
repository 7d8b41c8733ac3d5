"""Brute-force checks for the follower response, the centralized optimum and
unilateral price deviations."""
import itertools
import logging
from typing import Dict, FrozenSet, Optional

import numpy as np

from stackmarket.core.config import settings
from stackmarket.core.exceptions import InvalidRange, TooLarge
from stackmarket.models.equilibrium import PriceVector
from stackmarket.models.oracle import OracleReport
from stackmarket.models.scenario import Scenario, UserProfile
from stackmarket.services.centralized_service import compute_weights
from stackmarket.services.distributed_service import msp_expected_revenue, user_best_response

logger = logging.getLogger(__name__)

MAX_ORACLE_USERS = 6
MAX_ORACLE_MSPS = 2


def grid_best_response(user: UserProfile, price: float, resolution: float) -> float:
    """Maximize alpha*s*(2 s_max - s) - price*s over s in {0, res, 2 res, ..., s_max}"""
    if resolution <= 0:
        raise InvalidRange(f"resolution must be positive, got {resolution}")
    grid = np.arange(0.0, user.s_max, resolution)
    grid = np.append(grid[grid < user.s_max], user.s_max)
    utility = user.alpha * grid * (2.0 * user.s_max - grid) - price * grid
    return float(grid[int(np.argmax(utility))])


def best_response_report(draws: int, resolution: float, seed: int = 0) -> OracleReport:
    """Compare the closed-form follower response with the grid search over random draws"""
    rng = np.random.default_rng(seed)
    worst_abs, worst_rel, worst = 0.0, 0.0, {}
    for _ in range(draws):
        alpha = float(rng.uniform(1e-3, 1.0))
        s_max = float(rng.uniform(10.0, 12.0))
        price = float(rng.uniform(0.0, 12.0))
        user = UserProfile(alpha=alpha, s_min=0.0, s_max=s_max)
        closed = user_best_response(user, price)
        error = abs(closed - grid_best_response(user, price, resolution))
        if error > worst_abs:
            worst_abs = error
            worst = {"alpha": alpha, "s_max": s_max, "price": price, "closed_form": closed}
        worst_rel = max(worst_rel, error / max(abs(closed), 1e-12))
    return OracleReport(
        target="user_best_response",
        max_abs_error=worst_abs,
        max_rel_error=worst_rel,
        cases=draws,
        worst_case=worst,
    )


def _price_grid(p_max: float, resolution: float, extra: np.ndarray) -> np.ndarray:
    grid = np.arange(0.0, p_max, resolution)
    grid = np.append(grid[grid < p_max], p_max)
    extra = extra[(extra >= 0.0) & (extra <= p_max)]
    return np.unique(np.concatenate([grid, extra]))


def enumerate_centralized(scenario: Scenario, price_grid_resolution: float) -> float:
    """
    Best weighted revenue over every association map and every grid price vector

    With the map fixed the objective separates across MSPs, so each (MSP, user subset)
    pair is searched once over its own price grid and the maps are combined from those
    values.

    Raises:
        TooLarge: Beyond 6 users, 2 MSPs or the evaluation budget
        InvalidRange: On a non-positive resolution
    """
    if price_grid_resolution <= 0:
        raise InvalidRange(f"resolution must be positive, got {price_grid_resolution}")
    users, msps = scenario.users, scenario.msps
    I, J = len(users), len(msps)
    if I > MAX_ORACLE_USERS or J > MAX_ORACLE_MSPS:
        raise TooLarge(f"enumeration is limited to {MAX_ORACLE_USERS} users and {MAX_ORACLE_MSPS} MSPs")
    points = max(int(np.ceil(m.p_max / price_grid_resolution)) + 1 for m in msps)
    cost = (J + 1) ** I + J * (2 ** I) * points * I
    if cost > settings.ORACLE_MAX_EVALUATIONS:
        raise TooLarge(f"enumeration needs about {cost:.3g} evaluations")

    alpha = np.array([u.alpha for u in users])
    s_min = np.array([u.s_min for u in users])
    s_max = np.array([u.s_max for u in users])
    weights = compute_weights(msps)
    best_single: Dict[tuple, float] = {}

    def subset_value(j: int, subset: FrozenSet[int]) -> float:
        key = (j, subset)
        if key in best_single:
            return best_single[key]
        if not subset:
            best_single[key] = 0.0
            return 0.0
        idx = np.array(sorted(subset))
        msp = msps[j]
        inv = 1.0 / (2.0 * alpha[idx])
        extra = list(2.0 * alpha[idx] * (s_max[idx] - s_min[idx]))
        if msp.capacity is not None:
            extra.append((s_max[idx].sum() - msp.capacity) / inv.sum())
        prices = _price_grid(msp.p_max, price_grid_resolution, np.array(extra))
        sales = s_max[idx, None] - prices[None, :] * inv[:, None]
        feasible = np.all(sales >= s_min[idx, None] - 1e-12, axis=0)
        if msp.capacity is not None:
            feasible &= sales.sum(axis=0) <= msp.capacity + 1e-12
        values = np.where(feasible, weights[j] * prices * sales.sum(axis=0), -np.inf)
        best_single[key] = float(values.max())
        return best_single[key]

    best = 0.0
    for assignment in itertools.product(range(J + 1), repeat=I):
        total = 0.0
        for j in range(J):
            total += subset_value(j, frozenset(i for i, a in enumerate(assignment) if a == j))
            if total == -np.inf:
                break
        best = max(best, total)
    logger.debug(f"Enumerated {(J + 1) ** I} association maps, best objective {best:.6f}")
    return best


def deviation_scan(prices: PriceVector, scenario: Scenario, grid: int, price_floor: Optional[float] = None) -> OracleReport:
    """Largest revenue gain any MSP gets by moving its own price alone"""
    if grid < 10:
        raise InvalidRange(f"grid must hold at least 10 points, got {grid}")
    floor = settings.PRICE_FLOOR if price_floor is None else price_floor
    p = np.array(prices.prices, dtype=float)
    worst_abs, worst_rel, worst = 0.0, 0.0, {}
    for j, msp in enumerate(scenario.msps):
        baseline = msp_expected_revenue(j, p, scenario, floor)
        for candidate in np.linspace(floor, msp.p_max, grid):
            trial = p.copy()
            trial[j] = candidate
            gain = msp_expected_revenue(j, trial, scenario, floor) - baseline
            if gain > worst_abs:
                worst_abs = gain
                worst = {"msp": j, "price": float(p[j]), "deviation": float(candidate), "baseline": baseline}
                worst_rel = gain / max(abs(baseline), 1e-12)
    return OracleReport(
        target="deviation_scan",
        max_abs_error=worst_abs,
        max_rel_error=worst_rel,
        cases=grid * scenario.n_msps,
        worst_case=worst,
    )


def centralized_report(scenario: Scenario, objective: float, price_grid_resolution: float) -> OracleReport:
    """Compare a centralized objective with the enumerated optimum"""
    reference = enumerate_centralized(scenario, price_grid_resolution)
    error = abs(objective - reference)
    return OracleReport(
        target="bound_tightening",
        max_abs_error=error,
        max_rel_error=error / max(abs(reference), 1e-12),
        cases=(scenario.n_msps + 1) ** scenario.n_users,
        worst_case={"objective": objective, "enumerated": reference},
    )
