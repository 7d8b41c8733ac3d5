"""Reference-market checks at full scale. Run with `pytest -m slow`."""
import numpy as np
import pytest

from stackmarket.models.central import TighteningConfig
from stackmarket.models.equilibrium import DynamicsConfig
from stackmarket.models.scenario import MspProfile, Scenario, UserProfile
from stackmarket.services.centralized_service import bound_tightening, revenue_vs_capacity_sweep
from stackmarket.services.distributed_service import best_response_dynamics, standard_function, verify_equilibrium
from stackmarket.services.oracle_service import best_response_report, deviation_scan, enumerate_centralized
from stackmarket.services.scenario_service import generate_scenario
from stackmarket.services.sweep_service import sweep_alpha_mean

pytestmark = pytest.mark.slow


@pytest.fixture
def identical_users() -> Scenario:
    """
    Four identical users, a weak and a strong MSP of 10 MHz each. Three users on the
    strong MSP at p = 20 alpha / 1.5 plus one on the weak MSP at p = 10 alpha beats
    any other split.
    """
    return Scenario(
        users=[UserProfile(alpha=0.5, s_min=1.0, s_max=10.0) for _ in range(4)],
        msps=[MspProfile(quality=0.3, p_max=12.0, capacity=10.0), MspProfile(quality=0.7, p_max=12.0, capacity=10.0)],
    )


def test_follower_response_over_ten_thousand_draws():
    assert best_response_report(10_000, 1e-4, seed=1).max_abs_error <= 1e-4


def test_standard_function_properties_at_random_prices(market):
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        p = rng.uniform(1e-2, 12.0, market.n_msps)
        j = int(rng.integers(market.n_msps))
        value = standard_function(j, p, market)
        assert value > 0
        assert standard_function(j, p * 1.5, market) > value
        beta = float(rng.uniform(1.01, 10.0))
        assert beta * value > standard_function(j, beta * p, market)


@pytest.mark.parametrize("seed", range(20))
def test_seeded_markets_reach_equilibrium(seed, interior_ranges):
    scenario = generate_scenario(10, 3, seed=seed, ranges=interior_ranges)
    result = best_response_dynamics(scenario)
    assert result.converged
    assert deviation_scan(result.prices, scenario, 200).max_abs_error <= 1e-3


@pytest.mark.parametrize("seed", range(20))
def test_reference_markets_have_no_profitable_deviation(seed):
    # default draws reach alpha near 0, where followers clamp and revenues turn piecewise
    scenario = generate_scenario(10, 3, seed=seed)
    cfg = DynamicsConfig()
    result = best_response_dynamics(scenario, cfg)
    assert result.converged
    assert deviation_scan(result.prices, scenario, 200).max_abs_error <= 1e-3
    assert verify_equilibrium(result, scenario, 10 * cfg.convergence_tol).passed


def test_random_initializations_agree(market):
    cfg = DynamicsConfig(convergence_tol=1e-6)
    rng = np.random.default_rng(3)
    reference = np.array(best_response_dynamics(market, cfg).prices.prices)
    for _ in range(20):
        init = rng.uniform(0.5, 12.0, market.n_msps).tolist()
        prices = np.array(best_response_dynamics(market, cfg, init=init).prices.prices)
        assert np.max(np.abs(prices - reference)) <= 1e-3


@pytest.mark.parametrize("seed", range(10))
def test_bound_tightening_matches_enumeration(seed):
    scenario = generate_scenario(2 + seed % 4, 1 + seed % 2, seed=seed)
    config = TighteningConfig()
    solution = bound_tightening(scenario, config)
    assert solution.objective == pytest.approx(enumerate_centralized(scenario, 1e-3), abs=5e-2)
    assert solution.rounds <= 10
    assert solution.gap <= config.tolerance(solution.objective_ub)
    lbs, ubs = zip(*solution.lb_ub_history)
    assert all(b >= a for a, b in zip(lbs, lbs[1:]))
    assert all(b <= a for a, b in zip(ubs, ubs[1:]))


def test_capacity_sweep_shape():
    scenario = generate_scenario(10, 3, seed=0)
    below = 0.5 * min(u.s_min for u in scenario.users)
    frame = revenue_vs_capacity_sweep(scenario, [below, 10.0, 30.0, 200.0, 400.0])
    totals = frame["centralized_total"].tolist()
    objectives = frame["centralized_objective"].tolist()
    assert totals[0] == pytest.approx(0.0, abs=1e-9)
    assert objectives[0] < objectives[1] < objectives[2]
    assert totals[0] < totals[1] < totals[2]
    # past the users' total s_max no capacity row binds
    assert totals[3] == pytest.approx(totals[4], rel=1e-4)
    assert totals[4] >= frame["distributed_total"].iloc[-1]


def test_stronger_msp_charges_more(identical_users):
    solution = bound_tightening(identical_users)
    assert solution.prices[1] >= solution.prices[0] - 1e-6
    assert solution.prices == pytest.approx([5.0, 20.0 / 3.0], abs=1e-2)
    assert solution.served_users == [1, 3]


def test_prices_rise_with_mean_alpha(identical_users):
    frame = sweep_alpha_mean(identical_users, [0.3, 0.5, 0.7])
    for j in range(2):
        prices = frame[f"price_{j}"].tolist()
        assert all(b >= a - 1e-6 for a, b in zip(prices, prices[1:]))
    assert frame["price_1"].tolist() == pytest.approx([4.0, 20.0 / 3.0, 28.0 / 3.0], abs=1e-2)
