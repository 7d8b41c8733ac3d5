import numpy as np
import pytest

from stackmarket.core.exceptions import ClampedRegime, NotConverged, OutOfRange, PriceBelowFloor
from stackmarket.models.equilibrium import DynamicsConfig, PriceVector
from stackmarket.models.scenario import MspProfile, Scenario, UserProfile
from stackmarket.services.distributed_service import (
    BestResponseDynamics,
    best_response_dynamics,
    msp_aggregates,
    msp_expected_revenue,
    pairing_probabilities,
    revenue_price_derivative,
    standard_function,
    standard_response,
    trace_frame,
    user_best_response,
    user_expected_utility,
    user_satisfaction,
    verify_equilibrium,
)

USER = UserProfile(alpha=0.5, s_min=1.0, s_max=10.0)


def msps(*qualities, p_max=12.0):
    return [MspProfile(quality=q, p_max=p_max) for q in qualities]


class TestPairingProbabilities:
    def test_single_msp(self):
        assert pairing_probabilities([3.0], msps(0.4)).tolist() == [1.0]

    def test_symmetric(self):
        probs = pairing_probabilities([2.0, 2.0, 2.0], msps(0.5, 0.5, 0.5))
        assert probs == pytest.approx([1 / 3] * 3)

    def test_quality_ratio(self):
        assert pairing_probabilities(PriceVector(prices=[1.0, 1.0]), msps(0.5, 0.25)) == pytest.approx([2 / 3, 1 / 3])

    def test_sums_to_one(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            j = int(rng.integers(1, 6))
            probs = pairing_probabilities(rng.uniform(1e-3, 12.0, j), msps(*rng.uniform(0.01, 1.0, j)))
            assert abs(probs.sum() - 1.0) <= 1e-12

    def test_price_below_floor(self):
        with pytest.raises(PriceBelowFloor):
            pairing_probabilities([0.0, 1.0], msps(0.5, 0.5))


class TestFollower:
    def test_satisfaction(self):
        assert user_satisfaction(USER, 0.0) == 0.0
        assert user_satisfaction(USER, 10.0) == pytest.approx(0.5 * 100)
        assert user_satisfaction(USER, 4.0) == pytest.approx(32.0)

    def test_satisfaction_out_of_range(self):
        with pytest.raises(OutOfRange):
            user_satisfaction(USER, 10.5)

    def test_best_response(self):
        user = UserProfile(alpha=0.5, s_min=1.0, s_max=11.0)
        assert user_best_response(user, 0.0) == 11.0
        assert user_best_response(user, 3.0) == pytest.approx(8.0)
        assert user_best_response(user, 9.0) == pytest.approx(2.0)
        assert user_best_response(user, 11.0) == 0.0
        assert user_best_response(user, 20.0) == 0.0

    def test_expected_utility(self):
        prices = [4.0, 6.0]
        probs = pairing_probabilities(prices, msps(0.5, 0.5))
        sales = [user_best_response(USER, p) for p in prices]
        assert probs == pytest.approx([0.6, 0.4])
        assert sales == pytest.approx([6.0, 4.0])
        # 0.6 * (42 - 24) + 0.4 * (32 - 24)
        assert user_expected_utility(USER, prices, sales, probs) == pytest.approx(14.0)

    def test_expected_utility_no_sales(self):
        assert user_expected_utility(USER, [4.0, 6.0], [0.0, 0.0], [0.5, 0.5]) == 0.0

    def test_grid_never_beats_closed_form(self):
        grid = np.arange(0.0, USER.s_max + 1e-9, 1e-3)
        for price in [0.5, 3.0, 7.0, 9.9, 11.0]:
            best = user_best_response(USER, price)
            closed = user_satisfaction(USER, best) - price * best
            searched = (USER.alpha * grid * (2 * USER.s_max - grid) - price * grid).max()
            assert searched <= closed + 1e-6


class TestLeaderRevenue:
    def test_single_pair_peak(self, single_pair):
        assert msp_expected_revenue(0, [5.0], single_pair) == pytest.approx(25.0)

    def test_all_followers_clamped(self, single_pair):
        assert msp_expected_revenue(0, [10.0], single_pair) == 0.0

    def test_clamped_matches_definition(self):
        scenario = Scenario(
            users=[UserProfile(alpha=0.2, s_min=0.0, s_max=10.0), UserProfile(alpha=0.9, s_min=0.0, s_max=10.0)],
            msps=msps(0.5, 0.8),
        )
        prices = [5.0, 3.0]
        probs = pairing_probabilities(prices, scenario.msps)
        sales = sum(user_best_response(u, 5.0) for u in scenario.users)
        assert msp_expected_revenue(0, prices, scenario) == pytest.approx(probs[0] * 5.0 * sales)

    def test_symmetric_revenues(self, symmetric_pair):
        assert msp_expected_revenue(0, [4.0, 4.0], symmetric_pair) == pytest.approx(
            msp_expected_revenue(1, [4.0, 4.0], symmetric_pair)
        )

    def test_aggregates(self, single_pair):
        agg = msp_aggregates(0, single_pair)
        assert agg.X == pytest.approx(10.0) and agg.Y == pytest.approx(1.0) and agg.users == 1
        assert msp_aggregates(0, single_pair, price=11.0).users == 0

    def test_derivative_sign(self, single_pair):
        assert revenue_price_derivative(0, [3.0], single_pair) > 0
        assert revenue_price_derivative(0, [7.0], single_pair) < 0

    def test_derivative_clamped(self, single_pair):
        with pytest.raises(ClampedRegime):
            revenue_price_derivative(0, [10.0], single_pair)

    def test_derivative_matches_central_difference(self, asymmetric_pair):
        rng = np.random.default_rng(1)
        dp = 1e-5
        for _ in range(100):
            prices = rng.uniform(0.5, 6.0, 2)
            for j in range(2):
                up, down = prices.copy(), prices.copy()
                up[j] += dp
                down[j] -= dp
                numeric = (msp_expected_revenue(j, up, asymmetric_pair) - msp_expected_revenue(j, down, asymmetric_pair)) / (2 * dp)
                analytic = revenue_price_derivative(j, prices, asymmetric_pair)
                assert analytic == pytest.approx(numeric, rel=1e-5, abs=1e-7)

    def test_derivative_vanishes_at_fixed_point(self, asymmetric_pair):
        prices = np.array([3.0, 4.0])
        prices[0] = standard_function(0, prices, asymmetric_pair)
        assert revenue_price_derivative(0, prices, asymmetric_pair) == pytest.approx(0.0, abs=1e-6)


class TestStandardFunction:
    def test_single_user_reduces_to_alpha_s_max(self, single_pair):
        assert standard_function(0, [2.0], single_pair) == pytest.approx(5.0)
        assert standard_response(0, [2.0], single_pair) == pytest.approx(5.0)

    def test_capped_at_p_max(self):
        scenario = Scenario(users=[UserProfile(alpha=0.9, s_min=0.0, s_max=10.0)], msps=msps(1.0, p_max=3.0))
        assert standard_response(0, [1.0], scenario) == 3.0

    def test_properties(self, asymmetric_pair):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            p = rng.uniform(1e-3, 12.0, 2)
            scale = rng.uniform(1.01, 10.0)
            for j in range(2):
                value = standard_function(j, p, asymmetric_pair)
                assert value > 0
                assert standard_function(j, p * 1.5, asymmetric_pair) > value
                assert scale * value > standard_function(j, scale * p, asymmetric_pair)

    def test_increasing_in_competitor_price(self, symmetric_pair):
        assert standard_response(0, [3.0, 8.0], symmetric_pair) > standard_response(0, [3.0, 4.0], symmetric_pair)


class TestDynamics:
    def test_single_pair_converges_to_peak(self, single_pair):
        result = best_response_dynamics(single_pair, init=[1.0])
        assert result.converged
        assert result.prices[0] == pytest.approx(5.0, abs=1e-2)
        assert result.revenues[0] == pytest.approx(25.0, abs=1e-3)

    def test_symmetric_equilibrium(self, symmetric_pair):
        result = best_response_dynamics(symmetric_pair)
        assert result.prices.prices == pytest.approx([5.0, 5.0], abs=1e-2)
        assert result.clamped_followers == 0

    def test_start_at_fixed_point(self, symmetric_pair):
        result = best_response_dynamics(symmetric_pair, init=[5.0, 5.0])
        assert result.iterations <= 2
        assert result.prices.prices == pytest.approx([5.0, 5.0], abs=1e-4)

    def test_result_invariants(self, market):
        result = best_response_dynamics(market)
        for row in result.probabilities:
            assert abs(sum(row) - 1.0) <= 1e-9
        assert min(min(row) for row in result.sales) >= 0.0
        assert min(result.revenues) >= 0.0
        assert len(result.trace) == result.iterations + 1

    def test_different_inits_agree(self, market):
        cfg = DynamicsConfig(convergence_tol=1e-6)
        a = best_response_dynamics(market, cfg, init=[1.0, 1.0, 1.0])
        b = best_response_dynamics(market, cfg, init=[11.0, 8.0, 4.0])
        assert a.prices.prices == pytest.approx(b.prices.prices, abs=1e-3)

    def test_converged_run_verifies(self, market):
        cfg = DynamicsConfig()
        result = best_response_dynamics(market, cfg)
        report = verify_equilibrium(result, market, 10 * cfg.convergence_tol)
        assert report.follower_ok and report.fixed_point_ok

    def test_verify_detects_perturbations(self, symmetric_pair):
        result = best_response_dynamics(symmetric_pair)
        moved = result.model_copy(update={"prices": PriceVector(prices=[result.prices[0] + 0.5, result.prices[1]])})
        assert not verify_equilibrium(moved, symmetric_pair, 1e-3).fixed_point_ok
        sales = [list(row) for row in result.sales]
        sales[0][0] += 1.0
        assert not verify_equilibrium(result.model_copy(update={"sales": sales}), symmetric_pair, 1e-3).follower_ok

    def test_not_converged_carries_trace(self, single_pair):
        with pytest.raises(NotConverged) as err:
            best_response_dynamics(single_pair, DynamicsConfig(max_iters=3), init=[1.0])
        assert len(err.value.result.trace) == 4

    def test_init_above_cap(self, single_pair):
        with pytest.raises(OutOfRange):
            best_response_dynamics(single_pair, init=[13.0])

    def test_trace_frame(self, symmetric_pair):
        result = best_response_dynamics(symmetric_pair)
        frame = trace_frame(result)
        assert list(frame.columns) == ["iteration", "msp_index", "price", "revenue"]
        assert len(frame) == 2 * len(result.trace)


@pytest.fixture
def two_peaks() -> Scenario:
    """
    One MSP, two users. Below p = 4 both buy and p(30 - 5.25p) peaks at 2.857 with 42.86;
    above it only the patient user buys and p(10 - p/4) climbs to 84 at p_max = 12.
    """
    return Scenario(
        users=[UserProfile(alpha=0.1, s_min=0.0, s_max=20.0), UserProfile(alpha=2.0, s_min=0.0, s_max=10.0)],
        msps=[MspProfile(quality=1.0, p_max=12.0)],
    )


class TestGlobalDeviation:
    def test_jumps_out_of_a_local_peak(self, two_peaks):
        result = best_response_dynamics(two_peaks, init=[2.0])
        assert result.converged
        assert result.prices[0] == pytest.approx(12.0)
        assert result.revenues[0] == pytest.approx(84.0)
        assert len(result.trace) == result.iterations + 1

    def test_no_jumps_left(self, two_peaks):
        with pytest.raises(NotConverged) as err:
            best_response_dynamics(two_peaks, DynamicsConfig(max_jumps=0), init=[2.0])
        assert err.value.result.prices[0] == pytest.approx(30.0 / 10.5, abs=1e-2)

    def test_profitable_deviation_from_the_local_peak(self, two_peaks):
        dynamics = BestResponseDynamics(two_peaks)
        j, price, gain = dynamics.profitable_deviation(np.array([30.0 / 10.5]))
        assert (j, price) == (0, pytest.approx(12.0))
        assert gain == pytest.approx(84.0 - 300.0 / 7.0)

    def test_no_deviation_at_the_global_peak(self, two_peaks):
        assert BestResponseDynamics(two_peaks).profitable_deviation(np.array([12.0])) is None

    def test_global_best_response_refines_an_interior_peak(self, single_pair):
        price, revenue = BestResponseDynamics(single_pair).global_best_response(0, np.array([8.0]))
        assert price == pytest.approx(5.0, abs=1e-4)
        assert revenue == pytest.approx(25.0, abs=1e-6)

    def test_verify_flags_the_local_peak(self, two_peaks):
        dynamics = BestResponseDynamics(two_peaks)
        local = dynamics.result(np.array([30.0 / 10.5]), [], [], True, 1)
        report = verify_equilibrium(local, two_peaks, 1e-3)
        assert report.fixed_point_ok
        assert not report.deviation_ok
        assert report.max_deviation_gain == pytest.approx(84.0 - 300.0 / 7.0)
