import pytest

from stackmarket.core.exceptions import InvalidRange
from stackmarket.models.run import SweepAxis
from stackmarket.models.scenario import UserProfile
from stackmarket.services.centralized_service import revenue_vs_capacity_sweep
from stackmarket.services.sweep_service import SweepService, sweep_alpha_mean, sweep_price, sweep_quality


class TestPriceSweep:
    def test_sales_fall_with_price(self):
        users = [UserProfile(alpha=0.5, s_min=1.0, s_max=11.0), UserProfile(alpha=1.0, s_min=1.0, s_max=10.0)]
        frame = sweep_price(users, [3.0, 6.0, 9.0])
        first = frame[frame["user"] == 0]
        assert first["sales"].tolist() == pytest.approx([8.0, 5.0, 2.0])
        assert first["drop_pct"].tolist() == pytest.approx([0.0, 37.5, 75.0])
        second = frame[frame["user"] == 1]
        assert second["sales"].tolist() == pytest.approx([8.5, 7.0, 5.5])

    def test_fully_clamped_user_has_no_drop(self):
        frame = sweep_price([UserProfile(alpha=0.1, s_min=0.0, s_max=10.0)], [3.0, 6.0])
        assert frame["sales"].tolist() == [0.0, 0.0]
        assert frame["drop_pct"].tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("prices", [[], [6.0, 3.0]])
    def test_invalid_values(self, prices):
        with pytest.raises(InvalidRange):
            sweep_price([UserProfile(alpha=0.5, s_min=1.0, s_max=11.0)], prices)


class TestCentralizedSweeps:
    def test_alpha_mean_moves_the_monopoly_price(self, single_pair):
        # one user: the optimum is p = alpha * s_max with 5 MHz sold
        seen = []
        frame = sweep_alpha_mean(single_pair, [0.3, 0.5], on_point=lambda v, s: seen.append(v))
        assert frame["alpha_mean"].tolist() == [0.3, 0.5]
        assert frame["objective"].tolist() == pytest.approx([15.0, 25.0], abs=5e-2)
        assert frame["price_0"].tolist() == pytest.approx([3.0, 5.0], abs=0.25)
        assert seen == [0.3, 0.5]

    def test_quality_of_a_lone_msp_does_not_matter(self, single_pair):
        frame = sweep_quality(single_pair, [0.5, 1.0])
        assert frame["objective"].tolist() == pytest.approx([25.0, 25.0], abs=5e-2)

    def test_quality_msp_out_of_range(self, single_pair):
        with pytest.raises(InvalidRange):
            sweep_quality(single_pair, [0.5], msp=1)

    def test_service_dispatch(self, single_pair):
        frame = SweepService().run(SweepAxis.PRICE, [2.0, 4.0], single_pair)
        assert frame["sales"].tolist() == pytest.approx([8.0, 6.0])


def test_capacity_sweep_against_distributed(symmetric_pair):
    # one user shared by two equal MSPs: 5 + 5 competing vs. a monopoly at 7.5 selling 5 MHz
    frame = revenue_vs_capacity_sweep(symmetric_pair, [0.0, 6.0, 100.0])
    assert frame["centralized_total"].tolist() == pytest.approx([0.0, 37.5, 37.5], abs=0.1)
    assert frame["served_users"].tolist() == [0, 1, 1]
    assert frame["distributed_total"].tolist() == pytest.approx([100.0 / 3.0] * 3, abs=1e-2)
    assert frame["centralized_total"].iloc[-1] >= frame["distributed_total"].iloc[-1]
