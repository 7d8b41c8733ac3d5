import pytest

from stackmarket.models.scenario import MspProfile, Scenario, ScenarioRanges, UserProfile
from stackmarket.services.scenario_service import generate_scenario


@pytest.fixture
def single_pair() -> Scenario:
    """One user, one MSP: alpha=0.5, s_max=10, so the revenue p(10 - p) peaks at p=5"""
    return Scenario(
        users=[UserProfile(alpha=0.5, s_min=1.0, s_max=10.0)],
        msps=[MspProfile(quality=1.0, p_max=12.0, capacity=20.0)],
    )


@pytest.fixture
def symmetric_pair() -> Scenario:
    """Two identical MSPs sharing one user; the symmetric equilibrium is p = 5"""
    return Scenario(
        users=[UserProfile(alpha=0.75, s_min=1.0, s_max=10.0)],
        msps=[MspProfile(quality=0.5, p_max=12.0), MspProfile(quality=0.5, p_max=12.0)],
    )


@pytest.fixture
def asymmetric_pair() -> Scenario:
    return Scenario(
        users=[UserProfile(alpha=0.75, s_min=1.0, s_max=10.0), UserProfile(alpha=0.6, s_min=2.0, s_max=11.0)],
        msps=[MspProfile(quality=0.3, p_max=12.0), MspProfile(quality=0.9, p_max=12.0)],
    )


@pytest.fixture
def interior_ranges() -> ScenarioRanges:
    """Draw bounds keeping every follower interior at equilibrium"""
    return ScenarioRanges(alpha=(0.5, 1.0), quality=(0.2, 1.0))


@pytest.fixture
def market(interior_ranges) -> Scenario:
    return generate_scenario(10, 3, seed=11, ranges=interior_ranges)
