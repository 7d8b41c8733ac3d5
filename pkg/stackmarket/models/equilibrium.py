from typing import List

from pydantic import BaseModel, ConfigDict, Field

from stackmarket.core.config import settings


class PriceVector(BaseModel):
    """Leader strategies, one price per MSP"""
    model_config = ConfigDict(frozen=True)

    prices: List[float] = Field(..., min_length=1, description="Price per MHz for each MSP")

    def __len__(self) -> int:
        return len(self.prices)

    def __getitem__(self, j: int) -> float:
        return self.prices[j]


class MspAggregates(BaseModel):
    """Quality-weighted demand sums of one MSP"""
    model_config = ConfigDict(frozen=True)

    X: float = Field(..., description="q * sum of s_max over the counted users")
    Y: float = Field(..., description="q * sum of 1/(2 alpha) over the counted users")
    users: int = Field(..., description="Number of users counted")


class DynamicsConfig(BaseModel):
    """Parameters of the parallel best-response dynamics"""
    model_config = ConfigDict(frozen=True)

    step_dp: float = Field(1e-4, gt=0, description="Central-difference step")
    learning_rate: float = Field(1e-2, gt=0, description="Gradient step multiplier mu")
    max_iters: int = Field(100_000, ge=1, description="Iteration budget")
    convergence_tol: float = Field(1e-4, gt=0, description="Largest price move accepted as converged")
    deviation_tol: float = Field(1e-4, gt=0, description="Largest unilateral revenue gain accepted at a fixed point")
    max_jumps: int = Field(20, ge=0, description="Jumps to a global best response before giving up")
    price_floor: float = Field(default_factory=lambda: settings.PRICE_FLOOR, gt=0, description="Lowest admissible price")


class EquilibriumResult(BaseModel):
    """Outcome of a best-response dynamics run"""
    model_config = ConfigDict(frozen=True)

    prices: PriceVector
    sales: List[List[float]] = Field(..., description="I x J follower purchases (MHz)")
    probabilities: List[List[float]] = Field(..., description="I x J pairing probabilities")
    revenues: List[float] = Field(..., description="Expected revenue of each MSP")
    utilities: List[float] = Field(..., description="Expected utility of each user")
    trace: List[List[float]] = Field(default_factory=list, description="Price vector per iteration")
    revenue_trace: List[List[float]] = Field(default_factory=list, description="Revenues per iteration")
    converged: bool = False
    iterations: int = 0
    clamped_followers: int = Field(0, description="Follower/MSP pairs buying nothing at the final prices")

    @property
    def total_revenue(self) -> float:
        return float(sum(self.revenues))


class EquilibriumReport(BaseModel):
    """Pass/fail of each equilibrium condition with the worst value seen"""
    model_config = ConfigDict(frozen=True)

    follower_ok: bool
    fixed_point_ok: bool
    deviation_ok: bool
    max_follower_error: float
    max_fixed_point_residual: float
    max_deviation_gain: float

    @property
    def passed(self) -> bool:
        return self.follower_ok and self.fixed_point_ok and self.deviation_ok
