from enum import Enum
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, computed_field

from stackmarket.core.exceptions import InvalidPartition
from stackmarket.models.scenario import MspProfile

MERGE_TOLERANCE = 1e-9


class PartitionSet(BaseModel):
    """Sorted price partition points of every MSP, each running from 0 to p_max"""
    model_config = ConfigDict(frozen=True)

    points: List[List[float]] = Field(..., description="Partition points per MSP")

    @classmethod
    def initial(cls, msps: List[MspProfile]) -> "PartitionSet":
        return cls(points=[[0.0, msp.p_max] for msp in msps])

    def check(self, msps: List[MspProfile]) -> None:
        if len(self.points) != len(msps):
            raise InvalidPartition(f"{len(self.points)} point sets for {len(msps)} MSPs")
        for j, (pts, msp) in enumerate(zip(self.points, msps)):
            if len(pts) < 2:
                raise InvalidPartition(f"MSP {j}: need at least one interval")
            if pts[0] != 0.0 or pts[-1] != msp.p_max:
                raise InvalidPartition(f"MSP {j}: points must run from 0 to p_max={msp.p_max}")
            if any(b <= a for a, b in zip(pts, pts[1:])):
                raise InvalidPartition(f"MSP {j}: points must be strictly increasing")

    def intervals(self, j: int) -> List[Tuple[float, float]]:
        pts = self.points[j]
        return list(zip(pts[:-1], pts[1:]))

    def size(self, j: int) -> int:
        return len(self.points[j]) - 1

    def insert(self, j: int, new_points: List[float]) -> "PartitionSet":
        """Add points to MSP j, merging any within MERGE_TOLERANCE of an existing point"""
        pts = list(self.points[j])
        for value in new_points:
            if all(abs(value - p) > MERGE_TOLERANCE for p in pts):
                pts.append(float(value))
        pts.sort()
        updated = [list(p) for p in self.points]
        updated[j] = pts
        return PartitionSet(points=updated)


class TighteningConfig(BaseModel):
    """Parameters of the bound-tightening loop"""
    model_config = ConfigDict(frozen=True)

    beta: float = Field(10.0, gt=1, description="Partition shrink factor")
    epsilon: float = Field(1e-3, gt=0, description="Smallest half-width worth inserting")
    gap_tol: Optional[float] = Field(None, ge=0, description="Absolute gap; None means 1e-6 * max(1, |UB|)")
    max_rounds: int = Field(100, ge=1, description="Round budget")

    def tolerance(self, upper_bound: float) -> float:
        if self.gap_tol is not None:
            return self.gap_tol
        return 1e-6 * max(1.0, abs(upper_bound))


class Termination(str, Enum):
    GAP = "gap"
    RESOLUTION = "resolution"
    ROUND_LIMIT = "round_limit"


class RoundRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    round: int
    lb: float
    ub: float
    gap: float
    relaxed_objective: float
    activated: List[Tuple[float, float]] = Field(..., description="Activated interval per MSP")
    prices: List[float] = Field(..., description="Relaxed-optimal price per MSP")
    nodes: int = 0


class CentralSolution(BaseModel):
    """Best feasible point found by bound tightening, with its bounds"""
    model_config = ConfigDict(frozen=True)

    prices: List[float]
    sales: List[List[float]] = Field(..., description="I x J purchases (MHz)")
    association: List[List[int]] = Field(..., description="I x J serving indicators")
    partition_activation: List[int] = Field(..., description="Activated partition index per MSP")
    objective_lb: float
    objective_ub: float
    rounds: int
    lb_ub_history: List[Tuple[float, float]] = Field(default_factory=list)
    round_log: List[RoundRecord] = Field(default_factory=list)
    weights: List[float] = Field(default_factory=list)
    termination: Termination = Termination.GAP
    converged: bool = True

    @computed_field
    @property
    def objective(self) -> float:
        return self.objective_lb

    @computed_field
    @property
    def gap(self) -> float:
        return self.objective_ub - self.objective_lb

    @property
    def served_users(self) -> List[int]:
        return [int(sum(row[j] for row in self.association)) for j in range(len(self.prices))]

    @property
    def revenues(self) -> List[float]:
        """Unweighted revenue p^j * sum_i s_ij of each MSP"""
        return [self.prices[j] * sum(row[j] for row in self.sales) for j in range(len(self.prices))]

    @property
    def total_revenue(self) -> float:
        return float(sum(self.revenues))
