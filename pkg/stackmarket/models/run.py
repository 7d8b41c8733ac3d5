from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from stackmarket.models.central import TighteningConfig
from stackmarket.models.equilibrium import DynamicsConfig


class Command(str, Enum):
    GEN = "gen"
    DISTRIBUTED = "distributed"
    CENTRALIZED = "centralized"
    COMPARE = "compare"
    SWEEP = "sweep"
    ORACLE_CHECK = "oracle-check"


class SweepAxis(str, Enum):
    CAPACITY = "capacity"
    ALPHA_MEAN = "alpha_mean"
    PRICE = "price"
    QUALITY = "quality"


class RunConfig(BaseModel):
    """Everything one CLI invocation needs"""
    model_config = ConfigDict(frozen=True)

    command: Command
    scenario: Optional[Path] = Field(None, description="Scenario JSON to load")
    out: Path = Field(Path("out"), description="Output directory")
    seed: int = Field(0, ge=0)
    users: int = Field(10, description="Users for gen")
    msps: int = Field(3, description="MSPs for gen")
    capacity: Optional[float] = Field(None, ge=0, description="Uniform capacity override")
    pmax: Optional[float] = Field(None, gt=0, description="Price cap override")
    dynamics: DynamicsConfig = Field(default_factory=DynamicsConfig)
    tightening: TighteningConfig = Field(default_factory=TighteningConfig)
    sweep_axis: Optional[SweepAxis] = None
    sweep_values: List[float] = Field(default_factory=list)
    jobs: int = Field(1, ge=1)

    @field_validator("sweep_values")
    @classmethod
    def check_sorted(cls, values: List[float]) -> List[float]:
        if any(b < a for a, b in zip(values, values[1:])):
            raise ValueError("sweep values must be sorted ascending")
        return values
