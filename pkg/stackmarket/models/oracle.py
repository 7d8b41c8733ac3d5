from typing import Any, Dict

from pydantic import BaseModel, ConfigDict, Field


class OracleReport(BaseModel):
    """Worst discrepancy a brute-force check found"""
    model_config = ConfigDict(frozen=True)

    target: str = Field(..., description="Name of the checked operation")
    max_abs_error: float = Field(0.0, ge=0)
    max_rel_error: float = Field(0.0, ge=0)
    cases: int = Field(0, ge=0, description="Number of evaluated cases")
    worst_case: Dict[str, Any] = Field(default_factory=dict, description="Input echo of the worst case")
