from enum import Enum
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class Relation(str, Enum):
    LE = "<="
    EQ = "=="
    GE = ">="


class MilpStatus(str, Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITER_LIMIT = "IterLimit"
    NUMERICAL = "Numerical"


class MilpProblem(BaseModel):
    """Maximization problem  max c.x  s.t.  A x (rel) b,  lower <= x <= upper.

    Rows are dense. Integral variables need finite bounds; binaries carry [0, 1].
    Each sos1 group lists binaries of which at most one may be nonzero; branching
    splits a fractional group in two instead of fixing a single member.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    objective: np.ndarray = Field(..., description="Objective coefficients (maximized)")
    a_matrix: np.ndarray = Field(..., description="Constraint rows, m x n")
    relations: List[Relation] = Field(..., description="Relation of each row")
    rhs: np.ndarray = Field(..., description="Right-hand sides")
    lower: np.ndarray = Field(..., description="Variable lower bounds")
    upper: np.ndarray = Field(..., description="Variable upper bounds, inf allowed")
    integrality: np.ndarray = Field(..., description="True for integral variables")
    var_names: List[str] = Field(default_factory=list)
    row_names: List[str] = Field(default_factory=list)
    sos1: List[List[int]] = Field(default_factory=list, description="Special ordered sets of type 1")

    @model_validator(mode="before")
    @classmethod
    def coerce_arrays(cls, data):
        if isinstance(data, dict):
            data = dict(data)
            n = len(np.atleast_1d(data["objective"]))
            for key in ("objective", "rhs", "lower", "upper"):
                if key in data:
                    data[key] = np.asarray(data[key], dtype=float).ravel()
            a = np.asarray(data.get("a_matrix", np.zeros((0, n))), dtype=float)
            data["a_matrix"] = a.reshape(-1, n)
            data["integrality"] = np.asarray(data.get("integrality", np.zeros(n)), dtype=bool).ravel()
            data["relations"] = [Relation(r) for r in data.get("relations", [])]
        return data

    @model_validator(mode="after")
    def check_dimensions(self) -> "MilpProblem":
        n = self.n_vars
        m = self.a_matrix.shape[0]
        if self.a_matrix.shape[1] != n:
            raise ValueError(f"constraint matrix has {self.a_matrix.shape[1]} columns for {n} variables")
        if len(self.relations) != m or self.rhs.shape[0] != m:
            raise ValueError("relations and rhs must have one entry per row")
        if self.lower.shape[0] != n or self.upper.shape[0] != n or self.integrality.shape[0] != n:
            raise ValueError("bounds and integrality must have one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        ints = self.integrality
        if np.any(~np.isfinite(self.lower[ints])) or np.any(~np.isfinite(self.upper[ints])):
            raise ValueError("integral variables need finite bounds")
        if self.var_names and len(self.var_names) != n:
            raise ValueError("var_names length mismatch")
        if self.row_names and len(self.row_names) != m:
            raise ValueError("row_names length mismatch")
        for group in self.sos1:
            if len(group) < 2 or any(not 0 <= k < n or not ints[k] for k in group):
                raise ValueError(f"sos1 group {group} must list at least two integral variables")
        return self

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_rows(self) -> int:
        return self.a_matrix.shape[0]

    def max_violation(self, x: np.ndarray) -> float:
        """Largest violation of any row or bound at x"""
        worst = 0.0
        if self.n_rows:
            lhs = self.a_matrix @ x
            diff = lhs - self.rhs
            for rel, d in zip(self.relations, diff):
                if rel is Relation.LE:
                    worst = max(worst, d)
                elif rel is Relation.GE:
                    worst = max(worst, -d)
                else:
                    worst = max(worst, abs(d))
        worst = max(worst, float(np.max(self.lower - x, initial=0.0)), float(np.max(x - self.upper, initial=0.0)))
        return float(worst)


class MilpSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    status: MilpStatus
    values: np.ndarray = Field(default_factory=lambda: np.zeros(0))
    objective: float = float("-inf")
    bound: float = Field(float("inf"), description="Proven upper bound on the optimum")
    node_count: int = 0
    incumbent_history: List[float] = Field(default_factory=list, description="Objective after each incumbent update")
