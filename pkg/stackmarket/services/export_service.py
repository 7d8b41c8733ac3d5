import json
import logging
from pathlib import Path
from typing import Any, Dict, Optional, Union

import pandas as pd
from pydantic import BaseModel

from stackmarket.core.exceptions import ScenarioIOError
from stackmarket.models.central import CentralSolution
from stackmarket.models.equilibrium import EquilibriumResult
from stackmarket.services.scenario_service import atomic_write_text

logger = logging.getLogger(__name__)

DISTRIBUTED = "distributed"
CENTRALIZED = "centralized"


def round_log_frame(solution: CentralSolution) -> pd.DataFrame:
    """One row per bound-tightening round"""
    rows = []
    for record in solution.round_log:
        row = {
            "round": record.round,
            "lb": record.lb,
            "ub": record.ub,
            "gap": record.gap,
            "relaxed_objective": record.relaxed_objective,
            "nodes": record.nodes,
        }
        for j, (price, (lo, hi)) in enumerate(zip(record.prices, record.activated)):
            row[f"price_{j}"] = price
            row[f"interval_lo_{j}"] = lo
            row[f"interval_hi_{j}"] = hi
        rows.append(row)
    return pd.DataFrame(rows)


def comparison_frame(equilibrium: EquilibriumResult, solution: CentralSolution) -> pd.DataFrame:
    """Per-MSP price, sold bandwidth and revenue of both schemes"""
    rows = []
    for j, price in enumerate(equilibrium.prices.prices):
        rows.append(
            {
                "scheme": DISTRIBUTED,
                "msp": j,
                "price": price,
                "bandwidth": sum(row[j] for row in equilibrium.sales),
                "probability": equilibrium.probabilities[0][j],
                "served_users": sum(1 for row in equilibrium.sales if row[j] > 0),
                "revenue": equilibrium.revenues[j],
            }
        )
    for j, price in enumerate(solution.prices):
        rows.append(
            {
                "scheme": CENTRALIZED,
                "msp": j,
                "price": price,
                "bandwidth": sum(row[j] for row in solution.sales),
                "probability": float("nan"),
                "served_users": solution.served_users[j],
                "revenue": solution.revenues[j],
            }
        )
    return pd.DataFrame(rows)


def decisions_frame(equilibrium: EquilibriumResult, solution: CentralSolution) -> pd.DataFrame:
    """Follower purchase from every MSP under both schemes"""
    rows = []
    for i, (sales, probs) in enumerate(zip(equilibrium.sales, equilibrium.probabilities)):
        for j, (s, prob) in enumerate(zip(sales, probs)):
            rows.append({"scheme": DISTRIBUTED, "user": i, "msp": j, "sales": s, "weight": prob})
    for i, (sales, assoc) in enumerate(zip(solution.sales, solution.association)):
        for j, (s, x) in enumerate(zip(sales, assoc)):
            rows.append({"scheme": CENTRALIZED, "user": i, "msp": j, "sales": s, "weight": float(x)})
    return pd.DataFrame(rows)


class ExportService:
    """Writes result tables and models under one output directory"""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)

    def _path(self, name: str) -> Path:
        return self.out_dir / name

    def export_frame(self, frame: pd.DataFrame, name: str) -> Path:
        """
        Write a table as CSV

        Args:
            frame: Table to write
            name: File name relative to the output directory

        Returns:
            Path to the written file
        """
        path = self._path(name)
        try:
            atomic_write_text(path, frame.to_csv(index=False))
            logger.info(f"Table exported to {path}")
            return path
        except OSError as e:
            logger.error(f"Error exporting table to {path}: {e}")
            raise ScenarioIOError(f"cannot write {path}: {e}") from e

    def export_model(self, model: BaseModel, name: str) -> Path:
        path = self._path(name)
        try:
            atomic_write_text(path, model.model_dump_json(indent=2))
            logger.info(f"Result exported to {path}")
            return path
        except OSError as e:
            logger.error(f"Error exporting result to {path}: {e}")
            raise ScenarioIOError(f"cannot write {path}: {e}") from e

    def export_json(self, payload: Any, name: str) -> Path:
        path = self._path(name)
        try:
            atomic_write_text(path, json.dumps(payload, indent=2))
            logger.info(f"Report exported to {path}")
            return path
        except OSError as e:
            logger.error(f"Error exporting report to {path}: {e}")
            raise ScenarioIOError(f"cannot write {path}: {e}") from e

    def get_comparison_summary(
        self, equilibrium: Optional[EquilibriumResult], solution: Optional[CentralSolution]
    ) -> Dict[str, Any]:
        """Headline numbers of a compare run"""
        summary: Dict[str, Any] = {}
        if equilibrium is not None:
            summary["distributed_total"] = equilibrium.total_revenue
            summary["distributed_converged"] = equilibrium.converged
            summary["distributed_iterations"] = equilibrium.iterations
        if solution is not None:
            summary["centralized_total"] = solution.total_revenue
            summary["centralized_objective"] = solution.objective
            summary["centralized_gap"] = solution.gap
            summary["centralized_rounds"] = solution.rounds
            summary["centralized_termination"] = solution.termination.value
        if equilibrium is not None and solution is not None and equilibrium.total_revenue > 0:
            summary["centralized_gain"] = solution.total_revenue / equilibrium.total_revenue - 1.0
        return summary
