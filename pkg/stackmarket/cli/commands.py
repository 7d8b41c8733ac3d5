"""Sub-command implementations. Each takes a RunConfig and returns the files it wrote."""
import logging
from pathlib import Path
from typing import List, Optional

from stackmarket.core.exceptions import InvalidRange, NotConverged, RoundLimit
from stackmarket.models.central import CentralSolution
from stackmarket.models.equilibrium import EquilibriumResult
from stackmarket.models.oracle import OracleReport
from stackmarket.models.run import RunConfig
from stackmarket.models.scenario import Scenario, ScenarioRanges
from stackmarket.services.centralized_service import CentralizedService
from stackmarket.services.distributed_service import best_response_dynamics, trace_frame, verify_equilibrium
from stackmarket.services.export_service import ExportService, comparison_frame, decisions_frame, round_log_frame
from stackmarket.services.oracle_service import (
    MAX_ORACLE_MSPS,
    MAX_ORACLE_USERS,
    best_response_report,
    centralized_report,
    deviation_scan,
)
from stackmarket.services.scenario_service import (
    generate_scenario,
    load_scenario,
    save_scenario,
    with_price_cap,
    with_uniform_capacity,
)
from stackmarket.services.sweep_service import SweepService

logger = logging.getLogger(__name__)

ORACLE_DRAWS = 1000
ORACLE_RESPONSE_RESOLUTION = 1e-4
ORACLE_PRICE_RESOLUTION = 1e-3
ORACLE_DEVIATION_GRID = 1000


def resolve_scenario(config: RunConfig) -> Scenario:
    """Load --scenario, or generate one from --seed/--users/--msps, then apply overrides"""
    if config.scenario is not None:
        scenario = load_scenario(config.scenario)
    else:
        scenario = generate_scenario(config.users, config.msps, config.seed)
    if config.capacity is not None:
        scenario = with_uniform_capacity(scenario, config.capacity)
    if config.pmax is not None:
        scenario = with_price_cap(scenario, config.pmax)
    return scenario


def _export_equilibrium(export: ExportService, result: EquilibriumResult) -> List[Path]:
    return [
        export.export_model(result, "equilibrium.json"),
        export.export_frame(trace_frame(result), "distributed_trace.csv"),
    ]


def _export_central(export: ExportService, solution: CentralSolution) -> List[Path]:
    return [
        export.export_model(solution, "central_solution.json"),
        export.export_frame(round_log_frame(solution), "central_rounds.csv"),
    ]


def cmd_gen(config: RunConfig) -> List[Path]:
    ranges = ScenarioRanges(
        uniform_capacity=config.capacity,
        p_max=config.pmax if config.pmax is not None else ScenarioRanges().p_max,
    )
    scenario = generate_scenario(config.users, config.msps, config.seed, ranges)
    return [save_scenario(scenario, config.out / "scenario.json")]


def cmd_distributed(config: RunConfig) -> List[Path]:
    scenario = resolve_scenario(config)
    export = ExportService(config.out)
    try:
        result = best_response_dynamics(scenario, config.dynamics)
    except NotConverged as e:
        if e.result is not None:
            _export_equilibrium(export, e.result)
        raise
    report = verify_equilibrium(result, scenario, 10.0 * config.dynamics.convergence_tol, config.dynamics.price_floor)
    written = _export_equilibrium(export, result)
    if not report.passed:
        logger.error(f"Equilibrium checks failed: {report.model_dump()}")
        raise NotConverged("converged prices fail the equilibrium checks", result=result)
    return written


def cmd_centralized(config: RunConfig) -> List[Path]:
    scenario = resolve_scenario(config)
    export = ExportService(config.out)
    try:
        solution = CentralizedService(config.tightening).bound_tightening(scenario)
    except RoundLimit as e:
        if e.solution is not None:
            _export_central(export, e.solution)
        raise
    return _export_central(export, solution)


def cmd_compare(config: RunConfig) -> List[Path]:
    """Run both schemes; traces are written even when one of them fails to converge"""
    scenario = resolve_scenario(config)
    export = ExportService(config.out)
    written: List[Path] = []
    failure: Optional[Exception] = None

    try:
        equilibrium = best_response_dynamics(scenario, config.dynamics)
    except NotConverged as e:
        equilibrium, failure = e.result, e
    if equilibrium is not None:
        written += _export_equilibrium(export, equilibrium)

    try:
        solution = CentralizedService(config.tightening).bound_tightening(scenario)
    except RoundLimit as e:
        solution, failure = e.solution, failure or e
    if solution is not None:
        written += _export_central(export, solution)

    if equilibrium is not None and solution is not None:
        written.append(export.export_frame(comparison_frame(equilibrium, solution), "comparison.csv"))
        written.append(export.export_frame(decisions_frame(equilibrium, solution), "decisions.csv"))
    logger.info(f"Comparison: {export.get_comparison_summary(equilibrium, solution)}")
    if failure is not None:
        raise failure
    return written


def cmd_sweep(config: RunConfig) -> List[Path]:
    if config.sweep_axis is None or not config.sweep_values:
        raise InvalidRange("sweep needs --sweep-axis and --sweep-values")
    scenario = resolve_scenario(config)
    axis = config.sweep_axis
    export = ExportService(config.out)
    written: List[Path] = []

    def write_point(value: float, solution: CentralSolution) -> None:
        written.append(export.export_model(solution, f"points/{axis.value}_{len(written):03d}.json"))

    service = SweepService(config.tightening, config.dynamics, config.jobs)
    frame = service.run(axis, config.sweep_values, scenario, on_point=write_point)
    written.append(export.export_frame(frame, f"sweep_{axis.value}.csv"))
    return written


def cmd_oracle_check(config: RunConfig) -> List[Path]:
    """Brute-force the follower response, the equilibrium and, at small scale, the centralized optimum"""
    scenario = resolve_scenario(config)
    reports: List[OracleReport] = [best_response_report(ORACLE_DRAWS, ORACLE_RESPONSE_RESOLUTION, config.seed)]
    equilibrium = best_response_dynamics(scenario, config.dynamics)
    reports.append(deviation_scan(equilibrium.prices, scenario, ORACLE_DEVIATION_GRID, config.dynamics.price_floor))
    if scenario.n_users <= MAX_ORACLE_USERS and scenario.n_msps <= MAX_ORACLE_MSPS:
        solution = CentralizedService(config.tightening).bound_tightening(scenario)
        reports.append(centralized_report(scenario, solution.objective, ORACLE_PRICE_RESOLUTION))
    else:
        logger.info(f"Skipping centralized enumeration for {scenario.n_users} users and {scenario.n_msps} MSPs")
    for report in reports:
        logger.info(f"{report.target}: max abs error {report.max_abs_error:.3e} over {report.cases} cases")
    export = ExportService(config.out)
    return [export.export_json([r.model_dump() for r in reports], "oracle_report.json")]


COMMANDS = {
    "gen": cmd_gen,
    "distributed": cmd_distributed,
    "centralized": cmd_centralized,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "oracle-check": cmd_oracle_check,
}
