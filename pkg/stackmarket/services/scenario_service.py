"""Scenario generation, transformation and JSON persistence."""
import logging
import os
import tempfile
from pathlib import Path
from typing import Optional, Tuple, TypeVar, Union

import numpy as np

from stackmarket.core.exceptions import InvalidRange, ScenarioIOError
from stackmarket.models.scenario import MspProfile, Scenario, ScenarioRanges, UserProfile
from stackmarket.services.radio_service import min_bandwidth

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
Model = TypeVar("Model", Scenario, UserProfile, MspProfile)


def _draw(rng: np.random.Generator, bounds: Tuple[float, float], size: int, margin: float, name: str) -> np.ndarray:
    low, high = bounds
    if not low < high:
        raise InvalidRange(f"{name}: low {low} must be below high {high}")
    if high - low <= 2 * margin:
        raise InvalidRange(f"{name}: range narrower than the endpoint margin")
    return rng.uniform(low + margin, high - margin, size)


def generate_scenario(
    n_users: int,
    n_msps: int,
    seed: int,
    ranges: Optional[ScenarioRanges] = None,
) -> Scenario:
    """
    Draw a scenario with uniformly distributed player parameters

    Args:
        n_users: Number of users (>= 1)
        n_msps: Number of MSPs (>= 1)
        seed: Seed of the numpy generator; equal seeds give equal scenarios
        ranges: Draw bounds, defaults to the reference market setting

    Returns:
        Scenario

    Raises:
        InvalidRange: On empty player sets or unusable bounds
    """
    ranges = ranges or ScenarioRanges()
    if n_users < 1 or n_msps < 1:
        raise InvalidRange(f"need at least one user and one MSP, got {n_users} and {n_msps}")
    if seed < 0:
        raise InvalidRange(f"seed must be unsigned, got {seed}")
    if ranges.alpha[0] < 0 or ranges.quality[0] < 0 or ranges.quality[1] > 1:
        raise InvalidRange("alpha must be positive and quality must lie in (0, 1]")
    if ranges.s_min[0] < 0 or ranges.s_min[1] >= ranges.s_max[0]:
        raise InvalidRange("s_min range must be non-negative and lie below the s_max range")
    if ranges.uniform_capacity is None and not ranges.capacities:
        raise InvalidRange("no capacities to assign")

    rng = np.random.default_rng(seed)
    margin = ranges.margin
    alpha = _draw(rng, ranges.alpha, n_users, margin, "alpha")
    s_min = _draw(rng, ranges.s_min, n_users, margin, "s_min")
    s_max = _draw(rng, ranges.s_max, n_users, margin, "s_max")
    quality = _draw(rng, ranges.quality, n_msps, margin, "quality")

    users = [
        UserProfile(alpha=float(a), s_min=float(lo), s_max=float(hi))
        for a, lo, hi in zip(alpha, s_min, s_max)
    ]
    msps = []
    for j in range(n_msps):
        if ranges.uniform_capacity is not None:
            capacity = ranges.uniform_capacity
        else:
            capacity = ranges.capacities[j % len(ranges.capacities)]
        msps.append(MspProfile(quality=float(quality[j]), p_max=ranges.p_max, capacity=capacity))

    logger.debug(f"Generated scenario with {n_users} users and {n_msps} MSPs from seed {seed}")
    return Scenario(users=users, msps=msps, seed=seed)


def _updated(model: Model, **changes) -> Model:
    """Copy of a frozen model with some fields replaced, validated again"""
    return type(model).model_validate({**model.model_dump(), **changes})


def derive_min_bandwidths(scenario: Scenario) -> Scenario:
    """
    Replace s_min by the bandwidth the user's quality targets require

    Users holding both QoE targets and one link per MSP get the largest requirement
    over their links; other users keep their s_min.

    Raises:
        InvalidRange: If a derived requirement is not below s_max
    """
    users = []
    for i, user in enumerate(scenario.users):
        if user.qoe is None or not user.link_per_msp:
            users.append(user)
            continue
        required = max(min_bandwidth(user.qoe, link) for link in user.link_per_msp)
        if required >= user.s_max:
            raise InvalidRange(f"user {i} needs {required:.4f} MHz but s_max is {user.s_max}")
        users.append(_updated(user, s_min=required))
    return _updated(scenario, users=users)


def with_uniform_capacity(scenario: Scenario, capacity: Optional[float]) -> Scenario:
    msps = [_updated(msp, capacity=capacity) for msp in scenario.msps]
    return _updated(scenario, msps=msps)


def with_price_cap(scenario: Scenario, p_max: float) -> Scenario:
    msps = [_updated(msp, p_max=p_max) for msp in scenario.msps]
    return _updated(scenario, msps=msps)


def with_quality(scenario: Scenario, j: int, quality: float) -> Scenario:
    if not 0 < quality <= 1:
        raise InvalidRange(f"quality must lie in (0, 1], got {quality}")
    msps = list(scenario.msps)
    msps[j] = _updated(msps[j], quality=quality)
    return _updated(scenario, msps=msps)


def scale_alpha(scenario: Scenario, mean: float) -> Scenario:
    """Rescale every user's alpha so that their mean equals `mean`"""
    if mean <= 0:
        raise InvalidRange(f"mean alpha must be positive, got {mean}")
    current = float(np.mean([u.alpha for u in scenario.users]))
    factor = mean / current
    users = [_updated(u, alpha=u.alpha * factor) for u in scenario.users]
    return _updated(scenario, users=users)


def atomic_write_text(path: PathLike, text: str) -> Path:
    """Write text to a temporary sibling and rename it into place"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except Exception:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def save_scenario(scenario: Scenario, path: PathLike) -> Path:
    """
    Write a scenario as JSON

    Raises:
        ScenarioIOError: If the file cannot be written
    """
    try:
        written = atomic_write_text(path, scenario.model_dump_json(by_alias=True, indent=2))
        logger.info(f"Scenario written to {written}")
        return written
    except OSError as e:
        logger.error(f"Error writing scenario to {path}: {e}")
        raise ScenarioIOError(f"cannot write {path}: {e}") from e


def load_scenario(path: PathLike) -> Scenario:
    """
    Read a scenario JSON file

    Raises:
        ScenarioIOError: If the file is missing, unreadable or not a valid scenario
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
        return Scenario.model_validate_json(text)
    except OSError as e:
        logger.error(f"Error reading scenario {path}: {e}")
        raise ScenarioIOError(f"cannot read {path}: {e}") from e
    except ValueError as e:
        logger.error(f"Invalid scenario file {path}: {e}")
        raise ScenarioIOError(f"invalid scenario {path}: {e}") from e
