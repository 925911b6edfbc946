"""Stage loops for the vanilla, randomized-control and adaptive trial methods."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

from .allocation import AllocationPlan, equal_split, weighted_split
from .errors import (AllZeroRatesError, ConfigInvariantError, DegenerateIncidenceError,
                     DriverError, NonPositiveBudgetError)
from .records import ARMS, Arm, Cell, ParticipantRecord
from .report import StageResult, TrialReport
from .stat_core import (ErrorRates, IncidencePair, KmCurve, km_estimate, marginal_or,
                        power_sample_size, risk_rates)

log = logging.getLogger(__name__)


class Method(str, Enum):
    VANILLA = "vanilla"
    RCT = "rct"
    ADAPTIVE = "adaptive"


class StopReason(str, Enum):
    BUDGET = "budget"
    SMALL_ARM = "small_arm"
    FUTILITY_DEGENERATE = "futility_degenerate_incidence"
    FUTILITY_ZERO_RATES = "futility_zero_rates"
    CONVERGENCE = "convergence"
    ANOMALY = "anomaly"
    COMPLETED = "completed"

    @property
    def endpoint(self) -> Optional[str]:
        """Pre-registered endpoint class: a (budget), b (small arm) or c (convergence)."""
        return _ENDPOINT_CLASS.get(self)


_ENDPOINT_CLASS = {
    StopReason.BUDGET: "a",
    StopReason.SMALL_ARM: "b",
    StopReason.FUTILITY_DEGENERATE: "b",
    StopReason.FUTILITY_ZERO_RATES: "b",
    StopReason.CONVERGENCE: "c",
}


@dataclass(frozen=True)
class StudyConfig:
    """Pre-registered study synopsis. Durations are integer milliseconds."""

    method: Method
    budget_cap_participants: int
    n_stages: int
    stage_duration: int
    regions: Tuple[str, ...]
    error_rates: ErrorRates
    initial_incidence: IncidencePair
    min_corrupted_arm: int = 0
    budget_currency: Optional[Decimal] = None
    unit_cost: Optional[Decimal] = None
    event_time_quantization: Optional[int] = None
    # fixed per-stage total for RCT and the first adaptive stage; None means
    # use the power-analysis sample size
    stage_n_total: Optional[int] = None
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "regions", tuple(self.regions))
        if self.budget_cap_participants <= 0:
            raise ConfigInvariantError("budget_cap_participants", "must be positive")
        if self.n_stages < 1:
            raise ConfigInvariantError("n_stages", "must be at least 1")
        if self.stage_duration <= 0:
            raise ConfigInvariantError("stage_duration", "must be positive")
        if not self.regions:
            raise ConfigInvariantError("regions", "at least one region is required")
        if len(set(self.regions)) != len(self.regions):
            raise ConfigInvariantError("regions", "region names must be unique")
        if self.min_corrupted_arm < 0:
            raise ConfigInvariantError("min_corrupted_arm", "must be nonnegative")
        if self.budget_currency is not None and self.budget_currency <= 0:
            raise ConfigInvariantError("budget_currency", "must be positive")
        if self.budget_currency is not None and (self.unit_cost is None or self.unit_cost <= 0):
            raise ConfigInvariantError("unit_cost", "a positive unit cost is required with a currency budget")
        if self.event_time_quantization is not None and self.event_time_quantization <= 0:
            raise ConfigInvariantError("event_time_quantization", "must be positive")
        if self.stage_n_total is not None and (self.stage_n_total <= 0 or self.stage_n_total % 2):
            raise ConfigInvariantError("stage_n_total", "must be a positive even integer")
        if self.method is not Method.VANILLA and self.initial_incidence.degenerate:
            raise ConfigInvariantError("initial_incidence", "p1 and p2 must differ")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method.value,
            "budget_cap_participants": self.budget_cap_participants,
            "budget_currency": None if self.budget_currency is None else str(self.budget_currency),
            "unit_cost": None if self.unit_cost is None else str(self.unit_cost),
            "n_stages": self.n_stages,
            "stage_duration_ms": self.stage_duration,
            "regions": list(self.regions),
            "error_rates": {"alpha": self.error_rates.alpha, "beta": self.error_rates.beta},
            "initial_incidence": {"p1": self.initial_incidence.p1, "p2": self.initial_incidence.p2},
            "min_corrupted_arm": self.min_corrupted_arm,
            "event_time_quantization_ms": self.event_time_quantization,
            "stage_n_total": self.stage_n_total,
            "rng_seed": self.rng_seed,
        }


@dataclass
class TrialState:
    current_incidence: IncidencePair
    stage_index: int = 0
    cumulative_deployed: int = 0
    last_plan: Optional[AllocationPlan] = None
    stop_reason: Optional[StopReason] = None
    records: List[ParticipantRecord] = field(default_factory=list)

    def stop(self, reason: StopReason) -> None:
        if self.stop_reason is not None:
            raise RuntimeError(f"trial already stopped ({self.stop_reason.value})")
        self.stop_reason = reason


class EnvironmentDriver(Protocol):
    """What the engine needs from a fleet, simulated or real.

    ``deploy_cohort`` returns participant ids in plan order: cells in the
    plan's iteration order, ``count`` ids per cell. Drivers may also expose
    ``anomaly(stage_index) -> Optional[str]`` to force an immediate stop.
    """

    def now(self) -> int: ...

    def wait(self, duration: int) -> None: ...

    def deploy_cohort(self, plan: AllocationPlan, stage_index: int) -> List[str]: ...

    def collect_stage(self, stage_index: int) -> List[Tuple[str, int]]: ...

    def cleanup(self, stage_index: int) -> List[str]: ...


def get_num_to_deploy(config: StudyConfig) -> int:
    """Largest fleet the budget affords, never above the participant cap."""
    cap = config.budget_cap_participants
    if cap <= 0:
        raise NonPositiveBudgetError("participant cap must be positive")
    if config.budget_currency is None:
        return cap
    if config.budget_currency <= 0:
        raise NonPositiveBudgetError("currency budget must be positive")
    if config.unit_cost is None or config.unit_cost <= 0:
        raise NonPositiveBudgetError("unit cost must be positive")
    n = min(int(Decimal(config.budget_currency) // Decimal(config.unit_cost)), cap)
    if n <= 0:
        raise NonPositiveBudgetError(
            f"budget {config.budget_currency} does not cover one participant at {config.unit_cost}")
    return n


def evaluate_endpoints(state: TrialState, next_plan: AllocationPlan,
                       config: StudyConfig) -> Optional[StopReason]:
    """First firing endpoint for the proposed next stage, checked in order a, b, c."""
    if state.cumulative_deployed + next_plan.n_total > config.budget_cap_participants:
        return StopReason.BUDGET
    if next_plan.arm_total(Arm.CORRUPTED) < config.min_corrupted_arm:
        return StopReason.SMALL_ARM
    if (config.method is Method.ADAPTIVE and state.last_plan is not None
            and next_plan.counts == state.last_plan.counts):
        return StopReason.CONVERGENCE
    return None


def _quantize(offset: int, step: Optional[int], duration: int) -> int:
    # a poller sees the event at the first check at or after it happened
    if step is None:
        return offset
    return min(math.ceil(offset / step) * step, duration)


def _execute_stage(driver: EnvironmentDriver, plan: AllocationPlan, stage_index: int,
                   duration: int, config: StudyConfig) -> Tuple[int, List[ParticipantRecord]]:
    deployed_at = driver.now()
    ids = driver.deploy_cohort(plan, stage_index)
    if len(ids) != plan.n_total or len(set(ids)) != len(ids):
        raise DriverError(f"driver returned {len(ids)} ids for a plan of {plan.n_total}")
    cell_of: Dict[str, Cell] = {}
    it = iter(ids)
    for cell, count in plan.counts.items():
        for _ in range(count):
            cell_of[next(it)] = cell

    driver.wait(duration)
    stage_end = driver.now()
    batch = sorted(driver.collect_stage(stage_index), key=lambda e: (e[1], e[0]))
    event_at: Dict[str, int] = {}
    for pid, ts in batch:
        if pid not in cell_of:
            raise DriverError(f"event for unknown participant {pid!r}")
        if pid in event_at:
            raise DriverError(f"participant {pid!r} reported more than one event")
        if not deployed_at <= ts <= stage_end:
            raise DriverError(f"event for {pid!r} at {ts} lies outside the stage window")
        offset = _quantize(ts - deployed_at, config.event_time_quantization, stage_end - deployed_at)
        event_at[pid] = deployed_at + offset

    censored = set(driver.cleanup(stage_index))
    if censored != set(cell_of) - set(event_at):
        raise DriverError("cleanup confirmations do not match the non-evented participants")

    records = []
    for pid in ids:
        region, arm = cell_of[pid]
        ev = event_at.get(pid)
        records.append(ParticipantRecord(
            id=pid, region=region, arm=arm, stage=stage_index, deployed_at=deployed_at,
            event_at=ev, censored_at=None if ev is not None else stage_end))
    return deployed_at, records


def _stage_result(index: int, plan: AllocationPlan, started_at: int, duration: int,
                  records: Sequence[ParticipantRecord]) -> StageResult:
    by_cell: Dict[Cell, List[ParticipantRecord]] = {}
    for r in records:
        by_cell.setdefault(r.cell, []).append(r)
    curves: Dict[Cell, KmCurve] = {cell: km_estimate(rs, duration) for cell, rs in by_cell.items()}
    events = {cell: sum(1 for r in by_cell.get(cell, ()) if r.evented) for cell in plan.counts}
    return StageResult(index=index, plan=plan, started_at=started_at, duration=duration,
                       events=events, curves=curves, risk_rates=risk_rates(curves, records))


def _anomaly(driver: EnvironmentDriver, stage_index: int) -> Optional[str]:
    probe = getattr(driver, "anomaly", None)
    return probe(stage_index) if probe is not None else None


class _Run:
    """Shared bookkeeping for a single trial execution."""

    def __init__(self, config: StudyConfig, driver: EnvironmentDriver, event_sink=None):
        self.config = config
        self.driver = driver
        self.sink = event_sink
        self.state = TrialState(current_incidence=config.initial_incidence)
        self.stages: List[StageResult] = []

    def deploy(self, plan: AllocationPlan, duration: int) -> StageResult:
        k = self.state.stage_index
        if self.state.cumulative_deployed + plan.n_total > self.config.budget_cap_participants:
            raise RuntimeError("refusing to deploy past the participant cap")
        log.info("stage %d: deploying %d participants", k + 1, plan.n_total)
        started, records = _execute_stage(self.driver, plan, k, duration, self.config)
        self.state.cumulative_deployed += plan.n_total
        self.state.last_plan = plan
        self.state.records.extend(records)
        if self.sink is not None:
            self.sink(records)
        result = _stage_result(k, plan, started, duration, records)
        self.stages.append(result)
        self.state.stage_index += 1
        return result

    def finish(self, initial_n_total: int) -> TrialReport:
        reason = self.state.stop_reason or StopReason.COMPLETED
        log.info("trial stopped: %s", reason.value)
        return TrialReport.from_stages(
            method=self.config.method.value, seed=self.config.rng_seed, stages=self.stages,
            stop_reason=reason.value, initial_n_total=initial_n_total,
            config=self.config.to_dict())


def run_vanilla(config: StudyConfig, env: EnvironmentDriver, event_sink=None) -> TrialReport:
    """Deploy only corrupted systems for one unbroken window; no interim analysis."""
    if config.method is not Method.VANILLA:
        raise ValueError("run_vanilla needs method=vanilla")
    n = get_num_to_deploy(config)
    corrupted = equal_split(2 * n, config.regions)
    plan = AllocationPlan(
        counts={(r, arm): corrupted.count(r, Arm.CORRUPTED) if arm is Arm.CORRUPTED else 0
                for r in config.regions for arm in ARMS},
        n_total=n)
    run = _Run(config, env, event_sink)
    run.deploy(plan, config.stage_duration * config.n_stages)
    if _anomaly(env, 0):
        run.state.stop(StopReason.ANOMALY)
    return run.finish(n)


def _initial_plan(config: StudyConfig) -> AllocationPlan:
    n = config.stage_n_total or power_sample_size(config.initial_incidence, config.error_rates)
    return equal_split(n, config.regions)


def _futile_report(config: StudyConfig, env: EnvironmentDriver) -> TrialReport:
    run = _Run(config, env)
    run.state.stop(StopReason.FUTILITY_DEGENERATE)
    return run.finish(0)


def run_rct(config: StudyConfig, env: EnvironmentDriver, event_sink=None) -> TrialReport:
    """Fixed equal-split plan every stage; incidences are never revised."""
    if config.method is not Method.RCT:
        raise ValueError("run_rct needs method=rct")
    try:
        plan = _initial_plan(config)
    except DegenerateIncidenceError:
        return _futile_report(config, env)
    run = _Run(config, env, event_sink)
    state = run.state
    reason = evaluate_endpoints(state, plan, config)
    if reason is not None:
        state.stop(reason)
    while state.stop_reason is None:
        stage = run.deploy(plan, config.stage_duration)
        if _anomaly(env, stage.index):
            state.stop(StopReason.ANOMALY)
        elif state.stage_index >= config.n_stages:
            state.stop(StopReason.COMPLETED)
        else:
            reason = evaluate_endpoints(state, plan, config)
            if reason is not None:
                stage.verdict = reason.value
                state.stop(reason)
    return run.finish(plan.n_total)


def _interim(stage: StageResult, state: TrialState, config: StudyConfig):
    """Revise incidences from one stage and propose the next plan.

    Returns ``(plan, None)`` or ``(None, futility_reason)``.
    """
    rates = stage.risk_rates
    # an arm nobody was deployed to keeps its previous incidence
    incidence = IncidencePair(
        marginal_or(rates, Arm.CONTROL, state.current_incidence.p1),
        marginal_or(rates, Arm.CORRUPTED, state.current_incidence.p2))
    state.current_incidence = incidence
    stage.incidence = incidence
    try:
        n_next = power_sample_size(incidence, config.error_rates)
    except DegenerateIncidenceError:
        return None, StopReason.FUTILITY_DEGENERATE
    stage.next_n_total = n_next
    try:
        return weighted_split(n_next, rates, config.regions), None
    except AllZeroRatesError:
        return None, StopReason.FUTILITY_ZERO_RATES


def run_adaptive(config: StudyConfig, env: EnvironmentDriver, event_sink=None) -> TrialReport:
    """Equal split first, then reweight each stage by the previous stage's risk rates."""
    if config.method is not Method.ADAPTIVE:
        raise ValueError("run_adaptive needs method=adaptive")
    try:
        plan = _initial_plan(config)
    except DegenerateIncidenceError:
        return _futile_report(config, env)
    initial_n = plan.n_total
    run = _Run(config, env, event_sink)
    state = run.state
    reason = evaluate_endpoints(state, plan, config)
    if reason is not None:
        state.stop(reason)
    while state.stop_reason is None:
        stage = run.deploy(plan, config.stage_duration)
        if _anomaly(env, stage.index):
            state.stop(StopReason.ANOMALY)
            break
        if state.stage_index >= config.n_stages:
            state.stop(StopReason.COMPLETED)
            break
        next_plan, reason = _interim(stage, state, config)
        if reason is None:
            reason = evaluate_endpoints(state, next_plan, config)
        if reason is not None:
            stage.verdict = reason.value
            state.stop(reason)
        else:
            plan = next_plan
    return run.finish(initial_n)


RUNNERS = {Method.VANILLA: run_vanilla, Method.RCT: run_rct, Method.ADAPTIVE: run_adaptive}


def run_trial(config: StudyConfig, env: EnvironmentDriver, event_sink=None) -> TrialReport:
    return RUNNERS[config.method](config, env, event_sink)
