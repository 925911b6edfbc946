"""Deterministic honeypot fleets implementing the engine's driver contract.

Two drivers share one bookkeeping core: :class:`SimulatedFleet` draws an
exponential time-to-compromise per participant, :class:`ScriptedFleet`
replays a fixed list of events.
"""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .allocation import AllocationPlan
from .errors import DriverError, DuplicateDeployError, UnknownStageError
from .records import ARMS, Arm, Cell

log = logging.getLogger(__name__)

_U64 = (1 << 64) - 1


@dataclass
class HazardSpec:
    """Compromise hazards, in events per participant per stage duration.

    ``stage_rates`` is a piecewise-constant schedule of per-arm overrides:
    an entry for stage ``k`` applies to stage ``k`` and every later stage
    until the next entry. Onset delays are in milliseconds.
    """

    per_cell_rate: Dict[Cell, float]
    region_onset_delay: Dict[str, int] = field(default_factory=dict)
    seed: int = 0
    stage_rates: Dict[int, Dict[Arm, float]] = field(default_factory=dict)

    def __post_init__(self):
        rates = list(self.per_cell_rate.values())
        rates += [r for sched in self.stage_rates.values() for r in sched.values()]
        if any(r < 0 for r in rates):
            raise ValueError("hazard rates must be nonnegative")
        if any(d < 0 for d in self.region_onset_delay.values()):
            raise ValueError("onset delays must be nonnegative")

    def rate(self, stage: int, region: str, arm: Arm) -> float:
        applicable = [k for k in self.stage_rates if k <= stage and arm in self.stage_rates[k]]
        if applicable:
            return self.stage_rates[max(applicable)][arm]
        return self.per_cell_rate.get((region, arm), 0.0)


@dataclass(frozen=True)
class ScriptedEvent:
    stage: int
    region: str
    arm: Arm
    ordinal: int
    offset: int  # ms after deployment


@dataclass
class ScriptedOutcome:
    events: List[ScriptedEvent] = field(default_factory=list)
    anomalies: Dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for ev in self.events:
            key = (ev.stage, ev.region, Arm(ev.arm), ev.ordinal)
            if key in seen:
                raise ValueError(f"participant {key} scripted with more than one event")
            if ev.offset < 0 or ev.ordinal < 0 or ev.stage < 0:
                raise ValueError(f"scripted event {ev} has a negative field")
            seen.add(key)


@dataclass
class _Participant:
    pid: str
    cell: Cell
    deployed_at: int
    offset: Optional[int]  # time-to-compromise in ms, None if never


@dataclass
class _Stage:
    participants: List[_Participant]
    end: Optional[int] = None
    batch: Optional[List[Tuple[str, int]]] = None
    cleaned: Set[str] = field(default_factory=set)


class _Fleet:
    def __init__(self):
        self._clock = 0
        self._stages: Dict[int, _Stage] = {}

    def now(self) -> int:
        return self._clock

    def wait(self, duration: int) -> None:
        if duration < 0:
            raise ValueError("cannot wait a negative duration")
        self._clock += int(duration)

    def _offset(self, stage: int, region: str, arm: Arm, ordinal: int) -> Optional[int]:
        raise NotImplementedError

    def deploy_cohort(self, plan: AllocationPlan, stage_index: int) -> List[str]:
        if stage_index in self._stages:
            raise DuplicateDeployError(f"stage {stage_index} was already deployed")
        participants = []
        for (region, arm), count in plan.counts.items():
            for ordinal in range(count):
                pid = f"hp-s{stage_index + 1:02d}-{region}-{arm.value}-{ordinal:04d}"
                participants.append(_Participant(
                    pid, (region, arm), self._clock,
                    self._offset(stage_index, region, arm, ordinal)))
        self._stages[stage_index] = _Stage(participants)
        return [p.pid for p in participants]

    def _stage(self, stage_index: int) -> _Stage:
        try:
            return self._stages[stage_index]
        except KeyError:
            raise UnknownStageError(f"stage {stage_index} was never deployed") from None

    def collect_stage(self, stage_index: int) -> List[Tuple[str, int]]:
        """Events up to the moment of the first collection; later calls repeat it."""
        st = self._stage(stage_index)
        if st.batch is None:
            st.end = self._clock
            st.batch = sorted(
                ((p.pid, p.deployed_at + p.offset) for p in st.participants
                 if p.offset is not None and p.deployed_at + p.offset <= st.end),
                key=lambda e: (e[1], e[0]))
        return list(st.batch)

    def cleanup(self, stage_index: int) -> List[str]:
        """Terminate survivors; returns ids newly censored at stage end."""
        st = self._stage(stage_index)
        if st.batch is None:
            raise DriverError(f"stage {stage_index} must be collected before cleanup")
        evented = {pid for pid, _ in st.batch}
        fresh = [p.pid for p in st.participants if p.pid not in evented and p.pid not in st.cleaned]
        st.cleaned.update(fresh)
        return fresh


class SimulatedFleet(_Fleet):
    """Exponential compromise times, one keyed random substream per participant."""

    def __init__(self, spec: HazardSpec, stage_duration: int):
        super().__init__()
        if stage_duration <= 0:
            raise ValueError("stage_duration must be positive")
        for region, delay in spec.region_onset_delay.items():
            if delay >= stage_duration:
                raise ValueError(f"onset delay for {region} must be shorter than a stage")
        self.spec = spec
        self.stage_duration = stage_duration

    def _offset(self, stage: int, region: str, arm: Arm, ordinal: int) -> Optional[int]:
        rate = self.spec.rate(stage, region, arm)
        if rate <= 0.0:
            return None
        key = [self.spec.seed & _U64, stage, zlib.crc32(region.encode()), ARMS.index(arm), ordinal]
        draw = np.random.default_rng(key).exponential(1.0 / rate)
        return self.spec.region_onset_delay.get(region, 0) + int(draw * self.stage_duration)


class ScriptedFleet(_Fleet):
    """Replays :class:`ScriptedOutcome` events.

    Events addressed to a participant ordinal beyond what the plan deployed
    are skipped, since adaptive plans are not known when a script is written.
    """

    def __init__(self, outcome: ScriptedOutcome):
        super().__init__()
        self.outcome = outcome
        self._script = {(e.stage, e.region, Arm(e.arm), e.ordinal): e.offset for e in outcome.events}

    def _offset(self, stage: int, region: str, arm: Arm, ordinal: int) -> Optional[int]:
        return self._script.get((stage, region, arm, ordinal))

    def deploy_cohort(self, plan: AllocationPlan, stage_index: int) -> List[str]:
        ids = super().deploy_cohort(plan, stage_index)
        dropped = [e for e in self.outcome.events
                   if e.stage == stage_index and e.ordinal >= plan.count(e.region, Arm(e.arm))]
        if dropped:
            log.debug("stage %d: %d scripted events address undeployed participants",
                      stage_index, len(dropped))
        return ids

    def anomaly(self, stage_index: int) -> Optional[str]:
        return self.outcome.anomalies.get(stage_index)


def scripted(events: Iterable[Sequence], anomalies: Optional[Mapping[int, str]] = None) -> ScriptedFleet:
    """Shorthand: ``scripted([(stage, region, arm, ordinal, offset_ms), ...])``."""
    return ScriptedFleet(ScriptedOutcome(
        events=[ScriptedEvent(s, r, Arm(a), o, off) for s, r, a, o, off in events],
        anomalies=dict(anomalies or {})))
