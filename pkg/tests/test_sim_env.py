import math

import pytest

from honeytrial.allocation import AllocationPlan, equal_split
from honeytrial.errors import DriverError, DuplicateDeployError, UnknownStageError
from honeytrial.records import Arm
from honeytrial.sim_env import HazardSpec, ScriptedOutcome, SimulatedFleet, scripted

from conftest import REGIONS

STAGE = 240 * 60_000
C, X = Arm.CONTROL, Arm.CORRUPTED


def one_cell_plan(n, region="east-1", arm=X):
    return AllocationPlan(counts={(region, arm): n}, n_total=n)


def run_stage(fleet, plan, stage=0, duration=STAGE):
    ids = fleet.deploy_cohort(plan, stage)
    fleet.wait(duration)
    return ids, fleet.collect_stage(stage), fleet.cleanup(stage)


def spec(rate, arm=X, **kw):
    return HazardSpec(per_cell_rate={(r, a): rate if a is arm else 0.0
                                     for r in REGIONS for a in Arm}, **kw)


class TestSimulatedFleet:
    def test_zero_hazard_censors_everyone(self):
        fleet = SimulatedFleet(spec(0.0), STAGE)
        ids, batch, censored = run_stage(fleet, equal_split(48, REGIONS))
        assert batch == []
        assert sorted(censored) == sorted(ids)

    def test_exponential_fraction(self):
        fleet = SimulatedFleet(spec(math.log(2), seed=11), STAGE)
        _, batch, _ = run_stage(fleet, one_cell_plan(10_000))
        assert len(batch) / 10_000 == pytest.approx(0.5, abs=0.02)

    @pytest.mark.parametrize("rate, delay_min", [(1.0, 0), (0.7, 60), (2.0, 180)])
    def test_fraction_with_onset_delay(self, rate, delay_min):
        delay = delay_min * 60_000
        fleet = SimulatedFleet(spec(rate, seed=3, region_onset_delay={"east-1": delay}), STAGE)
        _, batch, _ = run_stage(fleet, one_cell_plan(10_000))
        p = 1 - math.exp(-rate * (1 - delay / STAGE))
        se = math.sqrt(p * (1 - p) / 10_000)
        assert abs(len(batch) / 10_000 - p) <= 3 * se

    def test_onset_delay_bounds_event_times(self):
        delay = 90 * 60_000
        fleet = SimulatedFleet(spec(5.0, region_onset_delay={"west-1": delay}), STAGE)
        ids = fleet.deploy_cohort(one_cell_plan(500, region="west-1"), 0)
        fleet.wait(STAGE)
        batch = fleet.collect_stage(0)
        assert batch and min(ts for _, ts in batch) >= delay

    def test_events_within_stage_and_unique(self):
        fleet = SimulatedFleet(spec(1.5), STAGE)
        fleet.wait(1000)
        ids, batch, censored = run_stage(fleet, equal_split(200, REGIONS))
        assert len({pid for pid, _ in batch}) == len(batch)
        assert all(1000 <= ts <= 1000 + STAGE for _, ts in batch)
        assert set(censored) | {pid for pid, _ in batch} == set(ids)
        assert not set(censored) & {pid for pid, _ in batch}

    def test_order_independent(self):
        plan = equal_split(48, REGIONS)
        reversed_plan = AllocationPlan(counts=dict(reversed(list(plan.counts.items()))), n_total=48)
        a, b = SimulatedFleet(spec(1.0, seed=5), STAGE), SimulatedFleet(spec(1.0, seed=5), STAGE)
        run_stage(a, plan)
        run_stage(b, reversed_plan)
        assert sorted(a.collect_stage(0)) == sorted(b.collect_stage(0))

    def test_seed_changes_draws(self):
        a, b = SimulatedFleet(spec(1.0, seed=1), STAGE), SimulatedFleet(spec(1.0, seed=2), STAGE)
        assert run_stage(a, equal_split(48, REGIONS))[1] != run_stage(b, equal_split(48, REGIONS))[1]

    def test_stage_rate_schedule(self):
        s = HazardSpec(per_cell_rate={("e", C): 0.5}, stage_rates={1: {C: 0.0}, 3: {C: 2.0}})
        assert [s.rate(k, "e", C) for k in range(5)] == [0.5, 0.0, 0.0, 2.0, 2.0]

    def test_delay_must_be_shorter_than_stage(self):
        with pytest.raises(ValueError):
            SimulatedFleet(spec(1.0, region_onset_delay={"east-1": STAGE}), STAGE)

    def test_negative_rate_rejected(self):
        with pytest.raises(ValueError):
            spec(-1.0)


class TestDriverContract:
    def test_duplicate_deploy(self):
        fleet = SimulatedFleet(spec(1.0), STAGE)
        fleet.deploy_cohort(one_cell_plan(2), 0)
        with pytest.raises(DuplicateDeployError):
            fleet.deploy_cohort(one_cell_plan(2), 0)

    @pytest.mark.parametrize("method", ["collect_stage", "cleanup"])
    def test_unknown_stage(self, method):
        with pytest.raises(UnknownStageError):
            getattr(SimulatedFleet(spec(1.0), STAGE), method)(4)

    def test_cleanup_needs_collect(self):
        fleet = SimulatedFleet(spec(1.0), STAGE)
        fleet.deploy_cohort(one_cell_plan(2), 0)
        with pytest.raises(DriverError):
            fleet.cleanup(0)

    def test_collect_idempotent(self):
        fleet = SimulatedFleet(spec(1.0), STAGE)
        fleet.deploy_cohort(one_cell_plan(50), 0)
        fleet.wait(STAGE)
        first = fleet.collect_stage(0)
        fleet.wait(10 * STAGE)
        assert fleet.collect_stage(0) == first

    def test_cleanup_complement_then_empty(self):
        fleet = scripted([(0, "east-1", "corrupted", i, 1000 * (i + 1)) for i in range(4)])
        ids, batch, censored = run_stage(fleet, one_cell_plan(10))
        assert len(batch) == 4 and len(censored) == 6
        assert fleet.cleanup(0) == []

    def test_cleanup_nothing_deployed(self):
        fleet = scripted([])
        _, batch, censored = run_stage(fleet, AllocationPlan(counts={}, n_total=0))
        assert batch == [] and censored == []


class TestScriptedFleet:
    def test_passthrough(self):
        events = [(0, "east-1", "corrupted", 0, 5000), (0, "west-1", "control", 1, 7000),
                  (0, "east-1", "corrupted", 2, 100)]
        fleet = scripted(events)
        fleet.wait(123)
        ids, batch, _ = run_stage(fleet, equal_split(24, REGIONS))
        assert len(batch) == 3
        assert sorted(ts - 123 for _, ts in batch) == [100, 5000, 7000]

    def test_undeployed_ordinals_skipped(self):
        fleet = scripted([(0, "east-1", "corrupted", 9, 10), (0, "east-1", "control", 0, 10)])
        _, batch, _ = run_stage(fleet, one_cell_plan(3))
        assert batch == []

    def test_late_event_is_censored(self):
        fleet = scripted([(0, "east-1", "corrupted", 0, STAGE + 1)])
        _, batch, censored = run_stage(fleet, one_cell_plan(1))
        assert batch == [] and len(censored) == 1

    def test_anomaly_signal(self):
        fleet = scripted([], anomalies={1: "unexpected exploit"})
        assert fleet.anomaly(0) is None
        assert fleet.anomaly(1) == "unexpected exploit"

    def test_duplicate_participant_rejected(self):
        with pytest.raises(ValueError):
            scripted([(0, "e", "control", 0, 1), (0, "e", "control", 0, 2)])

    def test_outcome_defaults(self):
        assert ScriptedOutcome().events == []
