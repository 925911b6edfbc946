"""Replay fixtures rebuilt from the reference per-trial totals.

Per-cell event counts are not available, so events are spread over cells
in an arbitrary but fixed way that sums to the reference attack totals.
"""

from honeytrial.allocation import AllocationPlan
from honeytrial.records import Arm
from honeytrial.report import StageResult, TrialReport
from honeytrial.stat_core import RiskRateTable

REGIONS = ("east-1", "east-2", "west-1", "west-2")
STAGE_MS = 240 * 60_000


def _plan(control, corrupted):
    counts = {}
    for r, c, x in zip(REGIONS, control, corrupted):
        counts[(r, Arm.CONTROL)] = c
        counts[(r, Arm.CORRUPTED)] = x
    return AllocationPlan(counts=counts, n_total=sum(control) + sum(corrupted))


def _spread(plan, attacks):
    """Assign ``attacks`` events to cells, corrupted first, never above a cell's size."""
    events = {cell: 0 for cell in plan.counts}
    order = sorted(plan.counts, key=lambda c: (c[1] is Arm.CONTROL, REGIONS.index(c[0])))
    while attacks:
        for cell in order:
            if attacks and events[cell] < plan.counts[cell]:
                events[cell] += 1
                attacks -= 1
    return events


def _report(method, plans, attacks_per_stage):
    stages = [
        StageResult(index=k, plan=p, started_at=k * STAGE_MS, duration=STAGE_MS,
                    events=_spread(p, a), curves={}, risk_rates=RiskRateTable())
        for k, (p, a) in enumerate(zip(plans, attacks_per_stage))
    ]
    return TrialReport.from_stages(method=method, seed=0, stages=stages, stop_reason="completed",
                                   initial_n_total=plans[0].n_total,
                                   config={"regions": list(REGIONS)})


def adaptive_replay():
    plans = [_plan([6] * 4, [6] * 4), _plan([4, 4, 0, 0], [8, 12, 8, 16]),
             _plan([0] * 4, [2, 5, 8, 4])]
    return _report("adaptive", plans, [20, 20, 10])


def rct_replay():
    return _report("rct", [_plan([6] * 4, [6] * 4)] * 3, [14, 14, 14])


def vanilla_replay():
    return _report("vanilla", [_plan([0] * 4, [35] * 4)], [137])
