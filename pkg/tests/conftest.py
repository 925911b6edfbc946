from decimal import Decimal

import pytest

from honeytrial import ErrorRates, IncidencePair, StudyConfig
from honeytrial.records import Arm

REGIONS = ("east-1", "east-2", "west-1", "west-2")
MIN = 60_000


def make_config(**overrides):
    base = dict(
        method="rct",
        budget_cap_participants=200,
        n_stages=3,
        stage_duration=240 * MIN,
        regions=REGIONS,
        error_rates=ErrorRates(0.05, 0.10),
        initial_incidence=IncidencePair(0.01, 0.4),
        min_corrupted_arm=10,
        budget_currency=Decimal("650"),
        unit_cost=Decimal("3.25"),
        rng_seed=7,
    )
    base.update(overrides)
    return StudyConfig(**base)


@pytest.fixture
def reference_config():
    return make_config()


def all_cells(regions=REGIONS):
    return [(r, a) for r in regions for a in Arm]


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
