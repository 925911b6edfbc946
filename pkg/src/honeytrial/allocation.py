"""Turn a total sample size into integer (region, arm) cohort counts."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

from .errors import AllZeroRatesError
from .records import ARMS, Arm, Cell
from .stat_core import RiskRateTable

# Ideal shares are snapped to this many decimals before flooring so float
# noise cannot reorder remainders that are equal in exact arithmetic.
_SNAP_DIGITS = 9


@dataclass(frozen=True)
class AllocationPlan:
    """Cohort counts for one stage, ordered region-major then arm."""

    counts: Dict[Cell, int]
    n_total: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("allocation counts must be nonnegative")
        if sum(self.counts.values()) != self.n_total:
            raise ValueError(
                f"counts sum to {sum(self.counts.values())}, expected {self.n_total}")

    @property
    def regions(self) -> List[str]:
        seen: List[str] = []
        for region, _ in self.counts:
            if region not in seen:
                seen.append(region)
        return seen

    def arm_total(self, arm: Arm) -> int:
        return sum(n for (_, a), n in self.counts.items() if a is arm)

    def count(self, region: str, arm: Arm) -> int:
        return self.counts.get((region, arm), 0)


def largest_remainder(quotas: Sequence[float], total: int) -> List[int]:
    """Hamilton apportionment of ``total`` seats given fractional ``quotas``.

    Leftover units go to the largest fractional parts; ties go to the earlier
    index. ``quotas`` should sum to ``total``.
    """
    snapped = [round(q, _SNAP_DIGITS) for q in quotas]
    seats = [math.floor(q) for q in snapped]
    leftover = total - sum(seats)
    if leftover < 0 or leftover > len(seats):
        raise ValueError(f"quotas {quotas!r} do not sum to {total}")
    order = sorted(range(len(seats)), key=lambda i: (-(snapped[i] - seats[i]), i))
    for i in order[:leftover]:
        seats[i] += 1
    return seats


def equal_split(n_total: int, regions: Sequence[str]) -> AllocationPlan:
    """Half of ``n_total`` per arm, spread over regions as evenly as possible.

    >>> plan = equal_split(10, ["a", "b"])
    >>> [plan.count(r, Arm.CONTROL) for r in ["a", "b"]]
    [3, 2]
    """
    if n_total <= 0 or n_total % 2:
        raise ValueError(f"n_total must be a positive even integer, got {n_total}")
    if not regions:
        raise ValueError("at least one region is required")
    base, extra = divmod(n_total // 2, len(regions))
    counts = {}
    for i, region in enumerate(regions):
        for arm in ARMS:
            counts[(region, arm)] = base + (1 if i < extra else 0)
    return AllocationPlan(counts=counts, n_total=n_total)


def ideal_shares(n_total: int, rates: RiskRateTable,
                 regions: Optional[Sequence[str]] = None) -> Dict[Cell, float]:
    """Pre-rounding share ``n_total * rr / sum(rr)`` for every grid cell.

    Cells absent from ``rates`` (nobody deployed there) get a zero share.
    """
    if regions is None:
        regions = []
        for region, _ in rates.cells:
            if region not in regions:
                regions.append(region)
    grid = [(region, arm) for region in regions for arm in ARMS]
    weight = {cell: rates.cells.get(cell, 0.0) for cell in grid}
    denom = sum(weight.values())
    if denom <= 0.0:
        raise AllZeroRatesError("no cell recorded an event; weights are undefined")
    return {cell: n_total * w / denom for cell, w in weight.items()}


def weighted_split(n_total: int, rates: RiskRateTable,
                   regions: Optional[Sequence[str]] = None) -> AllocationPlan:
    """Allocate ``n_total`` in proportion to per-cell risk rates.

    Zero-rate cells receive exactly zero participants. ``regions`` fixes the
    grid and the tie-break order; by default it follows ``rates.cells``.
    """
    if n_total <= 0:
        raise ValueError(f"n_total must be positive, got {n_total}")
    shares = ideal_shares(n_total, rates, regions)
    cells = list(shares)
    seats = largest_remainder([shares[c] for c in cells], n_total)
    return AllocationPlan(counts=dict(zip(cells, seats)), n_total=n_total)
