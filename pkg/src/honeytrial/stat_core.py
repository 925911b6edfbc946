"""Numeric kernel: normal quantiles, sample sizes, Kaplan-Meier, risk rates."""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from .errors import DegenerateIncidenceError, DomainError, EmptyCohortError
from .records import Arm, Cell, ParticipantRecord

# Wichura's AS241 (PPND16) coefficients, ~1e-16 relative accuracy.
_A = (3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
      1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
      3.3430575583588128105e4, 2.5090809287301226727e3)
_B = (1.0, 4.2313330701600911252e1, 6.8718700749205790830e2, 5.3941960214247511077e3,
      2.1213794301586595867e4, 3.9307895800092710610e4, 2.8729085735721942674e4,
      5.2264952788528545610e3)
_C = (1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
      3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
      2.27238449892691845833e-2, 7.74545014278341407640e-4)
_D = (1.0, 2.05319162663775882187e0, 1.67638483018380384940e0, 6.89767334985100004550e-1,
      1.48103976427480074590e-1, 1.51986665636164571966e-2, 5.47593808499534494600e-4,
      1.05075007164441684324e-9)
_E = (6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
      2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
      2.71155556874348757815e-5, 2.01033439929228813265e-7)
_F = (1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1, 1.48753612908506148525e-2,
      7.86869131145613259100e-4, 1.84631831751005468180e-5, 1.42151175831644588870e-7,
      2.04426310338993978564e-15)


def _poly(coeffs: Sequence[float], x: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * x + c
    return acc


def normal_quantile(p: float) -> float:
    """Inverse standard-normal CDF via Wichura's AS241 rational approximation."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"normal_quantile needs 0 < p < 1, got {p!r}")
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly(_A, r) / _poly(_B, r)
    r = math.sqrt(-math.log(p if q < 0 else 1.0 - p))
    if r <= 5.0:
        r -= 1.6
        x = _poly(_C, r) / _poly(_D, r)
    else:
        r -= 5.0
        x = _poly(_E, r) / _poly(_F, r)
    return -x if q < 0 else x


@dataclass(frozen=True)
class ErrorRates:
    alpha: float
    beta: float

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly between 0 and 1, got {v!r}")

    @property
    def power(self) -> float:
        return 1.0 - self.beta


@dataclass(frozen=True)
class IncidencePair:
    """Event-of-interest incidence in the control (p1) and corrupted (p2) arms."""

    p1: float
    p2: float

    def __post_init__(self):
        for name in ("p1", "p2"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v!r}")

    @property
    def degenerate(self) -> bool:
        return math.isclose(self.p1, self.p2, rel_tol=0.0, abs_tol=1e-12)


def power_sample_size(incidence: IncidencePair, errors: ErrorRates) -> int:
    """Total two-arm sample size for detecting p1 != p2.

    Returns ``2 * ceil(n)`` with ``n = (p1 q1 + p2 q2)(z_{1-a/2} + z_{1-b})^2 / (p1 - p2)^2``.
    ``n`` is floored at 1 so the result is always a positive even integer,
    which matters when both incidences sit at 0 or 1 and the variance vanishes.
    """
    if incidence.degenerate:
        raise DegenerateIncidenceError(
            f"p1 == p2 == {incidence.p1!r}: no sample size can separate equal incidences")
    p1, p2 = incidence.p1, incidence.p2
    z = normal_quantile(1.0 - errors.alpha / 2.0) + normal_quantile(1.0 - errors.beta)
    # summing in sorted order keeps the result symmetric in (p1, p2)
    lo, hi = sorted((p1, p2))
    variance = lo * (1.0 - lo) + hi * (1.0 - hi)
    n_arm = variance * z * z / ((hi - lo) ** 2)
    return 2 * max(1, math.ceil(n_arm))


@dataclass(frozen=True)
class KmCurve:
    """Step survival curve for one cohort.

    ``steps`` holds ``(time_ms, survival)`` pairs at each distinct event time,
    times measured from the cohort's deployment. Survival is 1 before the
    first step. ``horizon`` is the end of observation.
    """

    steps: Tuple[Tuple[int, float], ...]
    n_initial: int
    horizon: int

    @property
    def final_survival(self) -> float:
        return self.steps[-1][1] if self.steps else 1.0

    def survival_at(self, t: int) -> float:
        s = 1.0
        for time, value in self.steps:
            if time > t:
                break
            s = value
        return s


def _durations(records: Iterable[ParticipantRecord], horizon: int) -> List[Tuple[int, bool]]:
    obs = []
    for r in records:
        if r.event_at is not None:
            t = r.event_at - r.deployed_at
            if t > horizon:
                raise ValueError(f"participant {r.id} has an event after the horizon")
            obs.append((t, True))
        elif r.censored_at is not None:
            obs.append((min(r.censored_at - r.deployed_at, horizon), False))
        else:
            obs.append((horizon, False))
    return obs


def _product_limit(obs: List[Tuple[int, bool]], horizon: int) -> KmCurve:
    if not obs:
        raise EmptyCohortError("cannot estimate survival for an empty cohort")
    deaths = Counter(t for t, evented in obs if evented)
    exits = Counter(t for t, _ in obs)
    at_risk = len(obs)
    s = 1.0
    steps = []
    for t in sorted(exits):
        d = deaths.get(t, 0)
        if d:
            s = s * (at_risk - d) / at_risk
            steps.append((t, s))
        # events and censorings at t were both at risk at t
        at_risk -= exits[t]
    return KmCurve(steps=tuple(steps), n_initial=len(obs), horizon=horizon)


def km_estimate(records: Sequence[ParticipantRecord], horizon: int) -> KmCurve:
    """Kaplan-Meier curve for one (region, arm) cohort.

    Participants without an event are right-censored at their ``censored_at``
    time, or at ``horizon`` when none is recorded. Simultaneous events form a
    single multiplicative step.
    """
    if not records:
        raise EmptyCohortError("cannot estimate survival for an empty cohort")
    cells = {r.cell for r in records}
    if len(cells) != 1:
        raise ValueError(f"records span several cohort cells: {sorted(cells)}")
    return _product_limit(_durations(records, horizon), horizon)


@dataclass(frozen=True)
class RiskRateTable:
    """Per-cell risk rates (1 - final survival) and their per-arm marginals.

    An arm with no deployed participants has no marginal entry at all.
    """

    cells: Dict[Cell, float] = field(default_factory=dict)
    arm_marginals: Dict[Arm, float] = field(default_factory=dict)


def _invert(survival: float) -> float:
    return min(1.0, max(0.0, 1.0 - survival))


def risk_rates(curves: Mapping[Cell, KmCurve],
               records: Sequence[ParticipantRecord]) -> RiskRateTable:
    """Invert KM survival into risk rates.

    Arm marginals pool every record of the arm across regions into one KM
    estimate, so they are participant-weighted rather than a mean of cells.
    """
    by_arm: Dict[Arm, List[ParticipantRecord]] = defaultdict(list)
    for r in records:
        if r.cell not in curves:
            raise ValueError(f"no survival curve for populated cell {r.cell}")
        by_arm[r.arm].append(r)
    cells = {cell: _invert(curve.final_survival) for cell, curve in curves.items()}
    marginals: Dict[Arm, float] = {}
    for arm in Arm:
        pooled = by_arm.get(arm)
        if not pooled:
            continue
        horizon = max(c.horizon for cell, c in curves.items() if cell[1] is arm)
        marginals[arm] = _invert(_product_limit(_durations(pooled, horizon), horizon).final_survival)
    return RiskRateTable(cells=cells, arm_marginals=marginals)


def marginal_or(table: RiskRateTable, arm: Arm, default: float) -> float:
    value: Optional[float] = table.arm_marginals.get(arm)
    return default if value is None else value
