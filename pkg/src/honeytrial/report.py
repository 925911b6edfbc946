"""Trial reports, event logs, survival-curve exports and text tables.

Formats on disk:

* ``events.jsonl``: one JSON object per participant with keys ``id``,
  ``region``, ``arm``, ``stage``, ``deployed_at``, ``event_at`` and
  ``censored_at``. Timestamps are integer milliseconds since trial start;
  exactly one of ``event_at``/``censored_at`` is non-null.
* ``survival_curves.csv``: header ``time_minutes,region,arm,stage,survival``.
* ``report.json``: the serialized :class:`TrialReport`.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Union

from .allocation import AllocationPlan
from .errors import CorruptReportError, MissingReportError, SchemaViolationError
from .records import ARMS, Arm, Cell, ParticipantRecord
from .stat_core import IncidencePair, KmCurve, RiskRateTable

PathLike = Union[str, os.PathLike]

REPORT_FILE = "report.json"
EVENTS_FILE = "events.jsonl"
CURVES_FILE = "survival_curves.csv"
STAGE_TABLE_FILE = "stage_table.txt"
SUMMARY_FILE = "summary.txt"

METHOD_LABELS = {"vanilla": "Vanilla", "rct": "RCT", "adaptive": "AD"}


@dataclass
class StageResult:
    """Everything the engine learned from one stage."""

    index: int
    plan: AllocationPlan
    started_at: int
    duration: int
    events: Dict[Cell, int]
    curves: Dict[Cell, KmCurve]
    risk_rates: RiskRateTable
    # interim analysis output; only the adaptive method fills these in
    incidence: Optional[IncidencePair] = None
    next_n_total: Optional[int] = None
    verdict: Optional[str] = None

    @property
    def attacks(self) -> int:
        return sum(self.events.values())


@dataclass
class TrialReport:
    method: str
    seed: int
    stages: List[StageResult]
    stop_reason: str
    initial_n_total: int
    deployed: Dict[Arm, int]
    attacks: int
    causal_attribution: bool
    config: Dict[str, Any] = field(default_factory=dict)

    @property
    def total_deployed(self) -> int:
        return sum(self.deployed.values())

    @classmethod
    def from_stages(cls, method: str, seed: int, stages: List[StageResult], stop_reason: str,
                    initial_n_total: int, config: Optional[Dict[str, Any]] = None) -> "TrialReport":
        return cls(
            method=method,
            seed=seed,
            stages=stages,
            stop_reason=stop_reason,
            initial_n_total=initial_n_total,
            deployed={arm: sum(s.plan.arm_total(arm) for s in stages) for arm in ARMS},
            attacks=sum(s.attacks for s in stages),
            causal_attribution=method != "vanilla",
            config=dict(config or {}),
        )

    def check_consistency(self) -> None:
        """Raise CorruptReportError unless totals equal the per-stage sums."""
        for arm in ARMS:
            expected = sum(s.plan.arm_total(arm) for s in self.stages)
            if self.deployed.get(arm) != expected:
                raise CorruptReportError(
                    f"deployed[{arm.value}]={self.deployed.get(arm)} but stages sum to {expected}")
        expected = sum(s.attacks for s in self.stages)
        if self.attacks != expected:
            raise CorruptReportError(f"attacks={self.attacks} but stages sum to {expected}")


# -- JSON (de)serialization ---------------------------------------------------

def _cells_out(mapping: Mapping[Cell, Any], key: str) -> List[Dict[str, Any]]:
    return [{"region": region, "arm": arm.value, key: value}
            for (region, arm), value in mapping.items()]


def _cells_in(rows: Iterable[Mapping[str, Any]], key: str) -> Dict[Cell, Any]:
    return {(row["region"], Arm(row["arm"])): row[key] for row in rows}


def _curve_out(curve: KmCurve) -> Dict[str, Any]:
    return {"steps": [[t, s] for t, s in curve.steps],
            "n_initial": curve.n_initial, "horizon": curve.horizon}


def _curve_in(d: Mapping[str, Any]) -> KmCurve:
    return KmCurve(steps=tuple((int(t), float(s)) for t, s in d["steps"]),
                   n_initial=int(d["n_initial"]), horizon=int(d["horizon"]))


def _stage_out(s: StageResult) -> Dict[str, Any]:
    return {
        "index": s.index,
        "started_at": s.started_at,
        "duration": s.duration,
        "plan": {"n_total": s.plan.n_total, "counts": _cells_out(s.plan.counts, "count")},
        "events": _cells_out(s.events, "count"),
        "curves": [{"region": region, "arm": arm.value, **_curve_out(c)}
                   for (region, arm), c in s.curves.items()],
        "risk_rates": {
            "cells": _cells_out(s.risk_rates.cells, "rate"),
            "arm_marginals": {arm.value: v for arm, v in s.risk_rates.arm_marginals.items()},
        },
        "incidence": None if s.incidence is None else {"p1": s.incidence.p1, "p2": s.incidence.p2},
        "next_n_total": s.next_n_total,
        "verdict": s.verdict,
    }


def _stage_in(d: Mapping[str, Any]) -> StageResult:
    inc = d["incidence"]
    return StageResult(
        index=d["index"],
        plan=AllocationPlan(counts=_cells_in(d["plan"]["counts"], "count"),
                            n_total=d["plan"]["n_total"]),
        started_at=d["started_at"],
        duration=d["duration"],
        events=_cells_in(d["events"], "count"),
        curves={(c["region"], Arm(c["arm"])): _curve_in(c) for c in d["curves"]},
        risk_rates=RiskRateTable(
            cells=_cells_in(d["risk_rates"]["cells"], "rate"),
            arm_marginals={Arm(k): v for k, v in d["risk_rates"]["arm_marginals"].items()},
        ),
        incidence=None if inc is None else IncidencePair(inc["p1"], inc["p2"]),
        next_n_total=d["next_n_total"],
        verdict=d["verdict"],
    )


def report_to_dict(report: TrialReport) -> Dict[str, Any]:
    return {
        "method": report.method,
        "seed": report.seed,
        "stop_reason": report.stop_reason,
        "initial_n_total": report.initial_n_total,
        "causal_attribution": report.causal_attribution,
        "totals": {
            "deployed": {arm.value: n for arm, n in report.deployed.items()},
            "attacks": report.attacks,
        },
        "stages": [_stage_out(s) for s in report.stages],
        "config": report.config,
    }


def report_from_dict(d: Mapping[str, Any]) -> TrialReport:
    try:
        report = TrialReport(
            method=d["method"],
            seed=d["seed"],
            stages=[_stage_in(s) for s in d["stages"]],
            stop_reason=d["stop_reason"],
            initial_n_total=d["initial_n_total"],
            deployed={Arm(k): v for k, v in d["totals"]["deployed"].items()},
            attacks=d["totals"]["attacks"],
            causal_attribution=d["causal_attribution"],
            config=d.get("config", {}),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptReportError(f"malformed report: {exc!r}") from exc
    report.check_consistency()
    return report


def dumps_report(report: TrialReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True) + "\n"


def save_report(report: TrialReport, directory: PathLike) -> Path:
    path = Path(directory) / REPORT_FILE
    path.write_text(dumps_report(report), encoding="utf-8")
    return path


def load_report(directory: PathLike) -> TrialReport:
    path = Path(directory) / REPORT_FILE
    if not path.is_file():
        raise MissingReportError(f"no {REPORT_FILE} in {directory}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorruptReportError(f"{path}: {exc}") from exc
    return report_from_dict(data)


# -- event log ----------------------------------------------------------------

_EVENT_KEYS = ("id", "region", "arm", "stage", "deployed_at", "event_at", "censored_at")


def _record_row(r: ParticipantRecord) -> Dict[str, Any]:
    if (r.event_at is None) == (r.censored_at is None):
        raise SchemaViolationError(
            f"participant {r.id}: exactly one of event_at/censored_at must be set")
    for name in ("deployed_at", "event_at", "censored_at"):
        v = getattr(r, name)
        if v is not None and (not isinstance(v, int) or isinstance(v, bool)):
            raise SchemaViolationError(f"participant {r.id}: {name} must be integer milliseconds")
    return {"id": r.id, "region": r.region, "arm": Arm(r.arm).value, "stage": r.stage,
            "deployed_at": r.deployed_at, "event_at": r.event_at, "censored_at": r.censored_at}


def append_events(records: Sequence[ParticipantRecord], sink: PathLike) -> int:
    """Append records to a JSON Lines log and flush. Returns lines written.

    The whole batch is validated before anything is written.
    """
    rows = [_record_row(r) for r in records]
    if not rows:
        return 0
    with open(sink, "a", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    return len(rows)


def read_events(source: PathLike) -> List[ParticipantRecord]:
    out = []
    with open(source, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            row = json.loads(line)
            if set(row) != set(_EVENT_KEYS):
                raise SchemaViolationError(f"{source}:{lineno}: unexpected keys {sorted(row)}")
            out.append(ParticipantRecord(
                id=row["id"], region=row["region"], arm=Arm(row["arm"]), stage=row["stage"],
                deployed_at=row["deployed_at"], event_at=row["event_at"],
                censored_at=row["censored_at"]))
    return out


# -- survival curves ----------------------------------------------------------

CURVE_HEADER = ("time_minutes", "region", "arm", "stage", "survival")


def _curve_rows(curve: KmCurve, region: str, arm: Arm, stage: int) -> List[tuple]:
    points = list(curve.steps) + [(curve.horizon, curve.final_survival)]
    return [(t, region, arm.value, stage, s) for t, s in points]


def curve_rows(curves_by_stage: Mapping[int, Mapping[Cell, KmCurve]]) -> List[tuple]:
    """Rows sorted by (region, arm, stage, time); time in ms, survival as float."""
    rows = []
    for stage, curves in curves_by_stage.items():
        for (region, arm), curve in curves.items():
            rows.extend(_curve_rows(curve, region, Arm(arm), stage))
    # stable sort keeps the terminal point after a step at the same time
    rows.sort(key=lambda r: (r[1], r[2], r[3], r[0]))
    return rows


def _write_curve_csv(rows: Sequence[tuple], destination: PathLike) -> Path:
    path = Path(destination)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CURVE_HEADER)
        for t, region, arm, stage, s in rows:
            writer.writerow([repr(t / 60000.0), region, arm, stage, repr(s)])
    return path


def export_survival_curves(curves: Mapping[Cell, KmCurve], destination: PathLike,
                           stage: int = 0) -> Path:
    """Write one stage's per-cell curves as step-function points plus a terminal point."""
    if not curves:
        raise ValueError("no curves to export")
    return _write_curve_csv(curve_rows({stage: curves}), destination)


def export_report_curves(report: TrialReport, destination: PathLike) -> Path:
    return _write_curve_csv(curve_rows({s.index: s.curves for s in report.stages}), destination)


def read_survival_curves(source: PathLike) -> List[Dict[str, Any]]:
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return [{"time_minutes": float(r["time_minutes"]), "region": r["region"],
                 "arm": r["arm"], "stage": int(r["stage"]), "survival": float(r["survival"])}
                for r in reader]


# -- text tables --------------------------------------------------------------

def _report_regions(reports: Sequence[TrialReport]) -> List[str]:
    regions: List[str] = []
    for rep in reports:
        for s in rep.stages:
            for region in s.plan.regions:
                if region not in regions:
                    regions.append(region)
        for region in rep.config.get("regions", []):
            if region not in regions:
                regions.append(region)
    return regions


def render_stage_table(*reports: TrialReport) -> str:
    """Deployed honeypots per stage, one row per (stage, method).

    Columns are the control counts by region, the corrupted counts by region
    and the stage total.
    """
    regions = _report_regions(reports)
    lines = [
        "Method | Stage | Control " + " ".join(regions) + " | Corrupted " + " ".join(regions)
        + " | Total"
    ]
    n_stages = max((len(r.stages) for r in reports), default=0)
    for k in range(n_stages):
        for rep in reports:
            if k >= len(rep.stages):
                continue
            plan = rep.stages[k].plan
            ctrl = " ".join(str(plan.count(r, Arm.CONTROL)) for r in regions)
            corr = " ".join(str(plan.count(r, Arm.CORRUPTED)) for r in regions)
            label = METHOD_LABELS.get(rep.method, rep.method)
            lines.append(f"{label} | Stage {k + 1} | {ctrl} | {corr} | {plan.n_total}")
    return "\n".join(lines) + "\n"


def render_summary(*reports: TrialReport) -> str:
    lines = ["Method | Control | Corrupted | Total Deployed | Total Attacks Seen"]
    for rep in reports:
        label = METHOD_LABELS.get(rep.method, rep.method)
        lines.append(f"{label} | {rep.deployed[Arm.CONTROL]} | {rep.deployed[Arm.CORRUPTED]}"
                     f" | {rep.total_deployed} | {rep.attacks}")
    return "\n".join(lines) + "\n"
