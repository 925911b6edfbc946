"""Study config files (YAML).

A config has three sections::

    study:
      method: adaptive                # vanilla | rct | adaptive
      budget_cap_participants: 200
      budget_currency: 650            # optional
      unit_cost: 3.25                 # required with budget_currency
      n_stages: 3
      stage_duration_minutes: 240
      regions: [east-1, east-2, west-1, west-2]
      error_rates: {alpha: 0.05, beta: 0.10}
      initial_incidence: {p1: 0.01, p2: 0.4}
      min_corrupted_arm: 10
      event_time_quantization_minutes: null
      stage_n_total: null             # force a per-stage total (even)
      rng_seed: 7
    environment:
      kind: hazard                    # or: scripted
      ...
    output:
      directory: runs/ad

Hazard environments take ``arm_rate`` (per-arm default for every region),
``per_cell_rate`` (region -> arm -> rate), ``region_onset_delay_minutes``,
``stage_rates`` (stage number -> arm -> rate, from that stage on) and an
optional ``seed`` (defaults to ``study.rng_seed``). Scripted environments
take ``events`` (list of ``{stage, region, arm, ordinal, offset_minutes}``)
and ``anomalies`` (stage number -> message). Stage numbers in config files
are 1-based.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml

from .engine import Method, StudyConfig
from .errors import ConfigInvariantError, ConfigParseError
from .records import ARMS, Arm
from .sim_env import HazardSpec, ScriptedEvent, ScriptedOutcome
from .stat_core import ErrorRates, IncidencePair

MINUTE_MS = 60_000

_STUDY_KEYS = {
    "method", "budget_cap_participants", "budget_currency", "unit_cost", "n_stages",
    "stage_duration_minutes", "regions", "error_rates", "initial_incidence",
    "min_corrupted_arm", "event_time_quantization_minutes", "stage_n_total", "rng_seed",
}
_HAZARD_KEYS = {"kind", "arm_rate", "per_cell_rate", "region_onset_delay_minutes",
                "stage_rates", "seed"}
_SCRIPTED_KEYS = {"kind", "events", "anomalies"}


@dataclass
class OutputSpec:
    directory: Optional[str] = None
    formats: List[str] = field(default_factory=lambda: ["json", "jsonl", "csv", "text"])


@dataclass
class ConfigFile:
    study: StudyConfig
    environment: Union[HazardSpec, ScriptedOutcome]
    output: OutputSpec
    raw: Dict[str, Any] = field(default_factory=dict)

    def with_overrides(self, seed: Optional[int] = None,
                       method: Optional[str] = None) -> "ConfigFile":
        """Apply CLI overrides. ``--seed`` replaces the study seed and the hazard seed."""
        changes: Dict[str, Any] = {}
        if seed is not None:
            changes["rng_seed"] = seed
        if method is not None:
            changes["method"] = Method(method)
        study = _build(StudyConfig, "study", **{**_fields(self.study), **changes})
        env = self.environment
        if seed is not None and isinstance(env, HazardSpec):
            env = dataclasses.replace(env, seed=seed)
        return ConfigFile(study=study, environment=env, output=self.output, raw=self.raw)


def _fields(obj) -> Dict[str, Any]:
    return {f.name: getattr(obj, f.name) for f in dataclasses.fields(obj)}


def _build(cls, field_name: str, **kwargs):
    try:
        return cls(**kwargs)
    except ConfigInvariantError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigInvariantError(field_name, str(exc)) from exc


def _require(section: Mapping[str, Any], key: str, where: str):
    if key not in section or section[key] is None:
        raise ConfigParseError(f"{where}.{key} is required")
    return section[key]


def _mapping(value, where: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ConfigParseError(f"{where} must be a mapping")
    return value


def _number(value, where: str, kind=float):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigParseError(f"{where} must be a number, got {value!r}")
    if kind is int:
        if isinstance(value, float) and not value.is_integer():
            raise ConfigParseError(f"{where} must be an integer, got {value!r}")
        return int(value)
    return float(value)


def _minutes(value, where: str) -> int:
    return int(round(_number(value, where) * MINUTE_MS))


def _money(value, where: str) -> Optional[Decimal]:
    if value is None:
        return None
    try:
        return Decimal(str(value))
    except InvalidOperation:
        raise ConfigParseError(f"{where} must be a number, got {value!r}") from None


def _unknown(section: Mapping[str, Any], allowed, where: str) -> None:
    extra = set(section) - set(allowed)
    if extra:
        raise ConfigParseError(f"{where}: unknown keys {sorted(extra)}")


def parse_study(section: Mapping[str, Any]) -> StudyConfig:
    section = _mapping(section, "study")
    _unknown(section, _STUDY_KEYS, "study")
    method = _require(section, "method", "study")
    if method not in {m.value for m in Method}:
        raise ConfigParseError(f"study.method must be one of vanilla, rct, adaptive; got {method!r}")
    regions = _require(section, "regions", "study")
    if not isinstance(regions, list) or not all(isinstance(r, str) for r in regions):
        raise ConfigParseError("study.regions must be a list of region names")
    er = _mapping(_require(section, "error_rates", "study"), "study.error_rates")
    inc = _mapping(_require(section, "initial_incidence", "study"), "study.initial_incidence")
    error_rates = _build(ErrorRates, "error_rates",
                         alpha=_number(_require(er, "alpha", "study.error_rates"), "alpha"),
                         beta=_number(_require(er, "beta", "study.error_rates"), "beta"))
    incidence = _build(IncidencePair, "initial_incidence",
                       p1=_number(_require(inc, "p1", "study.initial_incidence"), "p1"),
                       p2=_number(_require(inc, "p2", "study.initial_incidence"), "p2"))
    quant = section.get("event_time_quantization_minutes")
    n_fixed = section.get("stage_n_total")
    return _build(
        StudyConfig, "study",
        method=Method(method),
        budget_cap_participants=_number(_require(section, "budget_cap_participants", "study"),
                                        "study.budget_cap_participants", int),
        budget_currency=_money(section.get("budget_currency"), "study.budget_currency"),
        unit_cost=_money(section.get("unit_cost"), "study.unit_cost"),
        n_stages=_number(_require(section, "n_stages", "study"), "study.n_stages", int),
        stage_duration=_minutes(_require(section, "stage_duration_minutes", "study"),
                                "study.stage_duration_minutes"),
        regions=tuple(regions),
        error_rates=error_rates,
        initial_incidence=incidence,
        min_corrupted_arm=_number(section.get("min_corrupted_arm", 0),
                                  "study.min_corrupted_arm", int),
        event_time_quantization=None if quant is None else _minutes(
            quant, "study.event_time_quantization_minutes"),
        stage_n_total=None if n_fixed is None else _number(n_fixed, "study.stage_n_total", int),
        rng_seed=_number(section.get("rng_seed", 0), "study.rng_seed", int),
    )


def _arm_rates(value, where: str) -> Dict[Arm, float]:
    value = _mapping(value, where)
    out = {}
    for k, v in value.items():
        try:
            arm = Arm(k)
        except ValueError:
            raise ConfigParseError(f"{where}: unknown arm {k!r}") from None
        out[arm] = _number(v, f"{where}.{k}")
    return out


def parse_hazard(section: Mapping[str, Any], study: StudyConfig) -> HazardSpec:
    _unknown(section, _HAZARD_KEYS, "environment")
    default = _arm_rates(section.get("arm_rate", {}), "environment.arm_rate")
    rates = {(r, arm): default.get(arm, 0.0) for r in study.regions for arm in ARMS}
    for region, arms in _mapping(section.get("per_cell_rate", {}), "environment.per_cell_rate").items():
        if region not in study.regions:
            raise ConfigInvariantError("environment.per_cell_rate", f"unknown region {region!r}")
        for arm, rate in _arm_rates(arms, f"environment.per_cell_rate.{region}").items():
            rates[(region, arm)] = rate
    delays = {}
    for region, minutes in _mapping(section.get("region_onset_delay_minutes", {}),
                                    "environment.region_onset_delay_minutes").items():
        if region not in study.regions:
            raise ConfigInvariantError("environment.region_onset_delay_minutes",
                                       f"unknown region {region!r}")
        delays[region] = _minutes(minutes, f"environment.region_onset_delay_minutes.{region}")
        if not 0 <= delays[region] < study.stage_duration:
            raise ConfigInvariantError("environment.region_onset_delay_minutes",
                                       f"{region}: delay must be in [0, stage duration)")
    schedule = {}
    for stage, arms in _mapping(section.get("stage_rates", {}), "environment.stage_rates").items():
        k = _number(stage, "environment.stage_rates key", int)
        if k < 1:
            raise ConfigParseError("environment.stage_rates keys are 1-based stage numbers")
        schedule[k - 1] = _arm_rates(arms, f"environment.stage_rates.{stage}")
    seed = section.get("seed")
    return _build(HazardSpec, "environment", per_cell_rate=rates, region_onset_delay=delays,
                  seed=study.rng_seed if seed is None else _number(seed, "environment.seed", int),
                  stage_rates=schedule)


def parse_scripted(section: Mapping[str, Any], study: StudyConfig) -> ScriptedOutcome:
    _unknown(section, _SCRIPTED_KEYS, "environment")
    events = section.get("events") or []
    if not isinstance(events, list):
        raise ConfigParseError("environment.events must be a list")
    window = study.stage_duration * (study.n_stages if study.method is Method.VANILLA else 1)
    parsed = []
    for i, ev in enumerate(events):
        where = f"environment.events[{i}]"
        ev = _mapping(ev, where)
        stage = _number(_require(ev, "stage", where), f"{where}.stage", int)
        region = _require(ev, "region", where)
        if region not in study.regions:
            raise ConfigInvariantError(where, f"unknown region {region!r}")
        try:
            arm = Arm(_require(ev, "arm", where))
        except ValueError:
            raise ConfigParseError(f"{where}.arm must be control or corrupted") from None
        offset = _minutes(_require(ev, "offset_minutes", where), f"{where}.offset_minutes")
        if stage < 1 or not 0 <= offset <= window:
            raise ConfigInvariantError(where, "stage must be >= 1 and offset within the stage")
        parsed.append(ScriptedEvent(stage - 1, region, arm,
                                    _number(_require(ev, "ordinal", where), f"{where}.ordinal", int),
                                    offset))
    anomalies = {_number(k, "environment.anomalies key", int) - 1: str(v)
                 for k, v in _mapping(section.get("anomalies", {}) or {}, "environment.anomalies").items()}
    return _build(ScriptedOutcome, "environment", events=parsed, anomalies=anomalies)


def parse_config(doc: Any) -> ConfigFile:
    doc = _mapping(doc, "config")
    _unknown(doc, {"study", "environment", "output"}, "config")
    study = parse_study(_require(doc, "study", "config"))
    env_section = _mapping(_require(doc, "environment", "config"), "environment")
    kind = env_section.get("kind")
    if kind == "hazard":
        env: Union[HazardSpec, ScriptedOutcome] = parse_hazard(env_section, study)
    elif kind == "scripted":
        env = parse_scripted(env_section, study)
    else:
        raise ConfigParseError("environment.kind must be 'hazard' or 'scripted'")
    out = _mapping(doc.get("output") or {}, "output")
    _unknown(out, {"directory", "formats"}, "output")
    output = OutputSpec(directory=out.get("directory"),
                        formats=list(out.get("formats") or OutputSpec().formats))
    return ConfigFile(study=study, environment=env, output=output, raw=dict(doc))


def load_config(path: Union[str, Path]) -> ConfigFile:
    """Read and validate a config file. Raises ConfigParseError or ConfigInvariantError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigParseError(f"{path}: {exc}") from exc
    return parse_config(doc)
