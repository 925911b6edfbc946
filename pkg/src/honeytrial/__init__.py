"""Controlled and adaptive honeypot deployment trials.

Statistical core, allocation, a stage-based trial engine, a deterministic
fleet simulator, and report persistence.
"""

from .allocation import AllocationPlan, equal_split, weighted_split
from .engine import (Method, StopReason, StudyConfig, TrialState, evaluate_endpoints,
                     get_num_to_deploy, run_adaptive, run_rct, run_trial, run_vanilla)
from .records import ARMS, Arm, ParticipantRecord
from .report import StageResult, TrialReport
from .sim_env import HazardSpec, ScriptedEvent, ScriptedFleet, ScriptedOutcome, SimulatedFleet
from .stat_core import (ErrorRates, IncidencePair, KmCurve, RiskRateTable, km_estimate,
                        normal_quantile, power_sample_size, risk_rates)

__version__ = "0.1.0"
