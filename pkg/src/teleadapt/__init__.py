"""Adaptive bilateral teleoperation under time-varying delays: dynamics,
composite adaptive control, delay channel, stability certificates,
tracking metrics, and a scenario simulator with a CLI."""

__version__ = "0.1.0"

from .channel import AssumptionViolation, DelayProfile, SignalHistory, delay_value, validate_profile
from .controller import ControllerState, GainConfig, InvariantBreach
from .dynamics import JointState, ManipulatorParams, theta_from_params
from .metrics import MetricAccumulator, accumulate, delta_f, delta_p
from .sim import (
    ForceProfile,
    NumericalDivergence,
    ScenarioConfig,
    TrajectoryLog,
    Wall,
    default_config,
    run_scenario,
)
from .stability import LmiWitness, StabilityConstants, lmi_feasible, stability_constants
