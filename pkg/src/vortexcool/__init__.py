"""Modeling, calibration and control toolkit for non-contact cooling with vortex-tube cold air."""

from .calibration import (
    DutyCalibration,
    FitConfig,
    FitResult,
    MeasurementRecord,
    MeasurementSet,
    compute_rmse,
    fit_duty_curve,
    fit_model_params,
    invert_duty,
)
from .device import DeviceConfig, Scenario, SimOutput, execute_plan, run_scenario
from .errors import DeviceLimitError, IdentifiabilityError, InfeasibleError, InputError
from .model import (
    AirProperties,
    Environment,
    HeatFlux,
    ModelParams,
    StimulusCondition,
    TemperatureTrace,
    ThermalMedium,
    air_temp_at_distance,
    beta,
    cooling_rate,
    effective_transfer,
    heat_provided,
    simulate_trace,
    skin_temp_closed_form,
)
from .planner import PlanStep, ProfileTarget, RateTarget, flow_for_delta, flow_for_rate, max_rate, plan_profile
from .psychophysics import (
    PsychometricData,
    PsychometricFit,
    TrialRecord,
    TrialSchedule,
    aggregate,
    classify,
    fit_psychometric,
    generate_schedule,
    group_stats,
)

__version__ = "0.1.0"
