"""Hardware-in-the-loop emulation of the PWM-driven cold-air prototype.

Pipeline per sample interval: commanded duty -> PWM quantisation ->
duty/flow calibration curve -> first-order valve lag -> cooling ODE
(RK4) -> sensor noise on the reported traces. Commands are held from
the first sample boundary at or after their timestamp.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .calibration import DutyCalibration, invert_duty
from .errors import DeviceLimitError, InputError
from .model import (
    AirProperties,
    Environment,
    ModelParams,
    TemperatureTrace,
    ThermalMedium,
    air_temp_at_distance,
    beta,
    effective_transfer,
    rk4_step,
    sample_times,
)
from .presets import DEVICE_MAX_FLOW
from .units import lpm_to_m3s

_EPS_T = 1e-9


@dataclass(frozen=True)
class DeviceConfig:
    calibration: Optional[DutyCalibration]
    duty_resolution: Optional[int] = 256  # None = continuous duty
    max_flow: float = DEVICE_MAX_FLOW
    valve_time_constant: float = 0.0  # s, 0 = ideal valve
    flow_noise_sd: float = lpm_to_m3s(0.5)
    temp_noise_sd: float = 0.0
    seed: Optional[int] = 0
    max_step: float = 0.01  # s, largest RK4 step

    def __post_init__(self):
        if self.duty_resolution is not None and self.duty_resolution < 2:
            raise ValueError("duty_resolution must be >= 2")
        if self.flow_noise_sd < 0 or self.temp_noise_sd < 0:
            raise ValueError("noise standard deviations must be >= 0")
        if self.valve_time_constant < 0:
            raise ValueError("valve_time_constant must be >= 0")
        if not self.max_flow > 0 or not self.max_step > 0:
            raise ValueError("max_flow and max_step must be positive")

    def quantize(self, duty: float) -> float:
        if self.duty_resolution is None:
            return duty
        levels = self.duty_resolution - 1
        return round(duty * levels) / levels


@dataclass(frozen=True)
class Scenario:
    medium: ThermalMedium
    env: Environment
    air: AirProperties
    params: ModelParams
    distance: float  # m
    initial_temp: float  # °C
    commands: tuple  # ((time s, duty), ...)
    duration: float  # s
    sample_dt: float  # s

    def __post_init__(self):
        cmds = tuple((float(t), float(d)) for t, d in self.commands)
        times = [t for t, _ in cmds]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("command times must be strictly increasing")
        if not self.duration > 0 or not self.sample_dt > 0:
            raise ValueError("duration and sample_dt must be positive")
        object.__setattr__(self, "commands", cmds)


@dataclass(frozen=True, eq=False)
class SimOutput:
    times: np.ndarray
    temp_trace: TemperatureTrace  # as the thermal camera would report it
    latent_temps: np.ndarray  # noise-free state
    flow_measured: np.ndarray  # m^3/s
    flow_true: np.ndarray  # m^3/s
    commanded_duty: np.ndarray  # after quantisation
    meta: dict = field(default_factory=dict)

    @property
    def flow_trace(self):
        return list(zip(self.times.tolist(), self.flow_measured.tolist()))

    @property
    def commanded_duty_trace(self):
        return list(zip(self.times.tolist(), self.commanded_duty.tolist()))

    def latent_at(self, t: float) -> float:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > 1e-9 * max(1.0, t):
            raise ValueError(f"no sample at t={t}")
        return float(self.latent_temps[i])


def _duty_schedule(scenario: Scenario, times: np.ndarray, config: DeviceConfig) -> np.ndarray:
    """Quantised duty held over each sample interval [times[i], times[i+1])."""
    duty = np.zeros(times.size)
    for t_cmd, d in scenario.commands:
        # zero-order hold: applies from the first sample boundary >= t_cmd
        i = int(np.searchsorted(times, t_cmd - _EPS_T * max(1.0, t_cmd), side="left"))
        duty[i:] = config.quantize(d)
    return duty


def run_scenario(scenario: Scenario, config: DeviceConfig) -> SimOutput:
    if config.calibration is None:
        raise InputError("device config has no duty calibration")
    for t, d in scenario.commands:
        if t < 0 or t > scenario.duration * (1 + 1e-12):
            raise InputError(f"command at t={t} s lies outside [0, {scenario.duration}] s")
        if not 0.0 <= d <= 1.0:
            raise InputError(f"duty {d} at t={t} s is outside [0, 1]")

    times = sample_times(scenario.duration, scenario.sample_dt)
    duty = _duty_schedule(scenario, times, config)
    cal = config.calibration
    flow_cmd = np.minimum(cal(duty), config.max_flow)
    flow_cmd[duty == 0] = 0.0

    p = scenario.params
    t_air = air_temp_at_distance(scenario.env, p, scenario.distance)
    b = beta(scenario.air, scenario.medium)
    tau = config.valve_time_constant

    latent = np.empty(times.size)
    flow_true = np.empty(times.size)
    temp, flow = float(scenario.initial_temp), float(flow_cmd[0]) if tau == 0 else 0.0
    latent[0], flow_true[0] = temp, flow
    for i in range(1, times.size):
        target = float(flow_cmd[i - 1])
        h_total = times[i] - times[i - 1]
        n_sub = max(1, math.ceil(h_total / config.max_step - 1e-9))
        h = h_total / n_sub
        if tau == 0:
            lam = b * effective_transfer(p, target)

            def deriv(_t, y, lam=lam):
                return -lam * (y - t_air)

            y = np.float64(temp)
            for j in range(n_sub):
                y = rk4_step(deriv, times[i - 1] + j * h, y, h)
            temp, flow = float(y), target
        else:

            def deriv(_t, y, target=target):
                k = max(y[1], 0.0)
                return np.array([-b * effective_transfer(p, k) * (y[0] - t_air), (target - y[1]) / tau])

            y = np.array([temp, flow])
            for j in range(n_sub):
                y = rk4_step(deriv, times[i - 1] + j * h, y, h)
            temp, flow = float(y[0]), float(y[1])
        latent[i] = temp
        # the reported flow at a boundary is what the valve settles to for the next interval
        flow_true[i] = flow_cmd[i] if tau == 0 else flow

    flow_rng, temp_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2))
    flow_meas = flow_true.copy()
    if config.flow_noise_sd > 0:
        flow_meas = np.maximum(flow_meas + flow_rng.normal(0.0, config.flow_noise_sd, times.size), 0.0)
    temps_meas = latent.copy()
    if config.temp_noise_sd > 0:
        temps_meas = temps_meas + temp_rng.normal(0.0, config.temp_noise_sd, times.size)

    meta = {"distance_m": scenario.distance, "initial_temp_c": scenario.initial_temp, "air_temp_c": t_air}
    return SimOutput(times, TemperatureTrace(times, temps_meas), latent, flow_meas, flow_true, duty, meta)


def execute_plan(plan: Sequence, scenario: Scenario, config: DeviceConfig) -> SimOutput:
    """Drive the emulator with a planner output.

    ``scenario`` supplies the physics; its commands are replaced by the
    plan. Steps without a duty are converted through the device
    calibration. The run lasts until the later of the plan end and the
    scenario duration, with the valve closed after the last step.
    """
    if config.calibration is None:
        raise InputError("device config has no duty calibration")
    steps = list(plan)
    for a, b in zip(steps, steps[1:]):
        if abs(b.start - a.end) > 1e-9 * max(1.0, a.end):
            raise InputError(f"plan steps are not contiguous at t={a.end} s")
    commands = []
    for s in steps:
        if s.flow_rate > config.max_flow * (1 + 1e-12):
            raise DeviceLimitError(
                f"plan step {s.start}-{s.end} s needs {s.flow_rate:.6g} m^3/s, device max is {config.max_flow:.6g}",
                bound=config.max_flow,
            )
        duty = s.duty if s.duty is not None else invert_duty(config.calibration, s.flow_rate)
        commands.append((s.start, duty))
    end = steps[-1].end if steps else 0.0
    duration = max(end, scenario.duration)
    if steps and end < duration:
        commands.append((end, 0.0))
    run = Scenario(
        scenario.medium,
        scenario.env,
        scenario.air,
        scenario.params,
        scenario.distance,
        scenario.initial_temp,
        tuple(commands),
        duration,
        scenario.sample_dt,
    )
    return run_scenario(run, config)
