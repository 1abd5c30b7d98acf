"""Inverse planning: the flow needed for a target cooling rate, drop or profile.

Because the model is a linear relaxation with a closed-form solution,
every inversion here is exact: a rate or a drop over a known interval
fixes the relaxation rate, which in turn fixes the flow through the
saturating contact-flow curve. Targets that need more than the
saturated contact flow, or more than the device can push, raise
:class:`InfeasibleError` carrying the best achievable value.

Accuracy note: measured skin drops at the weakest flows (around 8 L/min)
exceed model predictions, so plans below ~16 L/min are less reliable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .calibration import DutyCalibration, invert_duty
from .errors import DeviceLimitError, InfeasibleError
from .model import (
    AirProperties,
    Environment,
    ModelParams,
    ThermalMedium,
    air_temp_at_distance,
    beta,
    effective_transfer,
    relax,
)
from .presets import DEVICE_MAX_FLOW


@dataclass(frozen=True)
class RateTarget:
    rate: float  # °C/s, magnitude of the initial cooling rate
    distance: float  # m
    initial_temp: float  # °C

    def __post_init__(self):
        if not self.rate >= 0:
            raise ValueError(f"rate must be >= 0, got {self.rate!r}")


@dataclass(frozen=True)
class ProfileTarget:
    waypoints: tuple  # ((time s, temp °C), ...)
    distance: float
    initial_temp: float

    def __post_init__(self):
        wp = tuple((float(t), float(T)) for t, T in self.waypoints)
        if not wp:
            raise ValueError("profile needs at least one waypoint")
        times = [t for t, _ in wp]
        if times[0] < 0 or any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("waypoint times must be non-negative and strictly increasing")
        object.__setattr__(self, "waypoints", wp)


@dataclass(frozen=True)
class PlanStep:
    start: float
    end: float
    flow_rate: float  # m^3/s
    predicted_end_temp: float
    duty: Optional[float] = None

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError("plan step must have end > start")


def _gap(distance, initial_temp, params, env):
    return initial_temp - air_temp_at_distance(env, params, distance)


def max_rate(distance, initial_temp, device_max_flow, params, env, air, medium) -> float:
    """Largest initial cooling rate (°C/s) reachable at ``device_max_flow``."""
    gap = _gap(distance, initial_temp, params, env)
    if gap < 0:
        raise ValueError("initial temperature is below the air temperature at this distance")
    flow = math.inf if device_max_flow is None else device_max_flow
    return beta(air, medium) * effective_transfer(params, flow) * gap


def flow_for_rate(
    target: RateTarget,
    params: ModelParams,
    env: Environment,
    air: AirProperties,
    medium: ThermalMedium,
    device_max_flow: Optional[float] = DEVICE_MAX_FLOW,
) -> float:
    """Flow (m^3/s) whose initial cooling rate equals ``target.rate``."""
    gap = _gap(target.distance, target.initial_temp, params, env)
    if not gap > 0:
        raise ValueError("initial temperature must exceed the air temperature at this distance")
    if target.rate == 0:
        return 0.0
    limit = beta(air, medium) * params.sigma_km * gap
    x = target.rate / limit
    if x >= 1:
        dev = None
        if device_max_flow is not None:
            dev = max_rate(target.distance, target.initial_temp, device_max_flow, params, env, air, medium)
        raise InfeasibleError(
            f"rate {target.rate:.6g} °C/s is not reachable; saturation limit is {limit:.6g} °C/s",
            bound=limit,
            device_bound=dev,
        )
    flow = -math.log1p(-x) / params.theta
    if device_max_flow is not None and flow > device_max_flow:
        bound = max_rate(target.distance, target.initial_temp, device_max_flow, params, env, air, medium)
        raise DeviceLimitError(
            f"rate {target.rate:.6g} °C/s needs {flow:.6g} m^3/s, above the device max; "
            f"device limit is {bound:.6g} °C/s",
            bound=bound,
        )
    return flow


def _flow_for_lambda(lam, params, air, medium):
    """Invert lambda(K) = beta * sigma_km * (1 - exp(-theta K)); returns None if unreachable."""
    x = lam / (beta(air, medium) * params.sigma_km)
    if x >= 1:
        return None
    return -math.log1p(-x) / params.theta


def flow_for_delta(
    delta: float,
    duration: float,
    distance: float,
    initial_temp: float,
    params: ModelParams,
    env: Environment,
    air: AirProperties,
    medium: ThermalMedium,
    device_max_flow: Optional[float] = DEVICE_MAX_FLOW,
) -> float:
    """Constant flow (m^3/s) that lowers the temperature by ``delta`` °C in ``duration`` s."""
    if not duration > 0:
        raise ValueError("duration must be > 0")
    if delta < 0:
        raise ValueError("delta must be >= 0 (heating is not supported)")
    gap = _gap(distance, initial_temp, params, env)
    if delta >= gap:
        raise ValueError(
            f"drop of {delta:.6g} °C is not below the equilibrium gap {gap:.6g} °C; "
            "the asymptote cannot be reached in finite time"
        )
    if delta == 0:
        return 0.0
    lam = -math.log1p(-delta / gap) / duration
    flow = _flow_for_lambda(lam, params, air, medium)
    dev = None
    if device_max_flow is not None:
        lam_dev = beta(air, medium) * effective_transfer(params, device_max_flow)
        dev = gap * -math.expm1(-lam_dev * duration)
    if flow is None:
        lam_sat = beta(air, medium) * params.sigma_km
        bound = gap * -math.expm1(-lam_sat * duration)
        raise InfeasibleError(
            f"drop of {delta:.6g} °C in {duration} s is not reachable; at most {bound:.6g} °C",
            bound=bound,
            device_bound=dev,
        )
    if device_max_flow is not None and flow > device_max_flow:
        bound = dev
        raise DeviceLimitError(
            f"drop of {delta:.6g} °C in {duration} s needs {flow:.6g} m^3/s, above the device max; "
            f"device limit is {bound:.6g} °C",
            bound=bound,
        )
    return flow


def _segment_targets(target: ProfileTarget, step: Optional[float]):
    """Expand waypoints into (start, end, target temp) control segments.

    With ``step`` set, each waypoint interval is split into sub-segments of
    at most ``step`` seconds whose targets follow the straight line between
    waypoints.
    """
    knots = [(0.0, target.initial_temp)] + [w for w in target.waypoints if w[0] > 0]
    out = []
    for (t0, T0), (t1, T1) in zip(knots, knots[1:]):
        n = 1 if step is None else max(1, math.ceil((t1 - t0) / step - 1e-9))
        edges = np.linspace(t0, t1, n + 1)
        temps = np.linspace(T0, T1, n + 1)
        edges[-1], temps[-1] = t1, T1
        out.extend((float(a), float(b), float(T)) for a, b, T in zip(edges[:-1], edges[1:], temps[1:]))
    return out


def plan_profile(
    target: ProfileTarget,
    step: Optional[float],
    params: ModelParams,
    env: Environment,
    air: AirProperties,
    medium: ThermalMedium,
    cal: Optional[DutyCalibration] = None,
    device_max_flow: Optional[float] = DEVICE_MAX_FLOW,
) -> list:
    """Piecewise-constant flow schedule tracking a temperature trajectory.

    Segments are solved one after another, each starting from the
    temperature the previous one is predicted to reach. Since every
    segment is solved exactly, the greedy plan is also the exact one.
    """
    if step is not None and not step > 0:
        raise ValueError("step must be > 0")
    t_air = air_temp_at_distance(env, params, target.distance)
    for t, T in target.waypoints:
        if T > target.initial_temp:
            raise ValueError(f"waypoint ({t}, {T}) is above the initial temperature; heating is unsupported")
        if T <= t_air:
            raise ValueError(f"waypoint ({t}, {T}) is at or below the air temperature {t_air:.6g} °C")
        if t == 0 and T != target.initial_temp:
            raise ValueError("a waypoint at t=0 must equal the initial temperature")

    steps = []
    current = target.initial_temp
    b = beta(air, medium)
    for idx, (start, end, goal) in enumerate(_segment_targets(target, step)):
        duration = end - start
        if goal > current:
            raise InfeasibleError(
                f"segment {idx} ({start}-{end} s) asks for {goal:.6g} °C but the temperature can only "
                f"be held at {current:.6g} °C or lowered",
                bound=current,
                segment=idx,
            )
        try:
            flow = flow_for_delta(current - goal, duration, target.distance, current, params, env, air, medium, device_max_flow)
        except InfeasibleError as exc:
            reach = exc.device_bound if exc.device_bound is not None else exc.bound
            raise InfeasibleError(
                f"segment {idx} ({start}-{end} s): {exc}; nearest achievable temperature is {current - reach:.6g} °C",
                bound=current - reach,
                segment=idx,
            ) from exc
        predicted = relax(current, t_air, b * effective_transfer(params, flow), duration)
        duty = invert_duty(cal, flow) if cal is not None else None
        steps.append(PlanStep(start, end, flow, predicted, duty))
        current = predicted
    return steps


def plan_rate(
    target: RateTarget,
    duration: float,
    params,
    env,
    air,
    medium,
    cal: Optional[DutyCalibration] = None,
    device_max_flow: Optional[float] = DEVICE_MAX_FLOW,
) -> list:
    """Single-step plan holding the flow that achieves ``target.rate`` for ``duration`` s."""
    flow = flow_for_rate(target, params, env, air, medium, device_max_flow)
    t_air = air_temp_at_distance(env, params, target.distance)
    end = relax(target.initial_temp, t_air, beta(air, medium) * effective_transfer(params, flow), duration)
    duty = invert_duty(cal, flow) if cal is not None else None
    return [PlanStep(0.0, float(duration), flow, end, duty)]

