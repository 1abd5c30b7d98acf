"""First-order convective cooling model for a slab exposed to a cold air jet.

The slab (skin or a silicone phantom) is treated as a lumped volume ``V``
that relaxes exponentially toward the temperature of the air reaching it.
Air warms with distance from the outlet, and only part of the output flow
actually contacts the surface. The result is a linear ODE

    dT/dt = -lambda(K) * (T - T_air(d)),
    lambda(K) = beta * sigma_km * (1 - exp(-theta * K)),
    beta = rho_a c_a / (rho_s c_s V),

whose closed-form solution is used everywhere except where the flow
varies in time (see :func:`rk4_step`).

All quantities are SI except temperatures, which are in °C.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np


def _require_positive(obj, *names):
    for name in names:
        value = getattr(obj, name)
        if not (math.isfinite(value) and value > 0):
            raise ValueError(f"{type(obj).__name__}.{name} must be positive, got {value!r}")


@dataclass(frozen=True)
class AirProperties:
    density: float  # kg/m^3
    specific_heat: float  # J/(kg K)

    def __post_init__(self):
        _require_positive(self, "density", "specific_heat")


@dataclass(frozen=True)
class ThermalMedium:
    density: float  # kg/m^3
    specific_heat: float  # J/(kg K)
    volume: float  # m^3

    def __post_init__(self):
        _require_positive(self, "density", "specific_heat", "volume")

    @property
    def heat_capacity(self) -> float:
        """Total heat capacity rho * c * V in J/K."""
        return self.density * self.specific_heat * self.volume


@dataclass(frozen=True)
class Environment:
    ambient_temp: float = 24.0
    outlet_air_temp: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.ambient_temp) and math.isfinite(self.outlet_air_temp)):
            raise ValueError("environment temperatures must be finite")
        if self.outlet_air_temp > self.ambient_temp:
            raise ValueError(
                f"outlet air ({self.outlet_air_temp} °C) warmer than ambient "
                f"({self.ambient_temp} °C); only cooling is modeled"
            )


@dataclass(frozen=True)
class ModelParams:
    """Fitted model coefficients.

    ``sigma_km`` is the product of the absorption ratio and the maximum
    contact flow. The two factors are not separately identifiable, so only
    the product is stored.
    """

    sigma_km: float  # m^3/s
    alpha: float  # 1/m
    theta: float  # s/m^3

    def __post_init__(self):
        _require_positive(self, "sigma_km", "alpha", "theta")

    def as_dict(self) -> dict:
        return {"sigma_km": self.sigma_km, "alpha": self.alpha, "theta": self.theta}


@dataclass(frozen=True)
class StimulusCondition:
    flow_rate: float  # m^3/s
    distance: float  # m
    duration: float  # s
    initial_temp: float  # °C

    def __post_init__(self):
        if not (self.flow_rate >= 0 and math.isfinite(self.flow_rate)):
            raise ValueError(f"flow_rate must be >= 0, got {self.flow_rate!r}")
        if not (self.distance >= 0 and math.isfinite(self.distance)):
            raise ValueError(f"distance must be >= 0, got {self.distance!r}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ValueError(f"duration must be > 0, got {self.duration!r}")
        if not math.isfinite(self.initial_temp):
            raise ValueError("initial_temp must be finite")


@dataclass(frozen=True)
class HeatFlux:
    watts: float  # negative = heat leaving the medium


@dataclass(frozen=True, eq=False)
class TemperatureTrace:
    times: np.ndarray
    temps: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        temps = np.asarray(self.temps, dtype=float)
        if times.ndim != 1 or times.shape != temps.shape or times.size == 0:
            raise ValueError("times and temps must be equal-length, non-empty 1-D sequences")
        if times[0] != 0.0:
            raise ValueError(f"trace must start at t=0, starts at {times[0]!r}")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trace times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "temps", temps)

    def __len__(self):
        return self.times.size

    @property
    def samples(self):
        return list(zip(self.times.tolist(), self.temps.tolist()))

    @property
    def duration(self) -> float:
        return float(self.times[-1])


def air_temp_at_distance(env: Environment, params: ModelParams, d: float) -> float:
    """Temperature of the jet after travelling ``d`` metres from the outlet."""
    if d < 0:
        raise ValueError(f"distance must be >= 0, got {d!r}")
    # -expm1 keeps T_a(0) == T_a0 exactly and stays accurate for small d
    return env.outlet_air_temp + (env.ambient_temp - env.outlet_air_temp) * -math.expm1(-params.alpha * d)


def effective_transfer(params: ModelParams, flow_rate: float) -> float:
    """Heat-carrying contact flow ``sigma * K_o(K)`` in m^3/s."""
    if flow_rate < 0:
        raise ValueError(f"flow_rate must be >= 0, got {flow_rate!r}")
    return params.sigma_km * -math.expm1(-params.theta * flow_rate)


def beta(air: AirProperties, medium: ThermalMedium) -> float:
    """Ratio of air volumetric heat capacity to the medium's total heat capacity (1/m^3)."""
    return air.density * air.specific_heat / medium.heat_capacity


def decay_rate(params: ModelParams, air: AirProperties, medium: ThermalMedium, flow_rate: float) -> float:
    """Relaxation rate lambda(K) in 1/s."""
    return beta(air, medium) * effective_transfer(params, flow_rate)


def heat_provided(
    air: AirProperties,
    params: ModelParams,
    cond: StimulusCondition,
    env: Environment,
    current_temp: float,
) -> HeatFlux:
    t_air = air_temp_at_distance(env, params, cond.distance)
    q = -air.density * air.specific_heat * effective_transfer(params, cond.flow_rate) * (current_temp - t_air)
    return HeatFlux(q + 0.0)  # +0.0 normalises -0.0


def _check_time(cond: StimulusCondition, t):
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0) or np.any(t_arr > cond.duration):
        raise ValueError(f"t must lie within [0, {cond.duration}], got {t!r}")
    return t_arr


def skin_temp_closed_form(cond, env, params, air, medium, t):
    """Exact temperature at time ``t`` (scalar or array) after stimulus onset."""
    t_arr = _check_time(cond, t)
    t_air = air_temp_at_distance(env, params, cond.distance)
    lam = decay_rate(params, air, medium, cond.flow_rate)
    out = cond.initial_temp + (t_air - cond.initial_temp) * -np.expm1(-lam * t_arr)
    return float(out) if out.ndim == 0 else out


def cooling_rate(cond, env, params, air, medium, t):
    """Signed dT/dt in °C/s (negative while cooling)."""
    t_arr = _check_time(cond, t)
    t_air = air_temp_at_distance(env, params, cond.distance)
    lam = decay_rate(params, air, medium, cond.flow_rate)
    out = -lam * (cond.initial_temp - t_air) * np.exp(-lam * t_arr)
    out = out + 0.0
    return float(out) if out.ndim == 0 else out


def relax(temp: float, target: float, lam: float, dt: float) -> float:
    """Exact evolution of one constant-flow segment of length ``dt``."""
    return temp + (target - temp) * -math.expm1(-lam * dt)


def rk4_step(deriv: Callable[[float, np.ndarray], np.ndarray], t: float, y, h: float):
    """One classical Runge-Kutta step for ``y' = deriv(t, y)``."""
    k1 = deriv(t, y)
    k2 = deriv(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = deriv(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = deriv(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def sample_times(duration: float, dt: float) -> np.ndarray:
    """Uniform grid 0, dt, 2dt, ... ending exactly at ``duration``."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt!r}")
    if dt > duration * (1 + 1e-12):
        raise ValueError(f"dt ({dt}) exceeds duration ({duration})")
    n = int(math.floor(duration / dt + 1e-9))
    times = np.arange(n + 1, dtype=float) * dt
    if duration - times[-1] > 1e-9 * dt:
        times = np.append(times, duration)
    else:
        times[-1] = duration
    return times


def simulate_trace(cond, env, params, air, medium, dt: float, method: str = "closed_form") -> TemperatureTrace:
    """Sample the temperature response on a uniform grid.

    ``method="rk4"`` integrates the ODE numerically with one fixed RK4
    step per sample; it exists for models where the flow changes over
    time and is checked against the closed form here.
    """
    times = sample_times(cond.duration, dt)
    if method == "closed_form":
        temps = skin_temp_closed_form(cond, env, params, air, medium, times)
    elif method == "rk4":
        t_air = air_temp_at_distance(env, params, cond.distance)
        lam = decay_rate(params, air, medium, cond.flow_rate)

        def deriv(_t, y):
            return -lam * (y - t_air)

        temps = np.empty_like(times)
        temps[0] = cond.initial_temp
        y = np.float64(cond.initial_temp)
        for i in range(1, times.size):
            y = rk4_step(deriv, times[i - 1], y, times[i] - times[i - 1])
            temps[i] = y
    else:
        raise ValueError(f"unknown method {method!r}; expected 'closed_form' or 'rk4'")
    return TemperatureTrace(times, np.atleast_1d(temps))
