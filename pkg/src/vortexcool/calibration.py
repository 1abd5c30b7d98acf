"""Parameter estimation from measured cooling traces, and the PWM duty curve."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import IdentifiabilityError, InfeasibleError, InputError
from .lm import SingularSystemError, levenberg_marquardt
from .model import (
    AirProperties,
    Environment,
    ModelParams,
    StimulusCondition,
    TemperatureTrace,
    ThermalMedium,
    beta,
)
from .presets import DEVICE_MAX_FLOW

PARAM_NAMES = ("sigma_km", "alpha", "theta")
TEMP_RANGE = (-20.0, 50.0)


@dataclass(frozen=True)
class MeasurementRecord:
    condition: StimulusCondition
    trace: TemperatureTrace
    record_id: str = ""

    def __post_init__(self):
        if self.trace.duration > self.condition.duration * (1 + 1e-12):
            raise InputError(
                f"record {self.record_id!r}: trace runs to {self.trace.duration} s, "
                f"past the stimulus duration {self.condition.duration} s"
            )
        lo, hi = TEMP_RANGE
        if np.any(self.trace.temps < lo) or np.any(self.trace.temps > hi):
            raise InputError(f"record {self.record_id!r}: temperatures outside [{lo}, {hi}] °C")


@dataclass(frozen=True)
class MeasurementSet:
    records: tuple
    medium: ThermalMedium
    air: AirProperties
    env: Environment

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        if not self.records:
            raise InputError("measurement set is empty")

    @property
    def n_samples(self) -> int:
        return sum(len(r.trace) for r in self.records)


@dataclass(frozen=True)
class FitConfig:
    initial_guess: ModelParams = ModelParams(sigma_km=1e-5, alpha=10.0, theta=1000.0)
    max_iterations: int = 200
    tolerance: float = 1e-8
    damping_init: float = 1e-3
    frozen: frozenset = frozenset()
    multistart: bool = True  # also try starts from a coarse alpha/theta grid

    def __post_init__(self):
        object.__setattr__(self, "frozen", frozenset(self.frozen))
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        unknown = self.frozen - set(PARAM_NAMES)
        if unknown:
            raise ValueError(f"unknown parameter names in frozen: {sorted(unknown)}")
        if self.frozen >= set(PARAM_NAMES):
            raise ValueError("all parameters frozen; nothing to fit")


@dataclass
class FitResult:
    params: ModelParams
    rmse: float
    iterations: int
    converged: bool
    residuals: np.ndarray
    record_rmse: dict = field(default_factory=dict)
    cost_history: list = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "params": self.params.as_dict(),
            "rmse_c": self.rmse,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "per_record_rmse_c": dict(self.record_rmse),
        }


def _stacked(data: MeasurementSet):
    """Flatten records into arrays so the residual is one vectorised expression."""
    flows, dists, t0s, times, temps = [], [], [], [], []
    for rec in data.records:
        n = len(rec.trace)
        c = rec.condition
        flows.append(np.full(n, c.flow_rate))
        dists.append(np.full(n, c.distance))
        t0s.append(np.full(n, c.initial_temp))
        times.append(rec.trace.times)
        temps.append(rec.trace.temps)
    return tuple(np.concatenate(a) for a in (flows, dists, t0s, times, temps))


def _predict(sigma_km, alpha, theta, b, env, flow, dist, t0, time):
    t_air = env.outlet_air_temp + (env.ambient_temp - env.outlet_air_temp) * -np.expm1(-alpha * dist)
    lam = b * sigma_km * -np.expm1(-theta * flow)
    return t0 + (t_air - t0) * -np.expm1(-lam * time)


def model_residuals(params: ModelParams, data: MeasurementSet) -> np.ndarray:
    """Model minus measurement, one entry per sample, records in order."""
    flow, dist, t0, time, temp = _stacked(data)
    b = beta(data.air, data.medium)
    pred = _predict(params.sigma_km, params.alpha, params.theta, b, data.env, flow, dist, t0, time)
    return pred - temp


def compute_rmse(params: ModelParams, data: MeasurementSet) -> float:
    r = model_residuals(params, data)
    return float(np.sqrt(np.mean(r * r)))


def _check_identifiable(data: MeasurementSet, free: Sequence[str]):
    informative = [r.condition for r in data.records if r.condition.flow_rate > 0]
    flows = {c.flow_rate for c in informative}
    dists = {c.distance for c in informative}
    n_samples = sum(len(r.trace) - 1 for r in data.records if r.condition.flow_rate > 0)
    problems = []
    if "theta" in free and len(flows) < 2:
        problems.append("theta needs at least two distinct non-zero flow rates")
    if "alpha" in free and len(dists) < 2:
        problems.append("alpha needs at least two distinct distances")
    if "sigma_km" in free and not informative:
        problems.append("sigma_km needs at least one record with non-zero flow")
    if n_samples < len(free):
        problems.append(f"{n_samples} informative samples for {len(free)} free parameters")
    if problems:
        raise IdentifiabilityError("; ".join(problems))


def fit_model_params(data: MeasurementSet, config: FitConfig = FitConfig()) -> FitResult:
    """Least-squares estimate of the model coefficients from measured traces.

    Free parameters are optimised in log space so they stay positive.
    Parameters named in ``config.frozen`` keep their initial-guess values,
    which is how the skin protocol reuses alpha and theta from the phantom.
    """
    free = [n for n in PARAM_NAMES if n not in config.frozen]
    _check_identifiable(data, free)

    flow, dist, t0, time, temp = _stacked(data)
    b = beta(data.air, data.medium)
    base = config.initial_guess.as_dict()

    def unpack(z):
        vals = dict(base)
        with np.errstate(over="ignore"):
            for name, v in zip(free, z):
                vals[name] = float(np.exp(v))
        return vals

    def residual(z):
        v = unpack(z)
        return _predict(v["sigma_km"], v["alpha"], v["theta"], b, data.env, flow, dist, t0, time) - temp

    def solve(z0, max_iterations):
        return levenberg_marquardt(
            residual,
            z0,
            max_iterations=max_iterations,
            xtol=config.tolerance,
            damping=config.damping_init,
        )

    z0 = np.log([base[n] for n in free])
    try:
        res = solve(z0, config.max_iterations)
    except SingularSystemError as exc:
        raise IdentifiabilityError(f"singular normal equations at the initial guess: {exc}") from exc

    if config.multistart and len(free) > 1 and "sigma_km" in free:
        seed = _grid_start(residual, free, z0)
        if seed is not None:
            try:
                alt = solve(seed, config.max_iterations)
            except SingularSystemError:
                alt = None
            if alt is not None and alt.cost < res.cost:
                res = alt

    params = ModelParams(**unpack(res.x))
    residuals = res.residuals
    rmse = float(np.sqrt(np.mean(residuals * residuals)))
    per_record = {}
    start = 0
    for i, rec in enumerate(data.records):
        n = len(rec.trace)
        chunk = residuals[start : start + n]
        per_record[rec.record_id or str(i)] = float(np.sqrt(np.mean(chunk * chunk)))
        start += n
    return FitResult(
        params=params,
        rmse=rmse,
        iterations=res.iterations,
        converged=res.converged,
        residuals=residuals,
        record_rmse=per_record,
        cost_history=res.cost_history,
        message=res.message,
    )


_GRID = {"alpha": np.geomspace(0.5, 60.0, 7), "theta": np.geomspace(100.0, 1e4, 7)}


def _grid_start(residual, free, z0):
    """Best start on a coarse alpha/theta grid, with sigma_km fitted at each node.

    The objective has poor local minima (alpha collapsing toward 0 is the
    usual one) that a single start from a generic guess can fall into.
    """
    grid_names = [n for n in free if n in _GRID]
    i_sigma = free.index("sigma_km")
    best = None
    for node in itertools.product(*(_GRID[n] for n in grid_names)):
        z = z0.copy()
        for name, value in zip(grid_names, node):
            z[free.index(name)] = math.log(value)

        def sub(zs, z=z):
            zz = z.copy()
            zz[i_sigma] = zs[0]
            return residual(zz)

        r = levenberg_marquardt(sub, z[i_sigma : i_sigma + 1], max_iterations=50, xtol=1e-6, check_rank=False)
        if best is None or r.cost < best[0]:
            z = z.copy()
            z[i_sigma] = r.x[0]
            best = (r.cost, z)
    return None if best is None else best[1]


def synthesize_measurements(
    params: ModelParams,
    conditions: Iterable[StimulusCondition],
    medium: ThermalMedium,
    air: AirProperties,
    env: Environment,
    dt: float = 0.1,
    noise_sd: float = 0.0,
    rng: Optional[np.random.Generator] = None,
) -> MeasurementSet:
    """Traces generated by the forward model, optionally with Gaussian noise."""
    from .model import simulate_trace

    if noise_sd > 0 and rng is None:
        raise ValueError("noise_sd > 0 requires an explicit rng")
    records = []
    for i, cond in enumerate(conditions):
        tr = simulate_trace(cond, env, params, air, medium, dt)
        temps = tr.temps
        if noise_sd > 0:
            temps = temps + rng.normal(0.0, noise_sd, temps.size)
        records.append(MeasurementRecord(cond, TemperatureTrace(tr.times, temps), record_id=f"r{i}"))
    return MeasurementSet(tuple(records), medium, air, env)


# --- PWM duty ratio -> output flow --------------------------------------------


@dataclass(frozen=True)
class DutyCalibration:
    """Saturating map ``flow = f_max * (1 - exp(-rate * duty))``."""

    f_max: float  # m^3/s
    rate: float  # dimensionless
    points: tuple = ()  # (duty, flow m^3/s) pairs the curve was fitted to
    residual_rms: float = 0.0  # m^3/s

    def __post_init__(self):
        if not (self.f_max > 0 and self.rate > 0):
            raise ValueError("duty curve needs positive f_max and rate")

    def __call__(self, duty):
        d = np.asarray(duty, dtype=float)
        out = self.f_max * -np.expm1(-self.rate * d)
        return float(out) if out.ndim == 0 else out

    @property
    def max_flow(self) -> float:
        return self(1.0)

    def slope(self, duty) -> float:
        return self.f_max * self.rate * math.exp(-self.rate * duty)


def fit_duty_curve(points, device_max: float = DEVICE_MAX_FLOW, noise_threshold: float = 0.02) -> DutyCalibration:
    """Fit the saturating duty curve to measured ``(duty, flow m^3/s)`` points.

    Drops in flow between consecutive duties larger than
    ``noise_threshold * max(flow)`` trigger a warning; the fit proceeds.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise InputError("duty points must be (duty, flow) pairs")
    if pts.shape[0] < 3:
        raise InputError(f"need at least 3 duty points, got {pts.shape[0]}")
    duty, flow = pts[:, 0], pts[:, 1]
    if np.any(duty < 0) or np.any(duty > 1):
        raise InputError("duty values must lie in [0, 1]")
    if np.any(flow < 0) or np.any(flow > device_max * (1 + 1e-9)):
        raise InputError("flow values must lie in [0, device max]")
    if np.unique(duty).size < 2 or not np.any(flow > 0):
        raise InputError("duty points are degenerate")

    order = np.argsort(duty, kind="stable")
    drops = -np.diff(flow[order])
    if np.any(drops > noise_threshold * flow.max()):
        warnings.warn("duty curve data are not monotone beyond the noise threshold", stacklevel=2)

    scale = flow.max()

    def residual(z):
        fm, c = np.exp(z)
        return (fm * -np.expm1(-c * duty) - flow) / scale

    # coarse search over the rate gives a start the solver cannot miss
    best = None
    for c0 in (0.3, 1.0, 3.0, 10.0, 30.0):
        shape = -np.expm1(-c0 * duty)
        fm0 = float(shape @ flow / (shape @ shape))
        if fm0 <= 0:
            continue
        z0 = np.log([fm0, c0])
        cost = float(np.sum(residual(z0) ** 2))
        if best is None or cost < best[0]:
            best = (cost, z0)
    res = levenberg_marquardt(residual, best[1], check_rank=False)
    fm, c = np.exp(res.x)
    rms = float(np.sqrt(np.mean(res.residuals**2))) * scale
    cal = DutyCalibration(float(fm), float(c), tuple(map(tuple, pts.tolist())), rms)
    if cal.max_flow > device_max * (1 + 1e-9):
        raise InfeasibleError(
            f"fitted curve reaches {cal.max_flow:.6g} m^3/s at full duty, above the device max {device_max:.6g}",
            bound=device_max,
        )
    return cal


def invert_duty(cal: DutyCalibration, flow: float) -> float:
    """Duty ratio that produces ``flow`` (m^3/s) on the fitted curve."""
    if flow < 0:
        raise ValueError(f"flow must be >= 0, got {flow!r}")
    top = cal.max_flow
    if flow > top:
        if flow - top <= 1e-12 * top:
            return 1.0
        raise InfeasibleError(
            f"flow {flow:.6g} m^3/s exceeds the achievable maximum {top:.6g} m^3/s", bound=top
        )
    if flow == 0:
        return 0.0
    duty = -math.log1p(-flow / cal.f_max) / cal.rate
    return min(max(duty, 0.0), 1.0)

