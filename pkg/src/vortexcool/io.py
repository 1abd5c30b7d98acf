"""Readers and writers for the toolkit's CSV and JSON files.

Files use L/min for flow and mm for distance; everything is converted
to SI on the way in and back on the way out. Parse errors raise
:class:`InputError` naming the file and line.
"""

from __future__ import annotations

import csv
import io
import json
import math
from collections import OrderedDict
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .calibration import DutyCalibration, MeasurementRecord, MeasurementSet
from .errors import InputError
from .model import (
    AirProperties,
    Environment,
    ModelParams,
    StimulusCondition,
    TemperatureTrace,
    ThermalMedium,
)
from .presets import AIR_0C, LAB_ENV, MEDIUM_PRESETS, PARAM_PRESETS
from .psychophysics import TrialRecord, TrialSchedule
from .units import lpm_to_m3s, m3s_to_lpm, m_to_mm, mm3_to_m3, mm_to_m

MEASUREMENT_HEADER = ("time_s", "temp_c", "flow_lpm", "distance_mm", "initial_temp_c", "record_id")
DUTY_HEADER = ("duty", "flow_lpm")
RESPONSE_HEADER = ("trial_index", "comparison_level", "standard_first", "response_comparison_colder")
SIM_HEADER = ("time_s", "temp_c", "flow_lpm_measured", "duty")

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f"}


def _open_csv(path, required: Sequence[str]):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None:
        raise InputError(f"{path}: file is empty")
    missing = [c for c in required if c not in reader.fieldnames]
    if missing:
        raise InputError(f"{path}: missing columns {missing}; header is {reader.fieldnames}")
    return path, reader


def _num(path, line, row, key):
    raw = row.get(key)
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise InputError(f"{path}:{line}: column {key!r} is not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise InputError(f"{path}:{line}: column {key!r} is not finite: {raw!r}")
    return value


def _flag(path, line, row, key):
    raw = (row.get(key) or "").strip().lower()
    if raw in _TRUE:
        return True
    if raw in _FALSE:
        return False
    raise InputError(f"{path}:{line}: column {key!r} is not a boolean: {row.get(key)!r}")


def _fmt(x) -> str:
    return repr(float(x))


# --- measurements -----------------------------------------------------------


def read_measurements(
    path,
    medium: ThermalMedium,
    air: AirProperties = AIR_0C,
    env: Environment = LAB_ENV,
) -> MeasurementSet:
    """Load a measurement CSV into records grouped by ``record_id``.

    Each record's flow, distance and initial temperature must be constant;
    its duration is taken from the last sample time. Extra columns (such
    as those written by the device emulator) are ignored.
    """
    path, reader = _open_csv(path, MEASUREMENT_HEADER)
    groups: "OrderedDict[str, dict]" = OrderedDict()
    for line, row in enumerate(reader, start=2):
        rid = (row.get("record_id") or "").strip()
        if not rid:
            raise InputError(f"{path}:{line}: empty record_id")
        vals = {k: _num(path, line, row, k) for k in MEASUREMENT_HEADER[:-1]}
        g = groups.setdefault(rid, {"cond": None, "times": [], "temps": [], "first_line": line})
        cond = (vals["flow_lpm"], vals["distance_mm"], vals["initial_temp_c"])
        if g["cond"] is None:
            g["cond"] = cond
        elif g["cond"] != cond:
            raise InputError(f"{path}:{line}: record {rid!r} changes flow/distance/initial temperature mid-record")
        g["times"].append(vals["time_s"])
        g["temps"].append(vals["temp_c"])
    if not groups:
        raise InputError(f"{path}: no data rows")

    records = []
    for rid, g in groups.items():
        flow, dist, t0 = g["cond"]
        times = np.array(g["times"])
        order = np.argsort(times, kind="stable")
        times, temps = times[order], np.array(g["temps"])[order]
        where = f"{path}: record {rid!r} (from line {g['first_line']})"
        try:
            trace = TemperatureTrace(times, temps)
            cond = StimulusCondition(lpm_to_m3s(flow), mm_to_m(dist), float(times[-1]), t0)
            records.append(MeasurementRecord(cond, trace, record_id=rid))
        except ValueError as exc:
            raise InputError(f"{where}: {exc}") from exc
    return MeasurementSet(tuple(records), medium, air, env)


def write_measurements(path_or_file, data: MeasurementSet):
    rows = []
    for i, rec in enumerate(data.records):
        c = rec.condition
        rid = rec.record_id or f"r{i}"
        for t, T in zip(rec.trace.times, rec.trace.temps):
            rows.append((_fmt(t), _fmt(T), _fmt(m3s_to_lpm(c.flow_rate)), _fmt(m_to_mm(c.distance)), _fmt(c.initial_temp), rid))
    _write_rows(path_or_file, MEASUREMENT_HEADER, rows)


def _write_rows(path_or_file, header, rows):
    if hasattr(path_or_file, "write"):
        w = csv.writer(path_or_file, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        return
    with open(path_or_file, "w", newline="") as fh:
        _write_rows(fh, header, rows)


# --- duty calibration -------------------------------------------------------


def read_duty_points(path) -> list:
    """(duty, flow m^3/s) pairs from a duty CSV."""
    path, reader = _open_csv(path, DUTY_HEADER)
    pts = [(_num(path, line, row, "duty"), lpm_to_m3s(_num(path, line, row, "flow_lpm"))) for line, row in enumerate(reader, start=2)]
    if not pts:
        raise InputError(f"{path}: no data rows")
    return pts


def write_duty_points(path_or_file, points):
    _write_rows(path_or_file, DUTY_HEADER, [(_fmt(d), _fmt(m3s_to_lpm(f))) for d, f in points])


# --- parameters, media ------------------------------------------------------


def params_to_json(params: ModelParams) -> dict:
    return params.as_dict()


def params_from_json(obj) -> ModelParams:
    if isinstance(obj, dict) and "params" in obj:  # a fit report
        obj = obj["params"]
    try:
        return ModelParams(float(obj["sigma_km"]), float(obj["alpha"]), float(obj["theta"]))
    except (KeyError, TypeError) as exc:
        raise InputError(f"params need sigma_km, alpha and theta: {exc}") from exc
    except ValueError as exc:
        raise InputError(str(exc)) from exc


def load_json(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise InputError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def resolve_params(spec) -> ModelParams:
    """A preset name, a params/fit-report JSON path, or an inline dict."""
    if isinstance(spec, ModelParams):
        return spec
    if isinstance(spec, dict):
        return params_from_json(spec)
    if spec in PARAM_PRESETS:
        return PARAM_PRESETS[spec]
    path = Path(spec)
    if not path.exists():
        raise InputError(f"params file not found: {path} (presets: {', '.join(PARAM_PRESETS)})")
    return params_from_json(load_json(path))


def medium_from_json(obj) -> ThermalMedium:
    """Preset name or {density, specific_heat, volume_mm3}."""
    if isinstance(obj, str):
        if obj not in MEDIUM_PRESETS:
            raise InputError(f"unknown medium preset {obj!r}; choose from {sorted(MEDIUM_PRESETS)}")
        return MEDIUM_PRESETS[obj]
    try:
        return ThermalMedium(float(obj["density"]), float(obj["specific_heat"]), mm3_to_m3(float(obj["volume_mm3"])))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid medium {obj!r}: {exc}") from exc


def dump_json(obj, path_or_file=None) -> str:
    text = json.dumps(obj, indent=2, allow_nan=True) + "\n"
    if path_or_file is None:
        return text
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        Path(path_or_file).write_text(text)
    return text


# --- plans ------------------------------------------------------------------


def plan_to_json(plan) -> list:
    return [
        {
            "start_s": s.start,
            "end_s": s.end,
            "flow_lpm": m3s_to_lpm(s.flow_rate),
            "duty": s.duty,
            "predicted_end_temp_c": s.predicted_end_temp,
        }
        for s in plan
    ]


def plan_from_json(items) -> list:
    from .planner import PlanStep

    try:
        return [
            PlanStep(float(i["start_s"]), float(i["end_s"]), lpm_to_m3s(float(i["flow_lpm"])), float(i["predicted_end_temp_c"]), None if i.get("duty") is None else float(i["duty"]))
            for i in items
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid plan entry: {exc}") from exc


# --- psychophysics ----------------------------------------------------------


def schedule_to_json(s: TrialSchedule) -> dict:
    return {
        "standard": s.standard,
        "comparisons": list(s.comparisons),
        "repetitions": s.repetitions,
        "trials": [{"level": lv, "standard_first": sf} for lv, sf in s.trials],
        "rest_every": s.rest_every,
        "seed": s.seed,
        "stimulus_s": s.stimulus_s,
        "gap_s": s.gap_s,
    }


def schedule_from_json(obj) -> TrialSchedule:
    try:
        trials = tuple((float(t["level"]), bool(t["standard_first"])) for t in obj["trials"])
        comps = tuple(float(c) for c in obj["comparisons"])
        reps = int(obj.get("repetitions", len(trials) // max(len(comps), 1)))
        return TrialSchedule(float(obj["standard"]), comps, reps, trials, int(obj["rest_every"]), obj.get("seed"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid schedule: {exc}") from exc


def read_responses(path, known_levels: Optional[Iterable[float]] = None) -> list:
    path, reader = _open_csv(path, RESPONSE_HEADER)
    known = None if known_levels is None else {float(x) for x in known_levels}
    records = []
    for line, row in enumerate(reader, start=2):
        level = _num(path, line, row, "comparison_level")
        if known is not None and level not in known:
            raise InputError(f"{path}:{line}: comparison level {level:g} is not in the schedule {sorted(known)}")
        records.append(TrialRecord(level, _flag(path, line, row, "standard_first"), _flag(path, line, row, "response_comparison_colder")))
    if not records:
        raise InputError(f"{path}: no data rows")
    return records


def write_responses(path_or_file, records: Sequence[TrialRecord]):
    rows = [(i, _fmt(r.comparison_level), int(r.standard_first), int(r.response_comparison_colder)) for i, r in enumerate(records)]
    _write_rows(path_or_file, RESPONSE_HEADER, rows)


# --- device emulator --------------------------------------------------------


def scenario_from_json(obj, source="scenario"):
    """Build a Scenario from the JSON form (L/min, mm, s, °C)."""
    from .device import Scenario

    try:
        env = Environment(float(obj.get("ambient_temp_c", LAB_ENV.ambient_temp)), float(obj.get("outlet_air_temp_c", LAB_ENV.outlet_air_temp)))
        air_obj = obj.get("air")
        air = AIR_0C if air_obj is None else AirProperties(float(air_obj["density"]), float(air_obj["specific_heat"]))
        commands = obj.get("commands", [])
        cmds = tuple((float(c["time_s"]), float(c["duty"])) for c in commands)
        return Scenario(
            medium=medium_from_json(obj.get("medium", "skin")),
            env=env,
            air=air,
            params=resolve_params(obj.get("params", "paper-skin")),
            distance=mm_to_m(float(obj["distance_mm"])),
            initial_temp=float(obj["initial_temp_c"]),
            commands=cmds,
            duration=float(obj["duration_s"]),
            sample_dt=float(obj.get("sample_dt_s", 0.1)),
        )
    except InputError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"{source}: invalid scenario: {exc!r}") from exc


def write_sim_output(path_or_file, outputs: Sequence, record_ids: Optional[Sequence[str]] = None):
    """Emulator traces as CSV.

    The leading columns are the emulator's own; the trailing
    ``flow_lpm,distance_mm,initial_temp_c,record_id`` columns make the file
    loadable as a measurement CSV. ``flow_lpm`` there is the true (noise
    free) flow, so only constant-flow runs form valid calibration records.
    """
    header = SIM_HEADER + ("flow_lpm", "distance_mm", "initial_temp_c", "record_id")
    rows = []
    for k, out in enumerate(outputs):
        rid = record_ids[k] if record_ids else f"sim{k}"
        dist = m_to_mm(out.meta["distance_m"])
        t0 = out.meta["initial_temp_c"]
        for i in range(out.times.size):
            rows.append(
                (
                    _fmt(out.times[i]),
                    _fmt(out.temp_trace.temps[i]),
                    _fmt(m3s_to_lpm(out.flow_measured[i])),
                    _fmt(out.commanded_duty[i]),
                    _fmt(m3s_to_lpm(out.flow_true[i])),
                    _fmt(dist),
                    _fmt(t0),
                    rid,
                )
            )
    _write_rows(path_or_file, header, rows)


def write_trace(path_or_file, trace: TemperatureTrace):
    _write_rows(path_or_file, ("time_s", "temp_c"), [(_fmt(t), _fmt(T)) for t, T in zip(trace.times, trace.temps)])


def calibration_to_json(cal: DutyCalibration) -> dict:
    return {"f_max_lpm": m3s_to_lpm(cal.f_max), "rate": cal.rate, "residual_rms_lpm": m3s_to_lpm(cal.residual_rms)}
