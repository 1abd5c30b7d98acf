"""Command-line entry point.

Exit codes: 0 success, 1 infeasible target or failed analysis, 2 bad input.
Output files go to ``--output-dir`` (default ``$VORTEXCOOL_OUTPUT_DIR`` or
the current directory); a short human summary is printed to stdout.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import io as vio
from .calibration import FitConfig, PARAM_NAMES, fit_duty_curve, fit_model_params, synthesize_measurements
from .device import DeviceConfig, execute_plan, run_scenario
from .errors import IdentifiabilityError, InfeasibleError, InputError
from .model import (
    Environment,
    StimulusCondition,
    ThermalMedium,
    air_temp_at_distance,
    cooling_rate,
    simulate_trace,
)
from .planner import ProfileTarget, RateTarget, plan_profile, plan_rate
from .presets import AIR_0C, MEDIUM_PRESETS, PARAM_PRESETS, calibration_conditions
from .psychophysics import aggregate, fit_psychometric, generate_schedule, group_stats
from .units import lpm_to_m3s, m3s_to_lpm, mm3_to_m3, mm_to_m

OUTPUT_ENV = "VORTEXCOOL_OUTPUT_DIR"


def _sig3(x) -> str:
    if x is None:
        return "-"
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return f"{x:.3g}"


def _out_dir(args) -> Path:
    d = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or ".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _env(args) -> Environment:
    return Environment(ambient_temp=args.te, outlet_air_temp=args.ta0)


def _medium(args) -> ThermalMedium:
    if args.medium == "custom":
        if None in (args.density, args.specific_heat, args.volume_mm3):
            raise InputError("--medium custom needs --density, --specific-heat and --volume-mm3")
        return ThermalMedium(args.density, args.specific_heat, mm3_to_m3(args.volume_mm3))
    return MEDIUM_PRESETS[args.medium]


def _add_physics(p, medium_default="skin", params_default="paper-skin"):
    g = p.add_argument_group("physics")
    g.add_argument("--params", default=params_default, help=f"preset ({', '.join(PARAM_PRESETS)}) or params/fit-report JSON")
    g.add_argument("--medium", default=medium_default, choices=[*MEDIUM_PRESETS, "custom"])
    g.add_argument("--density", type=float, help="custom medium density, kg/m^3")
    g.add_argument("--specific-heat", type=float, help="custom medium specific heat, J/(kg K)")
    g.add_argument("--volume-mm3", type=float, help="custom medium volume, mm^3")
    g.add_argument("--ta0", type=float, default=0.0, help="air temperature at the outlet, °C")
    g.add_argument("--te", type=float, default=24.0, help="ambient temperature, °C")


def _add_output(p):
    p.add_argument("-o", "--output-dir", help=f"directory for output files (default ${OUTPUT_ENV} or .)")


# --- subcommands -------------------------------------------------------------


def cmd_simulate(args):
    params = vio.resolve_params(args.params)
    env, medium = _env(args), _medium(args)
    cond = StimulusCondition(lpm_to_m3s(args.flow), mm_to_m(args.distance), args.duration, args.t0)
    trace = simulate_trace(cond, env, params, AIR_0C, medium, min(args.dt, args.duration), args.method)
    rate0 = cooling_rate(cond, env, params, AIR_0C, medium, 0.0)
    summary = {
        "flow_lpm": args.flow,
        "distance_mm": args.distance,
        "duration_s": args.duration,
        "initial_temp_c": args.t0,
        "final_temp_c": float(trace.temps[-1]),
        "delta_t_c": float(trace.temps[-1] - args.t0),
        "initial_rate_c_per_s": rate0,
        "equilibrium_temp_c": air_temp_at_distance(env, params, cond.distance),
        "params": params.as_dict(),
        "method": args.method,
    }
    out = _out_dir(args)
    vio.write_trace(out / "trace.csv", trace)
    vio.dump_json(summary, out / "summary.json")
    print(
        f"dT = {_sig3(summary['delta_t_c'])} °C after {_sig3(args.duration)} s; "
        f"initial rate {_sig3(rate0)} °C/s; equilibrium {_sig3(summary['equilibrium_temp_c'])} °C"
    )
    return 0


def cmd_fit(args):
    env, medium = _env(args), _medium(args)
    data = vio.read_measurements(args.measurements, medium, AIR_0C, env)
    frozen = frozenset(n.strip() for n in (args.freeze or "").split(",") if n.strip())
    unknown = frozen - set(PARAM_NAMES)
    if unknown:
        raise InputError(f"--freeze: unknown parameter(s) {sorted(unknown)}; choose from {PARAM_NAMES}")
    if args.init is not None:
        init = vio.resolve_params(args.init)
    elif frozen:
        # frozen coefficients default to the phantom reference values
        init = PARAM_PRESETS["paper-phantom"]
    else:
        init = FitConfig().initial_guess
    config = FitConfig(initial_guess=init, max_iterations=args.max_iter, tolerance=args.tol, frozen=frozen)
    result = fit_model_params(data, config)
    report = result.to_dict()
    report["frozen"] = sorted(frozen)
    report["n_samples"] = data.n_samples
    report["n_records"] = len(data.records)
    vio.dump_json(report, _out_dir(args) / "fit_report.json")
    p = result.params
    print(
        f"sigma_km = {_sig3(p.sigma_km)} m^3/s, alpha = {_sig3(p.alpha)} 1/m, theta = {_sig3(p.theta)} s/m^3; "
        f"RMSE {_sig3(result.rmse)} °C; {result.iterations} iterations; converged={result.converged}"
    )
    if not result.converged:
        print(f"fit did not converge: {result.message}", file=sys.stderr)
        return 1
    return 0


def _read_profile(path):
    path = Path(path)
    if path.suffix.lower() == ".json":
        obj = vio.load_json(path)
        pts = obj["waypoints"] if isinstance(obj, dict) else obj
        return [(float(t), float(T)) for t, T in pts]
    import csv

    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return [(float(r["time_s"]), float(r["temp_c"])) for r in rows]
    except (KeyError, ValueError) as exc:
        raise InputError(f"{path}: profile CSV needs time_s,temp_c columns: {exc}") from exc


def cmd_plan(args):
    params = vio.resolve_params(args.params)
    env, medium = _env(args), _medium(args)
    cal = fit_duty_curve(vio.read_duty_points(args.duty_csv)) if args.duty_csv else None
    device_max = None if args.device_max <= 0 else lpm_to_m3s(args.device_max)
    dist = mm_to_m(args.distance)
    chosen = [x is not None for x in (args.rate, args.delta, args.profile)]
    if sum(chosen) != 1:
        raise InputError("give exactly one of --rate, --delta or --profile")
    if args.rate is not None:
        plan = plan_rate(RateTarget(args.rate, dist, args.t0), args.duration, params, env, AIR_0C, medium, cal, device_max)
    elif args.delta is not None:
        target = ProfileTarget(((args.duration, args.t0 - args.delta),), dist, args.t0)
        plan = plan_profile(target, None, params, env, AIR_0C, medium, cal, device_max)
    else:
        target = ProfileTarget(tuple(_read_profile(args.profile)), dist, args.t0)
        plan = plan_profile(target, args.step, params, env, AIR_0C, medium, cal, device_max)
    vio.dump_json(vio.plan_to_json(plan), _out_dir(args) / "plan.json")
    for s in plan:
        duty = "" if s.duty is None else f", duty {_sig3(s.duty)}"
        print(f"{_sig3(s.start)}-{_sig3(s.end)} s: {_sig3(m3s_to_lpm(s.flow_rate))} L/min{duty} -> {_sig3(s.predicted_end_temp)} °C")
    return 0


def cmd_psycho_schedule(args):
    if args.reps < 1:
        raise InputError("--reps must be >= 1")
    if not args.levels:
        raise InputError("--levels must list at least one comparison level")
    sched = generate_schedule(args.standard, args.levels, args.reps, args.rest_every, args.seed)
    vio.dump_json(vio.schedule_to_json(sched), _out_dir(args) / "schedule.json")
    print(f"{len(sched.trials)} trials, {len(sched.comparisons)} levels x {sched.repetitions}, rest every {sched.rest_every}")
    return 0


def cmd_psycho_fit(args):
    known = None
    if args.schedule:
        known = vio.schedule_from_json(vio.load_json(args.schedule)).comparisons
    participants = {}
    for path in args.responses:
        records = vio.read_responses(path, known)
        data = aggregate(records)
        fit = fit_psychometric(data, args.orientation, args.method)
        entry = fit.to_dict()
        entry["levels"] = data.levels.tolist()
        entry["n_trials"] = data.n_trials.tolist()
        participants[Path(path).stem] = (fit, entry)
    group = {}
    for subset in ("s_curve_only", "all"):
        try:
            group[subset] = group_stats([f for f, _ in participants.values()], subset).to_dict()
        except ValueError:
            group[subset] = None
    report = {"participants": {k: e for k, (_, e) in participants.items()}, "group": group}
    vio.dump_json(report, _out_dir(args) / "psycho_report.json")
    for name, (fit, _) in participants.items():
        print(f"{name}: PSE {_sig3(fit.pse)}, JND {_sig3(fit.jnd)} ({fit.classification})")
    for subset, g in group.items():
        if g:
            print(
                f"{subset} (n={g['n']}): PSE {_sig3(g['pse_mean'])} ± {_sig3(g['pse_sd'])}, "
                f"JND {_sig3(g['jnd_mean'])} ± {_sig3(g['jnd_sd'])}"
            )
    return 0


def _calibration_for(args, scenario_obj):
    if args.duty_csv:
        return fit_duty_curve(vio.read_duty_points(args.duty_csv))
    cal_obj = scenario_obj.get("calibration") if isinstance(scenario_obj, dict) else None
    if cal_obj is None:
        raise InputError("no duty calibration: pass --duty-csv or add a 'calibration' block to the scenario")
    if "points" in cal_obj:
        return fit_duty_curve([(float(d), lpm_to_m3s(float(f))) for d, f in cal_obj["points"]])
    from .calibration import DutyCalibration

    try:
        return DutyCalibration(lpm_to_m3s(float(cal_obj["f_max_lpm"])), float(cal_obj["rate"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid calibration block: {exc}") from exc


def cmd_devsim(args):
    objs = [vio.load_json(p) for p in args.scenarios]
    scenarios = [vio.scenario_from_json(o, source=str(p)) for o, p in zip(objs, args.scenarios)]
    cal = _calibration_for(args, objs[0])
    config = DeviceConfig(
        calibration=cal,
        duty_resolution=None if args.resolution == 0 else args.resolution,
        max_flow=lpm_to_m3s(args.device_max),
        valve_time_constant=args.valve_tau,
        flow_noise_sd=lpm_to_m3s(args.flow_noise),
        temp_noise_sd=args.temp_noise,
        seed=args.seed,
    )
    if args.plan:
        if len(scenarios) != 1:
            raise InputError("--plan runs against exactly one scenario")
        plan = vio.plan_from_json(vio.load_json(args.plan))
        outputs = [execute_plan(plan, scenarios[0], config)]
    else:
        # distinct noise streams per scenario, still fixed by --seed
        outputs = []
        for k, sc in enumerate(scenarios):
            cfg = config if k == 0 else DeviceConfig(**{**config.__dict__, "seed": [args.seed, k]})
            outputs.append(run_scenario(sc, cfg))
    ids = [Path(p).stem for p in args.scenarios]
    if len(set(ids)) != len(ids):
        ids = [f"{s}_{k}" for k, s in enumerate(ids)]
    out = _out_dir(args)
    vio.write_sim_output(out / "devsim.csv", outputs, ids)
    summary = {
        rid: {
            "final_temp_c": float(o.temp_trace.temps[-1]),
            "final_latent_temp_c": float(o.latent_temps[-1]),
            "delta_t_c": float(o.latent_temps[-1] - o.latent_temps[0]),
            "mean_flow_lpm": float(m3s_to_lpm(np.mean(o.flow_true))),
            "n_samples": int(o.times.size),
        }
        for rid, o in zip(ids, outputs)
    }
    vio.dump_json({"runs": summary, "seed": args.seed}, out / "devsim_summary.json")
    for rid, s in summary.items():
        print(f"{rid}: dT = {_sig3(s['delta_t_c'])} °C over {s['n_samples']} samples")
    return 0


def cmd_synth(args):
    params = vio.resolve_params(args.params)
    env, medium = _env(args), _medium(args)
    conds = [StimulusCondition(lpm_to_m3s(f), mm_to_m(d), args.duration, args.t0) for f, d in calibration_conditions()]
    rng = np.random.default_rng(args.seed)
    data = synthesize_measurements(params, conds, medium, AIR_0C, env, args.dt, args.noise, rng)
    vio.write_measurements(_out_dir(args) / "measurements.csv", data)
    print(f"{len(data.records)} records, {data.n_samples} samples, noise {_sig3(args.noise)} °C")
    return 0


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vortexcool", description="Vortex-effect skin cooling: model, fit, plan, psychophysics, device emulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="forward-simulate one cooling episode")
    p.add_argument("--flow", type=float, required=True, help="output flow, L/min")
    p.add_argument("--distance", type=float, required=True, help="outlet-to-skin distance, mm")
    p.add_argument("--duration", type=float, default=6.0, help="s")
    p.add_argument("--t0", type=float, required=True, help="initial temperature, °C")
    p.add_argument("--dt", type=float, default=0.1, help="sample spacing, s")
    p.add_argument("--method", choices=("closed_form", "rk4"), default="closed_form")
    _add_physics(p)
    _add_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="estimate model coefficients from a measurement CSV")
    p.add_argument("measurements")
    p.add_argument("--freeze", help="comma-separated parameters held at their --init values, e.g. alpha,theta")
    p.add_argument("--init", help="initial guess: preset or params JSON (default: generic guess, or paper-phantom with --freeze)")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-8)
    _add_physics(p, medium_default="silicone")
    _add_output(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("plan", help="flow/duty commands for a target rate, drop or profile")
    p.add_argument("--rate", type=float, help="target initial cooling rate magnitude, °C/s")
    p.add_argument("--delta", type=float, help="target temperature drop over --duration, °C")
    p.add_argument("--profile", help="waypoints as JSON [[t, T], ...] or CSV time_s,temp_c")
    p.add_argument("--distance", type=float, required=True, help="mm")
    p.add_argument("--t0", type=float, required=True, help="initial temperature, °C")
    p.add_argument("--duration", type=float, default=6.0, help="s (rate and delta targets)")
    p.add_argument("--step", type=float, help="control period for profiles, s")
    p.add_argument("--duty-csv", help="duty,flow_lpm points; adds duty ratios to the plan")
    p.add_argument("--device-max", type=float, default=45.0, help="device max flow, L/min (<= 0 disables)")
    _add_physics(p)
    _add_output(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("psycho", help="constant-stimuli schedules and psychometric fits")
    psub = p.add_subparsers(dest="action", required=True)
    q = psub.add_parser("schedule")
    q.add_argument("--standard", type=float, required=True)
    q.add_argument("--levels", type=_float_list, required=True, help="comma-separated comparison levels")
    q.add_argument("--reps", type=int, required=True)
    q.add_argument("--rest-every", type=int, default=5)
    q.add_argument("--seed", type=int, default=0)
    _add_output(q)
    q.set_defaults(func=cmd_psycho_schedule)
    q = psub.add_parser("fit")
    q.add_argument("responses", nargs="+", help="one response CSV per participant")
    q.add_argument("--schedule", help="schedule JSON; responses must use its levels")
    q.add_argument("--orientation", choices=("ascending", "descending"), default="ascending", help="descending when larger levels feel warmer (distance)")
    q.add_argument("--method", choices=("lsq", "mle"), default="lsq")
    _add_output(q)
    q.set_defaults(func=cmd_psycho_fit)

    p = sub.add_parser("devsim", help="run scenario JSON(s) through the device emulator")
    p.add_argument("scenarios", nargs="+")
    p.add_argument("--plan", help="plan JSON to execute instead of the scenario's commands")
    p.add_argument("--duty-csv")
    p.add_argument("--resolution", type=int, default=256, help="PWM levels (0 = continuous)")
    p.add_argument("--device-max", type=float, default=45.0, help="L/min")
    p.add_argument("--valve-tau", type=float, default=0.0, help="valve time constant, s")
    p.add_argument("--flow-noise", type=float, default=0.5, help="flow sensor noise SD, L/min")
    p.add_argument("--temp-noise", type=float, default=0.0, help="temperature noise SD, °C")
    p.add_argument("--seed", type=int, default=0)
    _add_output(p)
    p.set_defaults(func=cmd_devsim)

    p = sub.add_parser("synth", help="synthetic measurements at the nine calibration conditions")
    p.add_argument("--t0", type=float, default=33.0)
    p.add_argument("--duration", type=float, default=6.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--noise", type=float, default=0.0, help="Gaussian noise SD, °C")
    p.add_argument("--seed", type=int, default=0)
    _add_physics(p, medium_default="silicone", params_default="paper-phantom")
    _add_output(p)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        if exc.bound is not None:
            print(f"achievable bound: {exc.bound!r}", file=sys.stderr)
        if exc.device_bound is not None:
            print(f"achievable with this device: {exc.device_bound!r}", file=sys.stderr)
        return 1
    except IdentifiabilityError as exc:
        print(f"error: parameters not identifiable: {exc}", file=sys.stderr)
        return 2
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
