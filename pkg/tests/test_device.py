import math

import numpy as np
import pytest

from vortexcool.calibration import DutyCalibration, invert_duty
from vortexcool.device import DeviceConfig, Scenario, execute_plan, run_scenario
from vortexcool.errors import DeviceLimitError, InputError
from vortexcool.model import simulate_trace
from vortexcool.planner import PlanStep, ProfileTarget, flow_for_delta, plan_profile
from vortexcool.units import lpm_to_m3s, mm_to_m

from conftest import condition

CAL = DutyCalibration(lpm_to_m3s(45.0) / -math.expm1(-2.0), 2.0)
IDEAL = DeviceConfig(CAL, duty_resolution=None, flow_noise_sd=0.0, temp_noise_sd=0.0)


def scenario(phys, commands, distance_mm=35.0, t0=33.0, duration=6.0, dt=0.01):
    return Scenario(phys["medium"], phys["env"], phys["air"], phys["params"], mm_to_m(distance_mm), t0, commands, duration, dt)


def test_constant_duty_matches_closed_form(skin):
    duty = invert_duty(CAL, lpm_to_m3s(32))
    out = run_scenario(scenario(skin, [(0.0, duty)]), IDEAL)
    ref = simulate_trace(condition(32, 35), dt=0.01, **skin)
    assert np.allclose(out.times, ref.times)
    assert np.max(np.abs(out.temp_trace.temps - ref.temps)) < 1e-6
    assert out.temp_trace.temps[-1] == pytest.approx(31.53, abs=0.005)
    assert np.allclose(out.flow_true, lpm_to_m3s(32), rtol=1e-12)


def test_coarse_sampling_still_accurate(skin):
    duty = invert_duty(CAL, lpm_to_m3s(32))
    out = run_scenario(scenario(skin, [(0.0, duty)], dt=0.5), IDEAL)
    ref = simulate_trace(condition(32, 35), dt=0.5, **skin)
    assert np.max(np.abs(out.temp_trace.temps - ref.temps)) < 1e-6


def test_zero_duty_is_flat(skin):
    out = run_scenario(scenario(skin, [(0.0, 0.0)]), DeviceConfig(CAL))
    assert np.all(out.latent_temps == 33.0)
    assert np.all(out.flow_true == 0.0)


def test_no_commands_is_flat(skin):
    out = run_scenario(scenario(skin, []), IDEAL)
    assert np.all(out.temp_trace.temps == 33.0)


def test_traces_share_grid(skin):
    out = run_scenario(scenario(skin, [(0.0, 0.5)], dt=0.1), DeviceConfig(CAL))
    n = out.times.size
    assert len(out.flow_trace) == len(out.commanded_duty_trace) == out.temp_trace.times.size == n
    assert [t for t, _ in out.flow_trace] == out.times.tolist()


def test_seed_determinism(skin):
    cfg = DeviceConfig(CAL, temp_noise_sd=0.05, seed=42)
    a = run_scenario(scenario(skin, [(0.0, 0.6)]), cfg)
    b = run_scenario(scenario(skin, [(0.0, 0.6)]), cfg)
    assert np.array_equal(a.temp_trace.temps, b.temp_trace.temps)
    assert np.array_equal(a.flow_measured, b.flow_measured)


def test_noise_never_touches_latent_state(skin):
    sc = scenario(skin, [(0.0, 0.6), (2.0, 0.3)])
    runs = [run_scenario(sc, DeviceConfig(CAL, temp_noise_sd=0.1, seed=s)) for s in range(4)]
    for r in runs[1:]:
        assert np.array_equal(r.latent_temps, runs[0].latent_temps)
        assert not np.array_equal(r.temp_trace.temps, runs[0].temp_trace.temps)
        assert not np.array_equal(r.flow_measured, runs[0].flow_measured)
    assert np.array_equal(runs[0].latent_temps, run_scenario(sc, DeviceConfig(CAL, flow_noise_sd=0, seed=0)).latent_temps)


def test_valve_lag_never_cools_faster(skin):
    sc = scenario(skin, [(0.0, 0.8), (3.0, 0.2)])
    prev = None
    for tau in (0.0, 0.1, 0.5, 1.0, 3.0):
        out = run_scenario(sc, DeviceConfig(CAL, duty_resolution=None, valve_time_constant=tau, flow_noise_sd=0))
        if prev is not None:
            # up to the step-down the slower valve leaves the skin warmer
            mask = out.times <= 3.0
            assert np.all(out.latent_temps[mask] >= prev[mask] - 1e-12)
        prev = out.latent_temps


def test_quantization_bound(skin):
    rng = np.random.default_rng(5)
    for res in (4, 16, 256):
        cfg = DeviceConfig(CAL, duty_resolution=res, flow_noise_sd=0)
        step = 1.0 / (res - 1)
        for d in rng.uniform(0, 1, 50):
            q = cfg.quantize(d)
            assert abs(q - d) <= step / 2 + 1e-15
            assert abs(CAL(q) - CAL(d)) <= CAL.slope(0.0) * step
            lo = max(0.0, min(q, d))
            assert abs(CAL(q) - CAL(d)) <= CAL.slope(lo) * abs(q - d) + 1e-18


def test_zero_order_hold(skin):
    out = run_scenario(scenario(skin, [(0.0, 0.0), (0.123, 0.5)], dt=0.1), IDEAL)
    assert out.commanded_duty[1] == 0.0 and out.commanded_duty[2] == 0.5
    assert out.latent_temps[2] == 33.0 and out.latent_temps[3] < 33.0


def test_input_errors(skin):
    with pytest.raises(InputError):
        run_scenario(scenario(skin, [(7.0, 0.5)]), IDEAL)
    with pytest.raises(InputError):
        run_scenario(scenario(skin, [(0.0, 1.5)]), IDEAL)
    with pytest.raises(InputError):
        run_scenario(scenario(skin, [(0.0, 0.5)]), DeviceConfig(None))
    with pytest.raises(ValueError):
        scenario(skin, [(1.0, 0.5), (1.0, 0.2)])
    with pytest.raises(ValueError):
        DeviceConfig(CAL, duty_resolution=1)
    with pytest.raises(ValueError):
        DeviceConfig(CAL, flow_noise_sd=-1)


class TestExecutePlan:
    def test_flow_for_delta_round_trip(self, skin):
        end = 31.53
        k = flow_for_delta(33 - end, 6, mm_to_m(35), 33, **skin)
        assert k == pytest.approx(lpm_to_m3s(32), rel=0.01)
        out = execute_plan([PlanStep(0, 6, k, end)], scenario(skin, []), IDEAL)
        assert out.latent_at(6.0) == pytest.approx(end, abs=1e-6)

    def test_multi_segment_profile(self, skin):
        target = ProfileTarget(((2.0, 32.8), (4.0, 32.3), (6.0, 32.2)), mm_to_m(20), 33.0)
        plan = plan_profile(target, 0.5, cal=CAL, **skin)
        out = execute_plan(plan, scenario(skin, [], distance_mm=20), IDEAL)
        for s in plan:
            assert out.latent_at(s.end) == pytest.approx(s.predicted_end_temp, abs=1e-6)

    def test_valve_closes_after_plan(self, skin):
        k = lpm_to_m3s(30)
        out = execute_plan([PlanStep(0, 2, k, 32.5)], scenario(skin, [], duration=4), IDEAL)
        assert out.times[-1] == pytest.approx(4.0)
        after = out.latent_temps[out.times >= 2.0]
        assert np.allclose(after, after[0], atol=1e-12)

    def test_empty_plan_flat(self, skin):
        out = execute_plan([], scenario(skin, []), IDEAL)
        assert np.all(out.latent_temps == 33.0)

    def test_over_device_max(self, skin):
        with pytest.raises(DeviceLimitError):
            execute_plan([PlanStep(0, 6, lpm_to_m3s(50), 31.0)], scenario(skin, []), IDEAL)

    def test_gap_in_plan(self, skin):
        k = lpm_to_m3s(20)
        with pytest.raises(InputError):
            execute_plan([PlanStep(0, 2, k, 32.0), PlanStep(3, 4, k, 31.0)], scenario(skin, []), IDEAL)

    def test_missing_calibration(self, skin):
        with pytest.raises(InputError):
            execute_plan([PlanStep(0, 6, lpm_to_m3s(20), 31.0)], scenario(skin, []), DeviceConfig(None))
