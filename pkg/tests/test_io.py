import io as stdio
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vortexcool import io as vio
from vortexcool import presets
from vortexcool.calibration import synthesize_measurements
from vortexcool.errors import InputError
from vortexcool.psychophysics import TrialRecord, generate_schedule
from vortexcool.planner import PlanStep
from vortexcool.units import lpm_to_m3s, m3s_to_lpm, m_to_mm, mm_to_m

from conftest import paper_conditions


def test_measurement_round_trip(tmp_path, phantom):
    data = synthesize_measurements(phantom["params"], paper_conditions(), phantom["medium"], phantom["air"], phantom["env"], dt=0.5)
    p = tmp_path / "m.csv"
    vio.write_measurements(p, data)
    back = vio.read_measurements(p, phantom["medium"])
    assert len(back.records) == 9
    for a, b in zip(data.records, back.records):
        assert a.record_id == b.record_id
        assert a.condition == b.condition
        assert np.array_equal(a.trace.temps, b.trace.temps)


def test_measurement_header_and_bad_row(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(",".join(vio.MEASUREMENT_HEADER) + "\n0,33,32,35,33,a\n0.1,oops,32,35,33,a\n")
    with pytest.raises(InputError, match=r"m\.csv:3:.*temp_c"):
        vio.read_measurements(p, presets.SILICONE)


def test_condition_change_mid_record(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(",".join(vio.MEASUREMENT_HEADER) + "\n0,33,32,35,33,a\n0.1,32.9,40,35,33,a\n")
    with pytest.raises(InputError, match=":3:"):
        vio.read_measurements(p, presets.SILICONE)


@pytest.mark.parametrize("text", ["", ",".join(vio.MEASUREMENT_HEADER) + "\n", "time_s,temp_c\n0,33\n"])
def test_empty_or_incomplete_csv(tmp_path, text):
    p = tmp_path / "m.csv"
    p.write_text(text)
    with pytest.raises(InputError):
        vio.read_measurements(p, presets.SILICONE)


def test_missing_file(tmp_path):
    with pytest.raises(InputError, match="nope.csv"):
        vio.read_measurements(tmp_path / "nope.csv", presets.SILICONE)


def test_duty_points_round_trip():
    pts = [(0.0, 0.0), (0.5, lpm_to_m3s(30.0)), (1.0, lpm_to_m3s(45.0))]
    buf = stdio.StringIO()
    vio.write_duty_points(buf, pts)
    assert buf.getvalue().splitlines()[0] == "duty,flow_lpm"


def test_params_resolution(tmp_path):
    assert vio.resolve_params("paper-skin") == presets.PAPER_SKIN
    p = tmp_path / "p.json"
    p.write_text(json.dumps({"params": presets.PAPER_PHANTOM.as_dict(), "rmse_c": 0.1}))
    assert vio.resolve_params(str(p)) == presets.PAPER_PHANTOM
    with pytest.raises(InputError, match="missing.json"):
        vio.resolve_params(str(tmp_path / "missing.json"))
    with pytest.raises(InputError):
        vio.params_from_json({"sigma_km": 1e-5, "alpha": 8})
    with pytest.raises(InputError):
        vio.params_from_json({"sigma_km": -1e-5, "alpha": 8, "theta": 1})


def test_bad_json_location(tmp_path):
    p = tmp_path / "s.json"
    p.write_text('{\n  "distance_mm": 35,\n  oops\n}')
    with pytest.raises(InputError, match=r"s\.json:3:3"):
        vio.load_json(p)


def test_plan_round_trip():
    plan = [PlanStep(0.0, 2.0, lpm_to_m3s(20.0), 32.5, 0.4), PlanStep(2.0, 4.0, lpm_to_m3s(10.0), 32.3)]
    back = vio.plan_from_json(json.loads(vio.dump_json(vio.plan_to_json(plan))))
    assert [s.start for s in back] == [0.0, 2.0]
    assert back[1].duty is None
    assert back[0].flow_rate == pytest.approx(plan[0].flow_rate, rel=1e-15)


def test_schedule_round_trip():
    s = generate_schedule(24, [8, 16, 24, 32, 40], 10, seed=7)
    assert vio.schedule_from_json(json.loads(vio.dump_json(vio.schedule_to_json(s)))) == s


def test_responses(tmp_path):
    recs = [TrialRecord(16.0, True, False), TrialRecord(32.0, False, True)]
    p = tmp_path / "r.csv"
    vio.write_responses(p, recs)
    assert vio.read_responses(p) == recs
    with pytest.raises(InputError, match=r"r\.csv:3:.*32"):
        vio.read_responses(p, known_levels=[16.0])


def test_scenario_defaults_and_errors():
    sc = vio.scenario_from_json({"distance_mm": 35, "initial_temp_c": 33, "duration_s": 6, "commands": [{"time_s": 0, "duty": 0.5}]})
    assert sc.medium == presets.SKIN and sc.params == presets.PAPER_SKIN
    assert sc.distance == pytest.approx(0.035) and sc.sample_dt == 0.1
    with pytest.raises(InputError):
        vio.scenario_from_json({"distance_mm": 35})
    with pytest.raises(InputError):
        vio.scenario_from_json({"distance_mm": 35, "initial_temp_c": 33, "duration_s": 6, "medium": "rubber"})


@settings(max_examples=500)
@given(st.floats(0, 1000, allow_nan=False))
def test_unit_round_trip(x):
    # the text written to files re-parses to the identical SI value
    si = lpm_to_m3s(x)
    assert lpm_to_m3s(float(repr(m3s_to_lpm(si)))) == si
    d = mm_to_m(x)
    assert mm_to_m(float(repr(m_to_mm(d)))) == d
