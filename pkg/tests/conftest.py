import pytest

from vortexcool import presets
from vortexcool.model import StimulusCondition
from vortexcool.units import lpm_to_m3s, mm_to_m


@pytest.fixture
def skin():
    """Skin physics with the reference skin coefficients."""
    return dict(env=presets.LAB_ENV, params=presets.PAPER_SKIN, air=presets.AIR_0C, medium=presets.SKIN)


@pytest.fixture
def phantom():
    return dict(env=presets.LAB_ENV, params=presets.PAPER_PHANTOM, air=presets.AIR_0C, medium=presets.SILICONE)


def condition(flow_lpm, distance_mm, t0=33.0, duration=6.0):
    return StimulusCondition(lpm_to_m3s(flow_lpm), mm_to_m(distance_mm), duration, t0)


def paper_conditions(t0=33.0, duration=6.0):
    return [condition(f, d, t0, duration) for f, d in presets.calibration_conditions()]


def pytest_terminal_summary(terminalreporter):
    """One line per acceptance criterion, with the measured values attached by each test."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance.py" not in getattr(rep, "nodeid", "") or rep.when != "call" and outcome != "error":
                continue
            detail = dict(rep.user_properties).get("detail", "")
            lines.append((rep.nodeid.split("::")[-1], "PASS" if outcome == "passed" else "FAIL", detail))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, verdict, detail in sorted(lines):
            terminalreporter.write_line(f"{verdict}  {name}  {detail}")
