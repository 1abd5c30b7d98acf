"""Reference coefficients and material constants.

The phantom coefficients come from a silicone calibration; the skin set
shares alpha and theta and refits only ``sigma_km``. Densities and
specific heats are handbook values in J/(kg K); only their ratio enters
the model, so a kJ/J slip in a source table would cancel anyway.

Slab volumes are 25 mm radius cylinders: 1 mm thick for the phantom,
0.2 mm for skin (depth of the cold receptors).
"""

from .model import AirProperties, Environment, ModelParams, ThermalMedium
from .units import lpm_to_m3s, mm3_to_m3

PAPER_PHANTOM = ModelParams(sigma_km=4.91e-5, alpha=8.91, theta=1.18e3)
PAPER_SKIN = ModelParams(sigma_km=2.59e-5, alpha=8.91, theta=1.18e3)

AIR_0C = AirProperties(density=1.32, specific_heat=1007.0)
SILICONE = ThermalMedium(density=970.0, specific_heat=1600.0, volume=mm3_to_m3(1963.5))
SKIN = ThermalMedium(density=1200.0, specific_heat=3600.0, volume=mm3_to_m3(392.7))

LAB_ENV = Environment(ambient_temp=24.0, outlet_air_temp=0.0)

DEVICE_MAX_FLOW = lpm_to_m3s(45.0)

# Phantom calibration protocol: five flows at 35 mm, five distances at 32 L/min.
CALIBRATION_FLOWS_LPM = (8.0, 16.0, 24.0, 32.0, 40.0)
CALIBRATION_DISTANCES_MM = (5.0, 35.0, 65.0, 95.0, 125.0)
CALIBRATION_DURATION_S = 6.0

PARAM_PRESETS = {"paper-phantom": PAPER_PHANTOM, "paper-skin": PAPER_SKIN}
MEDIUM_PRESETS = {"skin": SKIN, "silicone": SILICONE}


def calibration_conditions():
    """The nine distinct (flow L/min, distance mm) pairs of the phantom protocol.

    (32 L/min, 35 mm) belongs to both sweeps and is listed once.
    """
    pairs = [(f, 35.0) for f in CALIBRATION_FLOWS_LPM]
    pairs += [(32.0, d) for d in CALIBRATION_DISTANCES_MM if d != 35.0]
    return pairs
