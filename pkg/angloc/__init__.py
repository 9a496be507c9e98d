__version__ = "0.1.0"

from .aoa import aoa_fingerprint
from .calibration import calibrate
from .entropy import fingerprint as entropy_fingerprint
from .locator import build_radio_map, locate, loocv_tune
from .simulator import make_radio_scene, synth_trace
