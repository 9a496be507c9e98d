from .intel5300 import intel5300_to_trace, parse_intel5300, read_intel5300
from .scene import SceneSpec, load_scene
from .trace_format import dumps_trace, load_trace, loads_trace, save_trace
