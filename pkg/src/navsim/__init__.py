"""navsim: deterministic software-in-the-loop quadrotor navigation simulator."""

__version__ = "0.1.0"

from .config import SimConfig, load_config  # noqa: F401
from .runtime import ScenarioScript, Simulator, load_scenario, run_scenario  # noqa: F401
