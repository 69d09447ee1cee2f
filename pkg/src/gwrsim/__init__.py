"""Control-plane core and discrete-event simulator for a centrally scheduled,
generate-when-requested quantum network."""

from gwrsim.config import load_config, loads_config
from gwrsim.engine import SimConfig, run

__all__ = ["load_config", "loads_config", "run", "SimConfig"]
__version__ = "0.1.0"
