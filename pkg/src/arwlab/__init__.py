"""arwlab: a simulation lab for activated random walk on the line.

Layers, bottom up:

- streams / _kernels: counter-based instruction stacks (replay-exact).
- core: site-wise configurations, toppling, stabilization, odometer.
- carpet: block/hole bookkeeping for emission runs on the comb-like initial
  state, with conservation counters and the mass-balance replay check.
- blockstats: exact jump laws, drift identities, tail bounds, and statistics
  pooled from recorded runs.
- ensemble: seeded Monte Carlo grids with deterministic file outputs.
- cli: arwlab command line front end.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    BudgetExceededError,
    Configuration,
    IllegalTopplingError,
    ParameterError,
    StackSystem,
    odometer_at_origin,
    stabilize,
    topple,
)
from .streams import LANE_L, LANE_R, LANE_SINGLE, SLEEP, STEP_LEFT, STEP_RIGHT  # noqa: F401
