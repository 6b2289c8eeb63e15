"""Laguerre (power) diagrams with prescribed cell volumes."""

import warnings

__version__ = "0.1.0"

# numba probes TBB on first parallel launch and warns if it is too old;
# it then falls back to another threading layer, which is fine
warnings.filterwarnings("ignore", message="The TBB threading layer", module="numba")

from .diagram import (  # noqa: E402
    Domain,
    LaguerreDiagram,
    WeightedSeed,
    bisector,
    build_diagram,
    compute_diagram,
    compute_periodic_diagram,
)
from .errors import *  # noqa: E402,F401,F403
from .lloyd import LloydConfig, LloydTrace, algorithm2, energy, energy_gradient, lloyd_step  # noqa: E402
from .transport import (  # noqa: E402
    SolveReport,
    TargetSpec,
    algorithm1,
    hessian_g,
    objective_g,
    solve_weights,
    sphere_packing_init,
)

__all__ = [
    "Domain", "LaguerreDiagram", "WeightedSeed", "bisector", "build_diagram",
    "compute_diagram", "compute_periodic_diagram", "LloydConfig", "LloydTrace",
    "algorithm2", "energy", "energy_gradient", "lloyd_step", "SolveReport",
    "TargetSpec", "algorithm1", "hessian_g", "objective_g", "solve_weights",
    "sphere_packing_init",
]
