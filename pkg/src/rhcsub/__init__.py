"""Receding-horizon LQ control under modeling error: Riccati machinery,
suboptimality bounds, identification and adaptive control experiments."""

__version__ = "0.1.0"

from .errors import RhcError  # noqa: E402
from .riccati import (  # noqa: E402
    CostSpec,
    LinearSystem,
    OptimalSolution,
    RhcConfig,
    RiccatiSolution,
    closed_loop,
    gain,
    mpc_gain,
    optimal_solution,
    phi,
    phi_bar,
    riccati_iterate,
    riccati_map,
    solve_dare,
)
from .performance import evaluate, infinite_horizon_cost, performance_gap  # noqa: E402
from .bounds import BoundContext, HorizonRecommendation  # noqa: E402
