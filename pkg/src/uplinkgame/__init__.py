"""Distributed power allocation for an N-user, K-channel uplink to one access
point, treated as a potential game.

Submodules: ``model`` (instance data, rates, potential), ``waterfill``
(best responses), ``dynamics`` (A-IWF, S-IWF, projected gradient, simultaneous
IWF), ``oracle`` (certified optimum and equilibrium checks), ``metrics``
(collisions, efficiency), ``scenario`` (seeded random instances) and
``experiments`` (Monte Carlo harness and CLI).
"""

from .dynamics import (
    RunTrace,
    StepSchedule,
    StoppingRule,
    run_aiwf,
    run_pgd,
    run_simultaneous_iwf,
    run_siwf,
)
from .metrics import CollisionStats, count_collisions, efficiency
from .model import (
    InfeasibleProfileError,
    NetworkInstance,
    aggregate_broadcast,
    ipn,
    potential,
    potential_gradient,
    sum_rate,
    user_rate,
    user_rates,
)
from .oracle import (
    EquilibriumReport,
    OptimumCertificate,
    solve_max_potential,
    spectral_radius,
    verify_ne,
)
from .scenario import ScenarioSpec, generate, generate_correlated, make_example1
from .waterfill import best_response, br_residual, water_fill

__version__ = "0.1.0"

__all__ = [
    "NetworkInstance",
    "InfeasibleProfileError",
    "aggregate_broadcast",
    "ipn",
    "potential",
    "potential_gradient",
    "sum_rate",
    "user_rate",
    "user_rates",
    "water_fill",
    "best_response",
    "br_residual",
    "StepSchedule",
    "StoppingRule",
    "RunTrace",
    "run_aiwf",
    "run_siwf",
    "run_pgd",
    "run_simultaneous_iwf",
    "OptimumCertificate",
    "EquilibriumReport",
    "solve_max_potential",
    "verify_ne",
    "spectral_radius",
    "CollisionStats",
    "count_collisions",
    "efficiency",
    "ScenarioSpec",
    "generate",
    "generate_correlated",
    "make_example1",
]
