"""Wardrop equilibria of MDP congestion games and their cost sensitivity."""
from mdpcg.cycle import (
    build_transformation,
    derive_primal_graph,
    map_equilibrium,
    stochasticity_bound_check,
)
from mdpcg.io import fixture_path, load_game
from mdpcg.model import (
    AffineCost,
    GameSpec,
    GeneralCost,
    Hyperarc,
    build_incidence,
    cost_eval,
    make_game,
    potential_eval,
    power_cost,
    reduce_incidence,
    validate_assumptions,
)
from mdpcg.oracle import mdp_linear_oracle
from mdpcg.sensitivity import (
    cost_sensitivity,
    detect_braess,
    dual_sensitivity,
    finite_difference_check,
    flow_sensitivity,
    perturbation_sweep,
    social_cost_sensitivity,
)
from mdpcg.solver import (
    Equilibrium,
    kkt_residual,
    recover_duals,
    solve,
    solve_frank_wolfe,
    solve_interior_kkt,
    wardrop_gap,
)

__version__ = "0.1.0"
