"""Multi-agent composite optimization via gradient tracking and surrogate minimization."""

from .errors import CapabilityError, ConfigError, ConvergenceError
from .network import (
    MixingMatrix,
    TimeVaryingNetwork,
    Topology,
    chebyshev_mix,
    check_B_strong_connectivity,
    estimate_tv_contraction,
    generate_topology,
    generate_tv_network,
    metropolis_weights,
    spectral_rho,
    star_master_matrix,
)
from .problem import (
    AllSpace,
    Ball,
    BallIndicator,
    Box,
    CompositeProblem,
    L1Term,
    LogisticLoss,
    QuadraticLoss,
    ZeroTerm,
    build_problem,
    centralized_solution,
    estimate_beta,
    load_agent_csv,
    make_example1_problem,
    make_ridge_problem,
    prox_g,
)
from .rates import (
    RateInputs,
    RateReport,
    TVRateInputs,
    chebyshev_round_count,
    corollary_complexity,
    inputs_from_constants,
    rate_inputs,
    stability_polynomial,
    theorem_rate_tv,
    theorem_rate_undirected,
    tv_rate_inputs,
)
from .solver import NetworkState, RunTrace, SolverConfig, init_state, run
from .surrogate import (
    SubproblemResult,
    SurrogateSpec,
    solve_subproblem,
    subproblem_solver,
    surrogate_constants,
)

__version__ = "0.1.0"
