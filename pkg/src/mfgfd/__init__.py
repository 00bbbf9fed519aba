"""Finite-difference solvers for second-order mean field games on the 2-torus."""

from .torus_grid import (
    TorusGrid,
    GridField,
    TimeMesh,
    SpaceTimeField,
    FourVectorField,
    d1_plus,
    d2_plus,
    one_sided_diffs,
    laplace5,
    cell_average,
    inner2,
    mass,
    norm_sup,
    norm_lp,
    seminorm_w1,
    bilinear_interp,
    trilinear_interp,
    restrict,
)
from .hamiltonian import PowerHamiltonian, upwind_part, weighted_bregman_gap, inequality_suite
from .cost_ops import (
    DiscreteDensity,
    LocalCost,
    BilaplacianCost,
    CostSolveError,
    eval_cost,
    monotone_pairing,
    smoothing_bounds_check,
)
from .dynamics import (
    HjbStepConfig,
    LinearSolveContract,
    NonConvergence,
    PositivityError,
    hjb_residual,
    hjb_step_solve,
    hjb_step_picard,
    transport_apply,
    linearized_hjb_apply,
    adjoint_apply,
    fp_step_solve,
    adjoint_check,
)
from .solver import (
    EvolutiveProblem,
    ErgodicProblem,
    FixedPointConfig,
    EvolutiveSolution,
    ErgodicSolution,
    PerturbationPair,
    OuterNonConvergence,
    InversePowerStall,
    solve_evolutive,
    solve_ergodic,
    system_residuals,
    forward_backward_identity_gap,
    identity_terms,
    apriori_monitors,
)
from .study import convergence_study, write_study
from .config import RunConfig, ConfigError, load_config

__version__ = "0.1.0"
