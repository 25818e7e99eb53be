"""Periodic steady states of ``M u' + K(u) u = j(t)`` by periodic Parareal and multi-harmonic solves."""
from .algorithms import (
    OuterConfig,
    assemble_defects,
    linear_pppc_mh,
    pp_ic,
    pp_pc_jacobi,
    pppc_mh_newton,
    residual_R,
    sequential_steady_state,
    splitting_iteration,
    tp_mh,
)
from .core import (
    ConvergenceError,
    PeriodicProblem,
    SingularMatrixError,
    SingularPencilError,
    SolverReport,
    TimeGrid,
    make_problem_linear,
    make_problem_scalar_nonlinear,
)
from .linalg import BlockCyclicSystem, MultiHarmonicSolver, build_spectrum, solve_block_cyclic_mh
from .metrics import SolveCounter, mixed_norm
from .models import KappaPiecewise, estimate_constants, nonlinear_diffusion_1d, rl_circuit_1d
from .propagators import PropagatorConfig

__version__ = "0.1.0"

__all__ = [
    "BlockCyclicSystem", "ConvergenceError", "KappaPiecewise", "MultiHarmonicSolver", "OuterConfig",
    "PeriodicProblem", "PropagatorConfig", "SingularMatrixError", "SingularPencilError", "SolveCounter",
    "SolverReport", "TimeGrid", "assemble_defects", "build_spectrum", "estimate_constants",
    "linear_pppc_mh", "make_problem_linear", "make_problem_scalar_nonlinear", "mixed_norm",
    "nonlinear_diffusion_1d", "pp_ic", "pp_pc_jacobi", "pppc_mh_newton", "residual_R",
    "rl_circuit_1d", "sequential_steady_state", "solve_block_cyclic_mh", "splitting_iteration", "tp_mh",
]
