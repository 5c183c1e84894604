"""Stabilized Nitsche-mortar finite elements for a two-subdomain interface problem."""
from .analysis import (ConvergenceReport, eoc, error_h1_broken, error_l2_domain, error_l2_interface,
                       linear_problem, manufactured_problem, run_convergence_study)
from .config import ConfigError, StudyConfig, parse_config
from .coupling import (CouplingBlocks, MergedPartition, MultiplierSpace, assemble_coupling,
                       assemble_flux_flux, assemble_flux_mass, assemble_mortar_mass,
                       assemble_multiplier_mass, estimate_trace_constant, l2_project,
                       merge_partitions, multiplier_space)
from .fem import FeSpace, assemble_load, assemble_stiffness, fe_space, lift_dirichlet, nodal_interpolate
from .mesh import Mesh2D, build_rect_tri_mesh, interface_trace, validate_mesh
from .problem import Discretization, ProblemSpec, discretize
from .system import (MethodParams, SaddleSystem, Solution, SolverFailure, build_saddle_system,
                     evaluate_form, solve)

__version__ = "0.1.0"
