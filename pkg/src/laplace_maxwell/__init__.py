"""Stabilized P1 finite elements for the Laplace-domain Maxwell system on the unit square."""
from .assembly import AssemblyVariant, SparseSystem, assemble, quadratic_form, solve, solve_cg
from .estimator import (AdaptHistory, EstimatorConfig, IndicatorField, adaptive_loop, boundary_residual,
                        effectivity, global_estimate, indicators, interior_residual, mark)
from .fe_space import DofMap, FeFunction, interpolate
from .mesh import Mesh, build_structured, mesh_size, refine_marked, refine_uniform
from .norms import ErrorRecord, apriori_weight, rate, relative_errors, triple_norm, weighted_l2
from .problem import (ManufacturedSolution, PermittivityField, ProblemSpec, boundary_data, eps_eval,
                      eps_grad, exact_solution, manufactured_source)

__version__ = "0.1.0"
