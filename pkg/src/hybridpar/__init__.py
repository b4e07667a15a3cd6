"""Optimal control of 1D semilinear parabolic systems with one optimizable switching time.

The switching time is handled by mapping each phase onto a fixed pseudo-time
interval, so the reduced cost is differentiable in both the control and the
switching time.
"""

__version__ = "0.1.0"

from .errors import (DimensionMismatch, HybridParError, InvalidInterval, InvalidMesh,
                     InvalidParams, NewtonDiverged, NonFiniteState, OutOfRange,
                     RequiresSecondDerivatives, SingularOperator, SolverFailure)
from .fem1d import (SpatialMesh, TriDiagOperator, assemble_mass, assemble_stiffness,
                    build_uniform_mesh, subdomain_weight_vector, tridiag_solve)
from .timemap import PseudoTimeGrid, TimeMap
from .problem import (BUILTINS, HeatProblem, HybridProblem, LotkaVolterra, LVParams,
                      build_problem, heat_problem, lotka_volterra)
from .controls import ControlField, control_bounds, control_weights
from .forward import (NewtonOptions, StateTrajectory, solve_original_time, solve_state,
                      solve_tangent)
from .adjoint import CostateTrajectory, apply_k, apply_kstar, duality_pairings, solve_costate
from .reduced import (Gradient, HessianAction, eval_cost, eval_gradient, hessian_form,
                      hessian_vector, inner, transport_cost_pair)
from .optimize import BBOptions, OptimizationReport, project, project_tau, run_bb
from .diagnostics import (check_pontryagin, fd_audit, hamiltonian_trace, project_critical,
                          second_order_probe)

__all__ = [name for name in dir() if not name.startswith("_")]
