"""Periodic solutions of retarded functional differential equations.

The period is unknown and handled by rescaling time to [0, 1]. The derivative
of the solution is approximated by piecewise orthogonal collocation, and the
periodicity condition is imposed on the whole state over [-1, 0].
"""

from .errors import (
    DomainError,
    InvalidMesh,
    NoConvergence,
    NoCycleDetected,
    NumericalError,
    PeriodBelowDelay,
    RFDEError,
    SchemaError,
    SingularJacobian,
    UnknownProblem,
)
from .floquet import (
    FloquetReport,
    build_linearized_operator,
    floquet_analysis,
    monodromy_matrix,
    multipliers_and_check,
)
from .greens import CandidateSolution, green_apply, state_view
from .io import SolutionFile, load_solution, save_solution
from .mesh import Discretization, Family, Side, inner_abscissae, outer_mesh, prolong, restrict
from .oracle import extract_reference_orbit, integrate_method_of_steps, run_convergence_study
from .problem import CATALOG, RFDEProblem, discretize_rhs, make_problem
from .solver import (
    IntegralPhase,
    NewtonSettings,
    TrivialPhase,
    continue_natural,
    newton_solve,
    solve_periodic,
)

__version__ = "0.1.0"
