"""Sectorwise eigenbasis solver for the 1D time-dependent Schrodinger
equation with explicitly time-dependent Hamiltonians.

The time range is split into sectors; on each one the potential is frozen at
the midpoint time and the wave function is expanded over the eigenfunctions
of that stationary problem, computed by a constant-reference shooting method
on a shared Lobatto mesh.  The expansion coefficients are propagated by
exponential steps with a modified-Neumann correction, and all eigenfunction
integrals use exponentially fitted Lobatto quadrature tuned to the local
frequencies.
"""

from .errors import (ConfigError, DomainError, EFConstructionError,
                     EigenvalueSearchError, ModelError, NumericsError)
from .mesh import LOBATTO_NODES, SpatialMesh, build_mesh
from .potential import (InitialState, PotentialModel, ProblemSpec,
                        SeparableForm, SeparableTerm, get_problem,
                        problem1, problem2, problem3, sector_average)
from .quadrature import (EFRule, build_ef_rule, classical_lobatto_weights,
                         composite_augmented, composite_classical,
                         integrate_product, integrate_weighted_product)
from .reference import (ErrorReport, GridSolution, analytic_problem1,
                        crank_nicolson_solve, err_abs, err_norm)
from .sector import (CoefficientState, TimeSector, build_sector,
                     carry_coefficients, delta_v, project_initial,
                     synthesize_wavefunction)
from .specfun import eta, eta0, eta1, xi
from .stationary import (Basis, Eigenpair, StepReference, StepReferences,
                         build_references, compute_basis, shoot,
                         transfer_step)
from .propagator import (PropagatorConfig, SubstepOperators, jacobi_eigh,
                         legendre_fit, neumann_n1, propagate_sector,
                         step_order2, step_order4)
from .cli import RunConfig, build_sector_chain, converge, run, solve

__version__ = "0.1.0"
