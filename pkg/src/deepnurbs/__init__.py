"""Neural Poisson solvers with boundary conditions built into a NURBS ansatz.

The solution is sought as ``u = phi * net`` where ``phi`` is a NURBS field
that vanishes on the Dirichlet boundary, so any network output satisfies
the boundary condition exactly.  Training minimizes a Monte Carlo estimate
of the Dirichlet energy.
"""

__version__ = "0.1.0"

from .admissible import (
    AdmissibleScalarField,
    AdmissibleVectorField,
    build_admissible_scalar,
    build_admissible_vector,
    validate_admissibility,
)
from .autodiff import MLPParams, Tensor, init_params, mlp_forward
from .nurbs import ControlNet, KnotVector, eval_basis, eval_geometry, jacobian, make_open_knot_vector
from .optim import AdamConfig, TrainState, adam_step
from .problems import PROBLEMS, ProblemSpec, fd_poisson_oracle, get_problem
from .sampler import SampleBatch, draw_batch, integrate
from .solver import Metrics, SolverConfig, compute_metrics, energy_loss, train

__all__ = [
    "AdamConfig", "AdmissibleScalarField", "AdmissibleVectorField", "ControlNet", "KnotVector",
    "MLPParams", "Metrics", "PROBLEMS", "ProblemSpec", "SampleBatch", "SolverConfig", "Tensor",
    "TrainState", "adam_step", "build_admissible_scalar", "build_admissible_vector",
    "compute_metrics", "draw_batch", "energy_loss", "eval_basis", "eval_geometry",
    "fd_poisson_oracle", "get_problem", "init_params", "integrate", "jacobian",
    "make_open_knot_vector", "mlp_forward", "train", "validate_admissibility",
]
