"""Neural-network subspace method for self-adjoint elliptic eigenvalue problems,
with POD reduction of the trained basis before the Galerkin solve."""

from .estimator import SubspaceEigensolver
from .pipeline import RunConfig, compute_errors, condition_report, run, sweep
from .problems import get_problem

__all__ = ["SubspaceEigensolver", "RunConfig", "run", "sweep", "condition_report",
           "compute_errors", "get_problem"]
