"""Scikit-learn style front end for the reduced subspace eigensolver.

``fit`` takes quadrature points and weights (defaulting to the problem's own
grid), trains the basis network, compresses the basis by POD and solves the
projected eigenproblem. ``transform`` evaluates the computed eigenfunctions
at new points.
"""

from contextlib import contextmanager
import logging
import math
import time

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .assembly import OperatorCoeffs, assemble_mass, assemble_stiffness, gram_factor
from .basisnet import Architecture, eval_basis, init_coefficients, init_params, make_envelope
from .linalg import NotPositiveDefiniteError, Spectrum, cond_number, gen_sym_eig, sym_eig
from .pod import lift_coefficients, pod_reduce_factor, reduce_basis
from .problems import get_problem
from .quadrature import QuadratureGrid
from .training import TrainConfig, train

__all__ = ["SubspaceEigensolver", "StageError", "reduce_and_project", "pinv_floor_eig", "PINV_FLOOR"]

log = logging.getLogger(__name__)

PINV_FLOOR = 1e-300
_CHUNK_BUDGET = 20_000_000  # n_pts * M above which training runs in chunks


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage, cause):
        super().__init__(f"{stage}: {type(cause).__name__}: {cause}")
        self.stage = stage


@contextmanager
def _stage(name):
    try:
        yield
    except StageError:
        raise
    except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def reduce_and_project(basis, grid, coeffs, pod_gram, gamma, indicator="sqrt"):
    """POD-compress ``basis`` and assemble the reduced stiffness and mass matrices.

    The reduced matrices are integrated from the values of ``psi = Phi U``
    rather than formed as ``U^T A U``: the congruence multiplies rounding
    errors in ``A`` by ``|U|^2``, which for trained bases is large enough
    to make the reduced mass matrix indefinite.
    """
    red = pod_reduce_factor(gram_factor(basis, grid, coeffs, pod_gram), gamma, indicator)
    rbasis = reduce_basis(basis, red.U)
    return red, rbasis, assemble_stiffness(rbasis, grid, coeffs), assemble_mass(rbasis, grid)


def pinv_floor_eig(A, B, floor=PINV_FLOOR):
    """Solve ``A v = lambda B v`` on the range of ``B``.

    ``B`` is diagonalised and directions with eigenvalue ``<= floor`` are
    discarded, which is the pseudo-inverse weighting. Needs no Cholesky
    factor, so it runs on mass matrices that are indefinite in floating
    point. Spurious eigenvalues from rounding-level directions are kept.
    """
    sb = sym_eig(B)
    keep = sb.values > floor
    if not np.any(keep):
        raise np.linalg.LinAlgError("mass matrix has no eigenvalue above the floor")
    T = sb.vectors[:, keep] / np.sqrt(sb.values[keep])
    C = T.T @ A @ T
    C = 0.5 * (C + C.T)
    sc = sym_eig(C)
    return Spectrum(sc.values, T @ sc.vectors, sc.residual_bound)


class SubspaceEigensolver(TransformerMixin, BaseEstimator):
    """Lowest ``n_eigs`` eigenpairs of a benchmark operator in a trained subspace.

    Parameters left as ``None`` take the problem's defaults.

    Fitted attributes: ``eigenvalues_`` (k,), ``coef_`` (M, k) expansion of
    the eigenfunctions in the network basis, ``n_reduced_``, ``reduction_``,
    ``loss_trace_``, ``params_``, ``conditions_``, ``solver_`` and the
    eigenfunction values/gradients on the fit grid (``values_``, ``grads_``).
    """

    def __init__(self, problem="laplace2d", n_basis=None, n_eigs=None, seed=1, eps_tol=None,
                 n_max=5000, gamma=None, pod_gram="mass", indicator="sqrt", reduce=True,
                 hidden=(100, 100, 100), chunk_size=None, compute_conditions=True):
        self.problem = problem
        self.n_basis = n_basis
        self.n_eigs = n_eigs
        self.seed = seed
        self.eps_tol = eps_tol
        self.n_max = n_max
        self.gamma = gamma
        self.pod_gram = pod_gram
        self.indicator = indicator
        self.reduce = reduce
        self.hidden = hidden
        self.chunk_size = chunk_size
        self.compute_conditions = compute_conditions

    def _resolve(self):
        spec = get_problem(self.problem)
        M = spec.M if self.n_basis is None else int(self.n_basis)
        k = spec.k if self.n_eigs is None else int(self.n_eigs)
        if not 1 <= k <= M:
            raise ValueError(f"need 1 <= n_eigs <= n_basis, got n_eigs={k}, n_basis={M}")
        gamma = spec.gamma if self.gamma is None else float(self.gamma)
        if not 0.0 < gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
        if self.pod_gram not in ("mass", "stiffness"):
            raise ValueError(f"pod_gram must be 'mass' or 'stiffness', got {self.pod_gram!r}")
        config = TrainConfig(eps_tol=spec.eps_tol if self.eps_tol is None else float(self.eps_tol),
                             n_max=int(self.n_max))
        return spec, M, k, gamma, config

    def fit(self, X=None, y=None, sample_weight=None):
        """Train and solve on quadrature points ``X`` with weights ``sample_weight``.

        With ``X=None`` the problem's default tensor grid is used.
        """
        spec, M, k, gamma, config = self._resolve()
        if X is None:
            if sample_weight is not None:
                raise ValueError("sample_weight given without points")
            grid = spec.grid()
        else:
            X = check_array(X, dtype=np.float64)
            if X.shape[1] != spec.d:
                raise ValueError(f"{spec.name} is {spec.d}-dimensional, got points of shape {X.shape}")
            if sample_weight is None:
                raise ValueError("quadrature weights (sample_weight) are required with explicit points")
            wts = np.asarray(sample_weight, dtype=np.float64)
            if wts.shape != (X.shape[0],) or not np.all(wts > 0):
                raise ValueError("sample_weight must be positive with one entry per point")
            grid = QuadratureGrid(X.copy(), wts.copy())
        self.grid_ = grid
        self.n_features_in_ = spec.d
        timings = {}

        envelope = make_envelope(spec.envelope, spec.bounds)
        coeffs = OperatorCoeffs(spec.alpha, spec.potential(grid.points))
        self.envelope_ = envelope

        with _stage("init"):
            params = init_params(Architecture(spec.d, self.hidden, M), self.seed)
            w = init_coefficients(M, k, self.seed)

        chunk = self.chunk_size
        if chunk is None and grid.n_points * M > _CHUNK_BUDGET:
            chunk = max(1, _CHUNK_BUDGET // M)
        t0 = time.perf_counter()
        with _stage("train"):
            params, trace = train(params, w, envelope, grid, coeffs, config, chunk_size=chunk)
        timings["train"] = time.perf_counter() - t0
        self.params_ = params
        self.loss_trace_ = trace

        t0 = time.perf_counter()
        with _stage("evaluate"):
            basis = eval_basis(params, envelope, grid.points)

        conditions = {}
        A = B = None
        if self.compute_conditions or not self.reduce:
            with _stage("assemble"):
                A = assemble_stiffness(basis, grid, coeffs)
                B = assemble_mass(basis, grid)
        if self.compute_conditions:
            conditions["kappa_A"] = cond_number(A)
            conditions["kappa_B"] = cond_number(B)
        timings["assemble"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        self.cholesky_failure_ = None
        if self.reduce:
            with _stage("reduce"):
                red, rbasis, A_red, B_red = reduce_and_project(
                    basis, grid, coeffs, self.pod_gram, gamma, self.indicator)
                if red.K < k:
                    raise ValueError(f"reduced dimension K={red.K} is below the {k} requested eigenpairs")
            timings["reduce"] = time.perf_counter() - t0
            if self.compute_conditions:
                conditions["kappa_A_red"] = cond_number(A_red)
                conditions["kappa_B_red"] = cond_number(B_red)
            t0 = time.perf_counter()
            with _stage("solve"):
                sol = gen_sym_eig(A_red, B_red)
            C = sol.vectors[:, :k]
            self.coef_ = lift_coefficients(red.U, C)
            self.values_ = rbasis.values @ C
            self.grads_ = rbasis.grads @ C
            self.reduction_ = red
            self.n_reduced_ = red.K
            self.solver_ = "cholesky"
        else:
            with _stage("solve"):
                try:
                    sol = gen_sym_eig(A, B)
                    self.solver_ = "cholesky"
                except NotPositiveDefiniteError as exc:
                    log.warning("unreduced mass matrix: %s; using the pseudo-inverse fallback", exc)
                    self.cholesky_failure_ = {"pivot_index": exc.index, "pivot_value": exc.value}
                    sol = pinv_floor_eig(A, B)
                    self.solver_ = "pinv-floor"
                if sol.values.size < k:
                    raise ValueError(f"only {sol.values.size} eigenpairs available, {k} requested")
            self.coef_ = sol.vectors[:, :k]
            self.values_ = basis.values @ self.coef_
            self.grads_ = basis.grads @ self.coef_
            self.reduction_ = None
            self.n_reduced_ = M
        timings["solve"] = time.perf_counter() - t0

        self.eigenvalues_ = sol.values[:k].copy()
        self.conditions_ = conditions
        self.timings_ = timings
        G = (self.values_ * grid.weights[:, None]).T @ self.values_
        self.b_orthonormality_ = float(np.max(np.abs(G - np.eye(k))))
        if not math.isfinite(self.b_orthonormality_):
            raise StageError("solve", FloatingPointError("non-finite eigenfunction values"))
        return self

    def transform(self, X):
        """Eigenfunction values at points ``X``, shape (n, n_eigs)."""
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected points with {self.n_features_in_} coordinates, got {X.shape[1]}")
        return eval_basis(self.params_, self.envelope_, X).values @ self.coef_
