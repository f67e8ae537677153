"""Proper orthogonal decomposition of a trained basis.

Two entry points give the same modes in exact arithmetic. ``pod_reduce``
diagonalises the Gram matrix. ``pod_reduce_factor`` works from a factor
``X`` with ``X^T X = Gram`` (QR, then a Jacobi SVD of ``R``) and resolves
singular values down to ``eps * sigma_max`` instead of eigenvalues down to
``eps * lambda_max``; trained bases have Gram spectra spanning well past
1e16, so the pipeline uses the factor form.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .basisnet import BasisEval
from .linalg import svd_jacobi, sym_eig

__all__ = [
    "ReductionResult",
    "UnusableBasisError",
    "energy_indicator",
    "pod_reduce",
    "pod_reduce_factor",
    "reduce_basis",
    "reduced_matrices",
    "lift_coefficients",
    "projection_error",
    "PODReducer",
]


class UnusableBasisError(ValueError):
    """The Gram matrix has no positive eigenvalue."""


@dataclass
class ReductionResult:
    """POD modes ``U`` (M, K) with ``U^T Gram U = I_K``.

    ``gram_eigs`` holds the positive Gram eigenvalues in descending order;
    ``indicator[N-1]`` is the energy fraction captured by the first N modes.
    """

    U: np.ndarray
    gram_eigs: np.ndarray
    K: int
    indicator: np.ndarray
    gamma: float
    dropped_nonpositive: int
    indicator_kind: str = "sqrt"

    def to_dict(self):
        return {
            "K": int(self.K),
            "M": int(self.U.shape[0]),
            "gamma": self.gamma,
            "indicator_kind": self.indicator_kind,
            "dropped_nonpositive": int(self.dropped_nonpositive),
            "gram_eigs": [float(x) for x in self.gram_eigs],
            "indicator": [float(x) for x in self.indicator],
        }


def energy_indicator(eigs, kind="sqrt"):
    """Cumulative energy fraction I(N), N = 1..len(eigs).

    ``kind="plain"`` sums the eigenvalues, ``kind="sqrt"`` their square roots.
    """
    eigs = np.asarray(eigs, dtype=np.float64)
    if kind == "sqrt":
        s = np.sqrt(eigs)
    elif kind == "plain":
        s = eigs
    else:
        raise ValueError(f"unknown indicator kind {kind!r}")
    c = np.cumsum(s)
    return c / c[-1]


def pod_reduce(gram, gamma, indicator_kind="sqrt"):
    """Keep the smallest K with ``I(K) >= 1 - gamma`` over the positive spectrum."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    spec = sym_eig(gram)
    order = np.argsort(-spec.values, kind="stable")
    vals = spec.values[order]
    vecs = spec.vectors[:, order]
    positive = vals > 0.0
    n_drop = int(np.count_nonzero(~positive))
    if n_drop == vals.size:
        raise UnusableBasisError("Gram matrix has no positive eigenvalue")
    vals = vals[positive]
    vecs = vecs[:, positive]

    ind = energy_indicator(vals, indicator_kind)
    K = int(np.argmax(ind >= 1.0 - gamma)) + 1
    U = vecs[:, :K] / np.sqrt(vals[:K])
    return ReductionResult(U, vals, K, ind, float(gamma), n_drop, indicator_kind)


def pod_reduce_factor(X, gamma, indicator_kind="sqrt"):
    """POD from a factor ``X`` (n, M) of the Gram matrix ``X^T X``.

    Same selection rule and output as :func:`pod_reduce`; ``gram_eigs`` are
    the squared singular values of ``X``.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected a matrix factor, got shape {X.shape}")
    R = np.linalg.qr(X, mode="r")
    sigma, V = svd_jacobi(R)
    positive = sigma > 0.0
    n_drop = int(np.count_nonzero(~positive))
    if n_drop == sigma.size:
        raise UnusableBasisError("Gram factor is identically zero")
    sigma = sigma[positive]
    V = V[:, positive]
    vals = sigma * sigma

    ind = energy_indicator(vals, indicator_kind)
    K = int(np.argmax(ind >= 1.0 - gamma)) + 1
    U = V[:, :K] / sigma[:K]
    return ReductionResult(U, vals, K, ind, float(gamma), n_drop, indicator_kind)


def reduce_basis(basis, U):
    """Values and gradients of the reduced functions ``psi = Phi U``."""
    return BasisEval(basis.values @ U, basis.grads @ U)


def reduced_matrices(A, B, U):
    """Congruences ``U^T A U`` and ``U^T B U`` (exactly symmetric)."""
    def cong(S):
        R = U.T @ S @ U
        return np.triu(R) + np.triu(R, 1).T

    return cong(A), cong(B)


def lift_coefficients(U, C):
    """Map reduced-space coefficients ``C`` (K,) or (K, k) to the full basis."""
    return U @ np.asarray(C)


def projection_error(gram, U):
    """``sum_i || e_i - sum_j <e_i, u_j>_G u_j ||_G^2`` for G-orthonormal ``U``."""
    gram = np.asarray(gram, dtype=np.float64)
    P = U @ (U.T @ gram)  # projector onto span(U) in the G inner product
    R = np.eye(gram.shape[0]) - P
    return float(np.einsum("ij,ik,kj->", R, gram, R))


class PODReducer(TransformerMixin, BaseEstimator):
    """Fit POD modes on a Gram matrix and map basis evaluations onto them.

    ``fit`` takes the (M, M) Gram matrix; ``transform`` takes basis values
    of shape (n, M) and returns the reduced basis values (n, K).
    """

    def __init__(self, gamma=1e-10, indicator="sqrt"):
        self.gamma = gamma
        self.indicator = indicator

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64)
        if X.shape[0] != X.shape[1]:
            raise ValueError(f"expected a square Gram matrix, got shape {X.shape}")
        res = pod_reduce(X, self.gamma, self.indicator)
        self.components_ = res.U
        self.n_components_ = res.K
        self.gram_eigenvalues_ = res.gram_eigs
        self.indicator_ = res.indicator
        self.n_dropped_ = res.dropped_nonpositive
        self.n_features_in_ = X.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} basis columns, got {X.shape[1]}")
        return X @ self.components_
