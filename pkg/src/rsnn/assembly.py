"""Mass / stiffness assembly for ``a(u, v) = (alpha grad u, grad v) + (V u, v)``.

Matrices are plain symmetric ``ndarray``s. Sums over quadrature points are
done block-wise and the block partials are combined pairwise, which keeps the
rounding error growth logarithmic in the number of points.
"""

from dataclasses import dataclass
import json

import numpy as np

from .linalg import sym_eigvals

__all__ = [
    "OperatorCoeffs",
    "assemble_mass",
    "assemble_stiffness",
    "small_grams",
    "gram_factor",
    "SingularGramError",
    "dump_matrix",
    "load_matrix",
]

_BLOCK = 1024


class SingularGramError(np.linalg.LinAlgError):
    """The k x k mass matrix of the trial functions is numerically singular."""

    def __init__(self, msg, min_eig=None):
        super().__init__(msg)
        self.min_eig = min_eig


@dataclass(frozen=True)
class OperatorCoeffs:
    """Scalar diffusion ``alpha`` and potential ``V`` sampled on the grid."""

    alpha: float
    potential: np.ndarray | None = None

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.potential is not None:
            pot = np.asarray(self.potential, dtype=np.float64)
            if np.any(pot < 0):
                raise ValueError("potential must be non-negative at every grid point")
            pot.setflags(write=False)
            object.__setattr__(self, "potential", pot)


def _pairwise_sum(parts):
    while len(parts) > 1:
        nxt = [parts[i] + parts[i + 1] for i in range(0, len(parts) - 1, 2)]
        if len(parts) % 2:
            nxt.append(parts[-1])
        parts = nxt
    return parts[0]


def _weighted_gram(X, w, Y=None, block=_BLOCK):
    """``X^T diag(w) Y`` with block-pairwise accumulation over rows."""
    if Y is None:
        Y = X
    n = X.shape[0]
    parts = [(X[s:s + block] * w[s:s + block, None]).T @ Y[s:s + block] for s in range(0, n, block)]
    return _pairwise_sum(parts)


def _symmetrize(S):
    """Mirror the upper triangle onto the lower one (exact symmetry)."""
    U = np.triu(S)
    return U + np.triu(S, 1).T


def _check_finite(S, label):
    if not np.all(np.isfinite(S)):
        bad = np.argwhere(~np.isfinite(S))[0]
        raise FloatingPointError(f"{label} matrix has a non-finite entry at {tuple(bad)}")


def _check_rows(basis, grid):
    if basis.values.shape[0] != grid.weights.shape[0]:
        raise ValueError(
            f"basis has {basis.values.shape[0]} rows but grid has {grid.weights.shape[0]} points"
        )


def assemble_mass(basis, grid):
    """``B_ij = sum_l rho_l phi_i(x_l) phi_j(x_l)``."""
    _check_rows(basis, grid)
    B = _symmetrize(_weighted_gram(basis.values, grid.weights))
    _check_finite(B, "mass")
    return B


def assemble_stiffness(basis, grid, coeffs):
    """``A_ij = sum_l rho_l (alpha grad phi_i . grad phi_j + V phi_i phi_j)``."""
    _check_rows(basis, grid)
    rho = grid.weights
    parts = [_weighted_gram(G, coeffs.alpha * rho) for G in basis.grads]
    if coeffs.potential is not None:
        parts.append(_weighted_gram(basis.values, rho * coeffs.potential))
    A = _symmetrize(_pairwise_sum(parts))
    _check_finite(A, "stiffness")
    return A


def gram_factor(basis, grid, coeffs=None, kind="mass"):
    """Matrix ``X`` with ``X^T X`` equal to the mass (or stiffness) matrix.

    Rows are the basis values (and gradient components) scaled by the
    square roots of the quadrature weights, so ``X`` carries the same
    information as the Gram matrix without squaring its conditioning.
    """
    _check_rows(basis, grid)
    r = np.sqrt(grid.weights)
    if kind == "mass":
        return basis.values * r[:, None]
    if kind != "stiffness":
        raise ValueError(f"unknown Gram kind {kind!r}")
    if coeffs is None:
        raise ValueError("the stiffness factor needs operator coefficients")
    ra = np.sqrt(coeffs.alpha) * r
    blocks = [G * ra[:, None] for G in basis.grads]
    if coeffs.potential is not None:
        blocks.append(basis.values * (r * np.sqrt(coeffs.potential))[:, None])
    return np.concatenate(blocks, axis=0)


def small_grams(basis, grid, coeffs, w):
    """k x k Gram matrices of the trial functions ``v = Phi w``.

    Equal to ``(w^T A w, w^T B w)`` but computed in O(n_pts M k) without
    forming the M x M matrices.
    """
    _check_rows(basis, grid)
    w = np.asarray(w, dtype=np.float64)
    if w.ndim == 1:
        w = w[:, None]
    rho = grid.weights
    V = basis.values @ w
    Gw = basis.grads @ w
    B = _symmetrize(_weighted_gram(V, rho))
    parts = [_weighted_gram(G, coeffs.alpha * rho) for G in Gw]
    if coeffs.potential is not None:
        parts.append(_weighted_gram(V, rho * coeffs.potential))
    A = _symmetrize(_pairwise_sum(parts))
    ev = sym_eigvals(B)
    if ev[0] <= B.shape[0] * np.finfo(float).eps * max(ev[-1], 0.0):
        raise SingularGramError(
            f"trial-function mass matrix is singular (smallest eigenvalue {ev[0]:.3e})",
            min_eig=float(ev[0]),
        )
    return A, B


def dump_matrix(S, path, label):
    """Write ``S`` as raw row-major little-endian float64 plus a JSON sidecar."""
    S = np.ascontiguousarray(S, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(S.tobytes())
    with open(str(path) + ".json", "w") as fh:
        json.dump({"shape": list(S.shape), "label": label, "dtype": "<f8", "order": "C"}, fh)


def load_matrix(path):
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    data = np.fromfile(path, dtype=meta["dtype"])
    return data.reshape(meta["shape"]).astype(np.float64), meta["label"]
