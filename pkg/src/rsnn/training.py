"""Trace-loss training of the basis network.

The loss is ``trace(B^-1 A)`` for the k trial functions ``v = Phi w`` with
``w`` held fixed. Its minimum over k-dimensional subspaces is the sum of the
first k eigenvalues, so driving it down pulls the span of the basis toward
the low eigenspace.
"""

from dataclasses import dataclass, field
import csv
import logging
import math

import numpy as np
from scipy.linalg import cho_solve

from .assembly import SingularGramError, _pairwise_sum, _symmetrize, _weighted_gram
from .basisnet import backprop, eval_basis
from .linalg import NotPositiveDefiniteError, cholesky, sym_eigvals

__all__ = [
    "TrainConfig",
    "AdamState",
    "LossTrace",
    "loss",
    "loss_gradient",
    "loss_and_gradient",
    "train",
    "write_loss_csv",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    eps_tol: float = 1e-3
    n_max: int = 5000
    window: int = 10
    learning_rate: float = 1e-3
    betas: tuple = (0.9, 0.999)
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.eps_tol >= 0:
            raise ValueError(f"eps_tol must be non-negative, got {self.eps_tol}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if self.n_max < self.window + 1:
            raise ValueError(f"n_max must be at least window + 1 = {self.window + 1}")


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)

    def step(self, theta, grad, config):
        """In-place Adam update of ``theta``."""
        b1, b2 = config.betas
        self.t += 1
        self.m *= b1
        self.m += (1.0 - b1) * grad
        self.v *= b2
        self.v += (1.0 - b2) * (grad * grad)
        mhat = self.m / (1.0 - b1**self.t)
        vhat = self.v / (1.0 - b2**self.t)
        theta -= config.learning_rate * mhat / (np.sqrt(vhat) + config.adam_eps)


@dataclass
class LossTrace:
    losses: list = field(default_factory=list)
    moving_change: list = field(default_factory=list)  # nan until defined
    reason: str = ""

    @property
    def n_epochs(self):
        return len(self.losses)


def _trial_functions(params, envelope, points, w, keep_cache):
    basis = eval_basis(params, envelope, points, keep_cache=keep_cache)
    return basis, basis.values @ w, basis.grads @ w


def _small(V, Gw, rho, coeffs):
    B = _symmetrize(_weighted_gram(V, rho))
    parts = [_weighted_gram(G, coeffs.alpha * rho) for G in Gw]
    if coeffs.potential is not None:
        parts.append(_weighted_gram(V, rho * coeffs.potential))
    return _symmetrize(_pairwise_sum(parts)), B


def _factor(B):
    """Cholesky of the small mass matrix with one diagonal-shift retry."""
    try:
        return cholesky(B)
    except NotPositiveDefiniteError:
        k = B.shape[0]
        shift = 1e-14 * np.trace(B) / k
        try:
            return cholesky(B + shift * np.eye(k))
        except NotPositiveDefiniteError:
            min_eig = float(sym_eigvals(B)[0])
            raise SingularGramError(
                f"trial-function mass matrix is singular (smallest eigenvalue {min_eig:.3e})",
                min_eig=min_eig,
            ) from None


def _chunks(n, chunk_size):
    if chunk_size is None or chunk_size >= n:
        return [slice(0, n)]
    return [slice(s, min(s + chunk_size, n)) for s in range(0, n, chunk_size)]


def loss_and_gradient(params, w, envelope, grid, coeffs, chunk_size=None, need_grad=True):
    """Trace loss and its exact gradient with respect to the flat parameters.

    With ``S = B^-1 A``: ``dL = tr(B^-1 dA) - tr(B^-1 A B^-1 dB)``. The
    cotangents of the trial functions follow pointwise and are pulled back
    through the network by :func:`backprop`. With ``chunk_size`` the grid is
    processed in slices (the forward pass is then recomputed for the
    backward sweep to bound memory).
    """
    rho = grid.weights
    pot = coeffs.potential
    slices = _chunks(grid.n_points, chunk_size)
    single = len(slices) == 1

    Vs, Gs, bases = [], [], []
    for sl in slices:
        basis, V, Gw = _trial_functions(params, envelope, grid.points[sl], w, need_grad and single)
        Vs.append(V)
        Gs.append(Gw)
        bases.append(basis)
    V = np.concatenate(Vs, axis=0)
    Gw = np.concatenate(Gs, axis=1)
    A, B = _small(V, Gw, rho, coeffs)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise FloatingPointError("trial-function matrices have non-finite entries")
    L = _factor(B)
    S = cho_solve((L, True), A)
    value = float(np.trace(S))
    if not need_grad:
        return value, None

    P = cho_solve((L, True), np.eye(B.shape[0]))
    P = 0.5 * (P + P.T)
    Q = S @ P
    Q = 0.5 * (Q + Q.T)

    grad = np.zeros_like(params.flat)
    for i, sl in enumerate(slices):
        r = rho[sl]
        Vb = V[sl]
        dV = -2.0 * (r[:, None] * Vb) @ Q
        if pot is not None:
            dV += 2.0 * ((r * pot[sl])[:, None] * Vb) @ P
        dG = 2.0 * coeffs.alpha * (r[None, :, None] * Gw[:, sl]) @ P
        basis = bases[i] if single else eval_basis(params, envelope, grid.points[sl], keep_cache=True)
        grad += backprop(params, basis, dV @ w.T, dG @ w.T)
    return value, grad


def loss(params, w, envelope, grid, coeffs, chunk_size=None):
    return loss_and_gradient(params, w, envelope, grid, coeffs, chunk_size, need_grad=False)[0]


def loss_gradient(params, w, envelope, grid, coeffs, chunk_size=None):
    return loss_and_gradient(params, w, envelope, grid, coeffs, chunk_size)[1]


def moving_change(losses, window):
    """``sum_{i=1..window} |l_{s-i} - l_{s+1-i}|`` at the last epoch ``s``."""
    if len(losses) <= window:
        return math.nan
    tail = losses[-(window + 1):]
    return float(sum(abs(tail[i] - tail[i + 1]) for i in range(window)))


def train(params, w, envelope, grid, coeffs, config=TrainConfig(), chunk_size=None, callback=None):
    """Adam on the trace loss until the moving-change criterion holds.

    Each epoch evaluates the loss at the current parameters, tests the
    stopping rule, then takes one Adam step. Returns the trained parameters
    (a copy) and the loss trace.
    """
    params = params.copy()
    state = AdamState.zeros(params.flat.size)
    trace = LossTrace()
    for epoch in range(1, config.n_max + 1):
        try:
            value, grad = loss_and_gradient(params, w, envelope, grid, coeffs, chunk_size)
        except FloatingPointError as exc:
            raise FloatingPointError(f"non-finite loss at epoch {epoch}: {exc}") from exc
        if not math.isfinite(value) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite loss or gradient at epoch {epoch}")
        trace.losses.append(value)
        change = moving_change(trace.losses, config.window)
        trace.moving_change.append(change)
        if callback is not None:
            callback(epoch, value, change)
        if epoch > config.window and abs(change / value) <= config.eps_tol:
            trace.reason = "tolerance"
            break
        if epoch >= config.n_max:
            trace.reason = "max-epochs"
            break
        state.step(params.flat, grad, config)
    log.info("training stopped after %d epochs (%s), loss %.12g", trace.n_epochs, trace.reason, value)
    return params, trace


def write_loss_csv(trace, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "moving_change"])
        for i, (l, c) in enumerate(zip(trace.losses, trace.moving_change), start=1):
            writer.writerow([i, f"{l:.16e}", "" if math.isnan(c) else f"{c:.16e}"])
