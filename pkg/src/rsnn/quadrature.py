"""Gauss-Legendre / Gauss-Hermite rules and tensor-product grids.

Nodes are found by Newton iteration on the three-term recurrence of the
orthogonal polynomial, so no linear algebra is needed.
"""

from dataclasses import dataclass
import math

import numpy as np

__all__ = [
    "Rule1D",
    "QuadratureGrid",
    "gauss_legendre_1d",
    "gauss_hermite_1d",
    "tensor_grid",
    "DEFAULT_POINT_BUDGET",
]

DEFAULT_POINT_BUDGET = 10**7

_NEWTON_TOL = 1e-15
_NEWTON_MAXITER = 100


@dataclass(frozen=True)
class Rule1D:
    """One-dimensional quadrature rule.

    ``interval`` is ``(a, b)`` for Legendre rules and ``None`` for the
    unbounded Hermite rules. ``deweighted`` Hermite rules integrate
    ``g(x) dx`` directly (weights carry the factor ``exp(x**2)``).
    """

    kind: str
    n: int
    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple | None = None
    deweighted: bool = False

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.weights.setflags(write=False)

    def integrate(self, f):
        return float(np.dot(self.weights, f(self.nodes)))

    def describe(self):
        out = {"kind": self.kind, "n": self.n}
        if self.interval is not None:
            out["interval"] = list(self.interval)
        if self.kind == "hermite":
            out["deweighted"] = self.deweighted
        return out


@dataclass(frozen=True)
class QuadratureGrid:
    """Tensor-product grid: ``points`` is (n_pts, d), ``weights`` is (n_pts,)."""

    points: np.ndarray
    weights: np.ndarray
    rules: tuple = ()

    def __post_init__(self):
        self.points.setflags(write=False)
        self.weights.setflags(write=False)

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def n_points(self):
        return self.points.shape[0]

    def integrate(self, values):
        """Weighted sum over grid points along the first axis of ``values``."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def describe(self):
        return [r.describe() for r in self.rules]


def _legendre_and_derivative(n, x):
    p_prev = np.ones_like(x)
    p = x.copy()
    for j in range(2, n + 1):
        p_prev, p = p, ((2 * j - 1) * x * p - (j - 1) * p_prev) / j
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    return p, dp


def gauss_legendre_1d(n, a=-1.0, b=1.0):
    """``n``-point Gauss-Legendre rule on ``[a, b]``.

    Exact for polynomials of degree ``2n - 1``.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")
    if not a < b:
        raise ValueError(f"invalid interval [{a}, {b}]")

    if n == 1:
        t = np.zeros(1)
        w = np.array([2.0])
    else:
        # roots in (0, 1) descending, then mirrored for exact symmetry
        m = (n + 1) // 2
        i = np.arange(1, m + 1)
        x = np.cos(np.pi * (i - 0.25) / (n + 0.5))
        for _ in range(_NEWTON_MAXITER):
            p, dp = _legendre_and_derivative(n, x)
            dx = p / dp
            x = x - dx
            if np.max(np.abs(dx)) < _NEWTON_TOL:
                break
        else:
            raise RuntimeError(f"Legendre Newton iteration did not converge for n={n}")
        _, dp = _legendre_and_derivative(n, x)
        wpos = 2.0 / ((1.0 - x * x) * dp * dp)
        if n % 2:
            x[-1] = 0.0
            t = np.concatenate([-x, x[-2::-1]])
            w = np.concatenate([wpos, wpos[-2::-1]])
        else:
            t = np.concatenate([-x, x[::-1]])
            w = np.concatenate([wpos, wpos[::-1]])

    half = 0.5 * (b - a)
    nodes = half * t + 0.5 * (a + b)
    weights = half * w
    return Rule1D("legendre", n, nodes, weights, interval=(float(a), float(b)))


def _hermite_orthonormal(n, x):
    """Orthonormal Hermite polynomials p_n, p_{n-1} at scalar ``x``.

    Normalised so that ``int p_i p_j exp(-x^2) dx = delta_ij``.
    """
    p_prev = 0.0
    p = math.pi ** -0.25
    for j in range(1, n + 1):
        p_prev, p = p, x * math.sqrt(2.0 / j) * p - math.sqrt((j - 1) / j) * p_prev
    return p, p_prev


def _hermite_sturm_count(n, x):
    """Number of roots of H_n below each entry of ``x`` (Sturm sequence).

    Pivots of the LDL^T factorisation of ``J - x I``, where ``J`` is the
    symmetric tridiagonal recurrence matrix (zero diagonal, off-diagonal
    ``sqrt(j/2)``); the count of negative pivots equals the count of
    eigenvalues (= roots) below ``x``.
    """
    count = np.zeros(x.shape, dtype=int)
    d = -x.copy()
    tiny = np.finfo(float).tiny
    for j in range(1, n + 1):
        if j > 1:
            d = -x - (0.5 * (j - 1)) / d
        d = np.where(d == 0.0, -tiny, d)
        count += d < 0
    return count


def _hermite_roots(n):
    """Non-negative roots of H_n in descending order."""
    m = (n + 1) // 2
    # bracket by bisection on the Sturm count, then Newton polish
    k = np.arange(n - m, n)[::-1]
    lo = np.zeros(m) - 1e-3
    hi = np.full(m, math.sqrt(2.0 * n + 1.0) + 1.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        below = _hermite_sturm_count(n, mid) > k
        hi = np.where(below, mid, hi)
        lo = np.where(below, lo, mid)
        if np.max(hi - lo) < 1e-6:
            break
    roots = 0.5 * (lo + hi)
    for i in range(m):
        z = roots[i]
        for _ in range(_NEWTON_MAXITER):
            p, p_prev = _hermite_orthonormal(n, z)
            dz = p / (math.sqrt(2.0 * n) * p_prev)
            z -= dz
            if abs(dz) < _NEWTON_TOL * max(1.0, abs(z)):
                break
        else:
            raise RuntimeError(f"Hermite Newton iteration did not converge for n={n}")
        roots[i] = z
    if n % 2:
        roots[-1] = 0.0
    return roots


def gauss_hermite_1d(n, deweighted=True):
    """``n``-point Gauss-Hermite rule (physicists' convention).

    Raw weights integrate ``exp(-x^2) g(x)``; with ``deweighted=True`` each
    weight is multiplied by ``exp(x^2)`` so the rule approximates
    ``int g(x) dx`` for integrands that already decay like a Gaussian.
    """
    n = int(n)
    if n < 1:
        raise ValueError(f"need at least one node, got n={n}")

    roots = _hermite_roots(n)
    # log-domain weights: w = 1 / (n p_{n-1}(x)^2)
    logw = np.empty_like(roots)
    for i, z in enumerate(roots):
        _, p_prev = _hermite_orthonormal(n, z)
        logw[i] = -math.log(n) - 2.0 * math.log(abs(p_prev))
    if deweighted:
        logw = logw + roots * roots
    wpos = np.exp(logw)

    if n % 2:
        nodes = np.concatenate([-roots, roots[-2::-1]])
        weights = np.concatenate([wpos, wpos[-2::-1]])
    else:
        nodes = np.concatenate([-roots, roots[::-1]])
        weights = np.concatenate([wpos, wpos[::-1]])
    return Rule1D("hermite", n, nodes, weights, interval=None, deweighted=bool(deweighted))


def tensor_grid(rules, max_points=DEFAULT_POINT_BUDGET):
    """Cartesian product of 1-D rules; dimension 0 varies slowest."""
    rules = tuple(rules)
    if not rules:
        raise ValueError("at least one rule is required")
    n_pts = math.prod(r.n for r in rules)
    if n_pts > max_points:
        raise ValueError(f"grid of {n_pts} points exceeds the budget of {max_points}")

    mesh = np.meshgrid(*[r.nodes for r in rules], indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*[r.weights for r in rules], indexing="ij")
    weights = wmesh[0].ravel().copy()
    for wm in wmesh[1:]:
        weights *= wm.ravel()
    return QuadratureGrid(points, weights, rules)
