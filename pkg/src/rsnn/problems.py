"""Benchmark eigenvalue problems with analytic reference eigenpairs.

Each problem is ``-div(alpha grad u) + V u = lambda u`` in two dimensions,
either on a box with homogeneous Dirichlet data or on the whole plane.
Reference eigenfunctions are returned un-normalised; use
:meth:`ProblemSpec.reference_on_grid` for copies normalised to ``b(u, u) = 1``
under a given quadrature.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .quadrature import gauss_hermite_1d, gauss_legendre_1d, tensor_grid

__all__ = [
    "hermite_poly",
    "RefEigenpair",
    "ReferenceSet",
    "ProblemSpec",
    "laplace2d",
    "decoupled_ho",
    "coupled_ho",
    "get_problem",
    "PROBLEMS",
]

CLUSTER_RTOL = 1e-9

COUPLED_A = ((0.8851, -0.1382), (-0.1382, 1.1933))
COUPLED_MU = (0.8322071257, 1.2461928742)
COUPLED_ROTATION = ((-0.9339352418, -0.3574422527), (0.3574422527, -0.9339352418))


def hermite_poly(n, x):
    """Physicists' Hermite polynomial ``H_n(x)`` by the three-term recurrence."""
    if n < 0:
        raise ValueError(f"degree must be non-negative, got {n}")
    x = np.asarray(x, dtype=np.float64)
    h_prev = np.ones_like(x)
    if n == 0:
        return h_prev
    h = 2.0 * x
    for j in range(1, n):
        h_prev, h = h, 2.0 * x * h - 2.0 * j * h_prev
    return h


def _hermite_function(n, a, t):
    """``H_n(a t) exp(-a^2 t^2 / 2)`` and its derivative in ``t``."""
    s = a * t
    e = np.exp(-0.5 * s * s)
    h = hermite_poly(n, s)
    dh = 2.0 * n * hermite_poly(n - 1, s) if n > 0 else np.zeros_like(s)
    return h * e, a * (dh - s * h) * e


@dataclass(frozen=True)
class RefEigenpair:
    """Exact eigenvalue with quantum numbers and an un-normalised eigenfunction.

    ``func(x)`` maps points (n, d) to values (n,) and gradients (n, d).
    """

    lam: float
    n1: int
    n2: int
    func: object = field(repr=False, compare=False)


@dataclass
class ReferenceSet:
    """First k reference eigenpairs sampled on a grid, each with ``b(u, u) = 1``."""

    eigenvalues: np.ndarray
    labels: list
    values: np.ndarray  # (n_pts, k)
    grads: np.ndarray  # (d, n_pts, k)
    clusters: list  # lists of 0-based indices with equal eigenvalues


def degeneracy_clusters(eigenvalues, rtol=CLUSTER_RTOL):
    """Group consecutive indices whose eigenvalues agree to ``rtol`` relative."""
    clusters = []
    for i, lam in enumerate(eigenvalues):
        if clusters and abs(lam - eigenvalues[clusters[-1][-1]]) <= rtol * abs(lam):
            clusters[-1].append(i)
        else:
            clusters.append([i])
    return clusters


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    d: int
    bounds: tuple | None  # box bounds, or None for the whole space
    alpha: float
    envelope: str
    quad_kind: str
    quad_points: int
    M: int
    k: int
    eps_tol: float
    gamma: float
    potential_fn: object = field(default=None, repr=False, compare=False)
    pairs_fn: object = field(default=None, repr=False, compare=False)

    @property
    def bounded(self):
        return self.bounds is not None

    def potential(self, points):
        """``V`` at the points, or ``None`` when the problem has no potential."""
        if self.potential_fn is None:
            return None
        return self.potential_fn(np.asarray(points, dtype=np.float64))

    def grid(self, n=None):
        n = self.quad_points if n is None else int(n)
        if self.quad_kind == "legendre":
            rules = [gauss_legendre_1d(n, a, b) for a, b in self.bounds]
        else:
            rules = [gauss_hermite_1d(n, deweighted=True)] * self.d
        return tensor_grid(rules)

    def reference(self, k=None):
        """First ``k`` reference eigenpairs in the benchmark ordering."""
        k = self.k if k is None else int(k)
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        return self.pairs_fn(k)

    def reference_on_grid(self, grid, k=None):
        pairs = self.reference(k)
        vals, grads = [], []
        for p in pairs:
            u, g = p.func(grid.points)
            norm = math.sqrt(float(np.dot(grid.weights, u * u)))
            vals.append(u / norm)
            grads.append(g / norm)
        lams = np.array([p.lam for p in pairs])
        return ReferenceSet(
            eigenvalues=lams,
            labels=[(p.n1, p.n2) for p in pairs],
            values=np.stack(vals, axis=1),
            grads=np.stack(grads, axis=2).transpose(1, 0, 2),
            clusters=degeneracy_clusters(lams),
        )


# -- Laplace on the unit square ------------------------------------------------


def _laplace_func(n1, n2):
    def func(x):
        s1, c1 = np.sin(np.pi * n1 * x[:, 0]), np.cos(np.pi * n1 * x[:, 0])
        s2, c2 = np.sin(np.pi * n2 * x[:, 1]), np.cos(np.pi * n2 * x[:, 1])
        g = np.stack([np.pi * n1 * c1 * s2, np.pi * n2 * s1 * c2], axis=1)
        return s1 * s2, g

    return func


def _laplace_pairs(k):
    # ties ordered with the larger n1 first: (2,1) before (1,2)
    cand = [(n1, n2) for n1 in range(1, k + 2) for n2 in range(1, k + 2)]
    cand.sort(key=lambda p: (p[0] ** 2 + p[1] ** 2, -p[0]))
    return [RefEigenpair(math.pi**2 * (n1 * n1 + n2 * n2), n1, n2, _laplace_func(n1, n2))
            for n1, n2 in cand[:k]]


def laplace2d():
    """``-Laplace u = lambda u`` on [0, 1]^2, ``lambda = pi^2 (n1^2 + n2^2)``."""
    return ProblemSpec(
        name="laplace2d", d=2, bounds=((0.0, 1.0), (0.0, 1.0)), alpha=1.0,
        envelope="box_bubble", quad_kind="legendre", quad_points=32,
        M=300, k=15, eps_tol=1e-3, gamma=1e-11,
        potential_fn=None, pairs_fn=_laplace_pairs,
    )


# -- harmonic oscillators -----------------------------------------------------


def _oscillator_func(n1, n2, Q, scales):
    Q = np.asarray(Q, dtype=np.float64)

    def func(x):
        y = x @ Q.T
        f1, d1 = _hermite_function(n1, scales[0], y[:, 0])
        f2, d2 = _hermite_function(n2, scales[1], y[:, 1])
        gy = np.stack([d1 * f2, f1 * d2], axis=1)
        return f1 * f2, gy @ Q

    return func


def _oscillator_pairs(k, freqs, Q, tie_key):
    scales = [math.sqrt(w) for w in freqs]
    cand = [(n1, n2) for n1 in range(k + 1) for n2 in range(k + 1)]
    energy = lambda p: (0.5 + p[0]) * freqs[0] + (0.5 + p[1]) * freqs[1]
    cand.sort(key=lambda p: (energy(p), tie_key(p)))
    return [RefEigenpair(energy((n1, n2)), n1, n2, _oscillator_func(n1, n2, Q, scales))
            for n1, n2 in cand[:k]]


def _half_square(x):
    return 0.5 * np.einsum("ij,ij->i", x, x)


def decoupled_ho():
    """``-1/2 Laplace u + |x|^2/2 u = lambda u`` on R^2, ``lambda = n1 + n2 + 1``."""
    return ProblemSpec(
        name="ho-decoupled", d=2, bounds=None, alpha=0.5,
        envelope="gaussian", quad_kind="hermite", quad_points=99,
        M=900, k=15, eps_tol=1e-2, gamma=1e-10,
        potential_fn=_half_square,
        pairs_fn=lambda k: _oscillator_pairs(k, (1.0, 1.0), np.eye(2), lambda p: p[0]),
    )


def _coupled_potential(x):
    (a11, a12), (_, a22) = COUPLED_A
    return 0.5 * (a11 * x[:, 0] ** 2 + 2.0 * a12 * x[:, 0] * x[:, 1] + a22 * x[:, 1] ** 2)


def coupled_ho():
    """Oscillator with the quadratic form ``x^T A x / 2``.

    In the rotated coordinates ``y = Q x`` it separates with frequencies
    ``sqrt(mu_1)``, ``sqrt(mu_2)``.
    """
    freqs = tuple(math.sqrt(m) for m in COUPLED_MU)
    return ProblemSpec(
        name="ho-coupled", d=2, bounds=None, alpha=0.5,
        envelope="gaussian", quad_kind="hermite", quad_points=99,
        M=900, k=15, eps_tol=1e-2, gamma=1e-10,
        potential_fn=_coupled_potential,
        pairs_fn=lambda k: _oscillator_pairs(k, freqs, COUPLED_ROTATION, lambda p: p[0]),
    )


PROBLEMS = {"laplace2d": laplace2d, "ho-decoupled": decoupled_ho, "ho-coupled": coupled_ho}


def get_problem(name):
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
