import math

import numpy as np
import pytest

from rsnn.assembly import OperatorCoeffs, small_grams
from rsnn.basisnet import BasisEval
from rsnn.problems import (
    COUPLED_A,
    COUPLED_MU,
    COUPLED_ROTATION,
    PROBLEMS,
    degeneracy_clusters,
    get_problem,
    hermite_poly,
)


def test_hermite_values():
    assert hermite_poly(0, 3.7) == 1.0
    assert hermite_poly(1, 3.0) == 6.0
    assert hermite_poly(2, 1.0) == 2.0
    assert hermite_poly(3, 2.0) == 40.0
    x = np.linspace(-2, 2, 7)
    np.testing.assert_allclose(hermite_poly(4, x), 16 * x**4 - 48 * x**2 + 12, atol=1e-12)
    with pytest.raises(ValueError):
        hermite_poly(-1, 0.0)


def test_laplace_eigenvalues_and_order():
    p = get_problem("laplace2d")
    refs = p.reference()
    assert refs[0].lam == pytest.approx(19.739208802, abs=1e-9)
    assert refs[1].lam == refs[2].lam == pytest.approx(5 * math.pi**2)
    assert [(r.n1, r.n2) for r in refs] == [
        (1, 1), (2, 1), (1, 2), (2, 2), (3, 1), (1, 3), (3, 2), (2, 3),
        (4, 1), (1, 4), (3, 3), (4, 2), (2, 4), (4, 3), (3, 4)]


def test_decoupled_eigenvalues_and_order():
    refs = get_problem("ho-decoupled").reference()
    assert [r.lam for r in refs] == [1.0, 2.0, 2.0, 3.0, 3.0, 3.0, 4.0, 4.0, 4.0, 4.0, 5, 5, 5, 5, 5]
    assert [(r.n1, r.n2) for r in refs[:6]] == [(0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0)]


def test_coupled_eigenvalues_and_order():
    refs = get_problem("ho-coupled").reference()
    s1, s2 = (math.sqrt(m) for m in COUPLED_MU)
    assert refs[0].lam == pytest.approx((s1 + s2) / 2, rel=1e-15)
    assert refs[0].lam == pytest.approx(1.0142923, abs=1e-6)
    assert [(r.n1, r.n2) for r in refs[:6]] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    lams = [r.lam for r in refs]
    assert lams == sorted(lams)


def test_coupled_rotation():
    Q = np.array(COUPLED_ROTATION)
    np.testing.assert_allclose(Q @ Q.T, np.eye(2), atol=1e-9)
    rec = Q.T @ np.diag(COUPLED_MU) @ Q
    np.testing.assert_allclose(rec, np.array(COUPLED_A), atol=1e-4)


def test_coupled_potential_matches_quadratic_form():
    p = get_problem("ho-coupled")
    x = np.random.default_rng(0).normal(size=(10, 2))
    A = np.array(COUPLED_A)
    np.testing.assert_allclose(p.potential(x), 0.5 * np.einsum("ni,ij,nj->n", x, A, x), rtol=1e-14)
    assert get_problem("laplace2d").potential(x) is None


def test_spec_invariants():
    for name in PROBLEMS:
        p = get_problem(name)
        assert p.name == name
        assert (p.envelope == "box_bubble") == p.bounded
        assert (p.quad_kind == "legendre") == p.bounded
    with pytest.raises(ValueError):
        get_problem("heat")


def test_default_settings():
    lap, dec = get_problem("laplace2d"), get_problem("ho-decoupled")
    assert (lap.quad_points, lap.eps_tol, lap.gamma, lap.M) == (32, 1e-3, 1e-11, 300)
    assert (dec.quad_points, dec.eps_tol, dec.gamma, dec.M) == (99, 1e-2, 1e-10, 900)
    assert lap.grid().n_points == 32**2


def test_clusters():
    assert degeneracy_clusters([1.0, 2.0, 2.0, 3.0]) == [[0], [1, 2], [3]]
    assert degeneracy_clusters([1.0, 1.0 + 1e-12]) == [[0, 1]]
    assert degeneracy_clusters([1.0, 1.0 + 1e-6]) == [[0], [1]]
    refs = get_problem("ho-decoupled").reference_on_grid(get_problem("ho-decoupled").grid(20), 6)
    assert refs.clusters == [[0], [1, 2], [3, 4, 5]]


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_reference_rayleigh_quotients_and_normalization(name):
    p = get_problem(name)
    grid = p.grid()
    refs = p.reference_on_grid(grid)
    coeffs = OperatorCoeffs(p.alpha, p.potential(grid.points))
    basis = BasisEval(refs.values, refs.grads)
    A, B = small_grams(basis, grid, coeffs, np.eye(p.k))
    np.testing.assert_allclose(np.diag(B), 1.0, atol=1e-13)
    np.testing.assert_allclose(np.diag(A), refs.eigenvalues, rtol=1e-8)
    # distinct eigenfunctions are b-orthogonal
    assert np.abs(B - np.eye(p.k)).max() <= 1e-9


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_reference_gradients_match_finite_differences(name):
    p = get_problem(name)
    lo, hi = (0.1, 0.9) if p.bounded else (-2.0, 2.0)
    x = np.random.default_rng(1).uniform(lo, hi, (12, 2))
    h = 1e-6
    for r in p.reference(8):
        _, g = r.func(x)
        for a in range(2):
            e = np.zeros(2)
            e[a] = h
            fd = (r.func(x + e)[0] - r.func(x - e)[0]) / (2 * h)
            assert np.abs(fd - g[:, a]).max() <= 1e-7 * max(1.0, np.abs(g).max())


def test_laplace_reference_vanishes_on_boundary():
    r = get_problem("laplace2d").reference(5)[4]
    x = np.array([[0.0, 0.3], [1.0, 0.6], [0.2, 0.0], [0.7, 1.0]])
    assert np.abs(r.func(x)[0]).max() <= 1e-14


def test_reference_k_validation():
    with pytest.raises(ValueError):
        get_problem("laplace2d").reference(0)
