import math

import numpy as np
import pytest

from rsnn.pod import (
    PODReducer,
    UnusableBasisError,
    energy_indicator,
    lift_coefficients,
    pod_reduce,
    pod_reduce_factor,
    projection_error,
    reduced_matrices,
)


def random_gram(M, seed, decay=0.5):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(M, M)))
    vals = decay ** np.arange(M)
    return (Q * vals) @ Q.T


def rank_deficient(M, r, seed):
    G = np.random.default_rng(seed).normal(size=(r, M))
    return G, G.T @ G


@pytest.mark.parametrize("M", [1, 4, 7, 10])
def test_flat_spectrum_keeps_half(M):
    res = pod_reduce(np.eye(M), 0.5, "plain")
    assert res.K == math.ceil(M / 2)
    np.testing.assert_allclose(np.abs(res.U).sum(axis=0), np.ones(res.K), atol=1e-14)
    np.testing.assert_allclose(res.U.T @ res.U, np.eye(res.K), atol=1e-14)


def test_tiny_second_eigenvalue_dropped():
    res = pod_reduce(np.diag([1.0, 1e-30]), 1e-10, "sqrt")
    assert res.K == 1
    assert res.indicator[0] == pytest.approx(1 / (1 + 1e-15), rel=1e-15)


@pytest.mark.parametrize("seed", range(3))
def test_rank_recovery_gram_route_plain(seed):
    _, S = rank_deficient(40, 7, seed)
    assert pod_reduce(S, 1e-12, "plain").K == 7


@pytest.mark.parametrize("seed", range(3))
def test_rank_recovery_factor_route(seed):
    G, _ = rank_deficient(40, 7, seed)
    for kind in ("sqrt", "plain"):
        assert pod_reduce_factor(G, 1e-12, kind).K == 7


def test_sqrt_indicator_amplifies_roundoff_in_gram_route():
    # roundoff eigenvalues ~1e-15 contribute ~3e-8 each under the square root,
    # so the exact rank is not recoverable from an assembled rank-deficient Gram
    _, S = rank_deficient(40, 7, 0)
    assert pod_reduce(S, 1e-12, "sqrt").K > 7


def test_modes_are_gram_orthonormal():
    S = random_gram(20, 1, decay=0.7)
    res = pod_reduce(S, 1e-8)
    np.testing.assert_allclose(res.U.T @ S @ res.U, np.eye(res.K), atol=1e-10)
    assert np.all(np.diff(res.gram_eigs) <= 0)
    assert res.indicator[res.K - 1] >= 1 - 1e-8
    assert res.K == 1 or res.indicator[res.K - 2] < 1 - 1e-8


@pytest.mark.parametrize("seed", range(5))
def test_projection_error_equals_tail_sum(seed):
    S = random_gram(15, 10 + seed, decay=0.6)
    res = pod_reduce(S, 1e-3, "plain")
    tail = res.gram_eigs[res.K:].sum()
    assert projection_error(S, res.U) == pytest.approx(tail, rel=1e-9)


def test_k_non_increasing_in_gamma():
    S = random_gram(30, 3, decay=0.6)
    Ks = [pod_reduce(S, g).K for g in (1e-14, 1e-10, 1e-6, 1e-3, 0.1, 0.5)]
    assert all(a >= b for a, b in zip(Ks, Ks[1:]))


def test_nonpositive_eigenvalues_dropped():
    S = np.diag([3.0, 1.0, 0.0, -1e-12])
    res = pod_reduce(S, 1e-6)
    assert res.dropped_nonpositive == 2
    assert res.gram_eigs.tolist() == [3.0, 1.0]
    with pytest.raises(UnusableBasisError):
        pod_reduce(-np.eye(3), 0.1)
    with pytest.raises(UnusableBasisError):
        pod_reduce_factor(np.zeros((5, 3)), 0.1)


def test_gamma_validation():
    for g in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            pod_reduce(np.eye(2), g)
    with pytest.raises(ValueError):
        energy_indicator([1.0], "log")


def test_factor_route_agrees_with_gram_route():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(50, 12)) * np.logspace(0, -3, 12)
    a, b = pod_reduce(X.T @ X, 1e-6), pod_reduce_factor(X, 1e-6)
    assert a.K == b.K
    np.testing.assert_allclose(b.gram_eigs, a.gram_eigs, rtol=1e-9)
    # modes agree up to sign
    s = np.sign(np.sum(a.U * b.U, axis=0))
    np.testing.assert_allclose(b.U * s, a.U, rtol=1e-7, atol=1e-9 * np.abs(a.U).max())


def test_reduced_matrices():
    A, B = random_gram(6, 5), random_gram(6, 6)
    Ar, Br = reduced_matrices(A, B, np.eye(6))
    np.testing.assert_allclose(Ar, A, atol=1e-15)
    np.testing.assert_allclose(Br, B, atol=1e-15)
    u = np.zeros((6, 1))
    u[0, 0] = 0.5
    Ar, Br = reduced_matrices(A, B, u)
    assert Ar[0, 0] == pytest.approx(A[0, 0] * 0.25) and Br[0, 0] == pytest.approx(B[0, 0] * 0.25)
    res = pod_reduce(B, 1e-8)
    _, Bbar = reduced_matrices(A, B, res.U)
    assert np.array_equal(Bbar, Bbar.T)
    np.testing.assert_allclose(Bbar, np.eye(res.K), atol=1e-8)


def test_lift_coefficients():
    U = random_gram(5, 1)[:, :3]
    np.testing.assert_array_equal(lift_coefficients(U, np.eye(3)[:, 0]), U[:, 0])
    c = np.arange(4.0)
    np.testing.assert_array_equal(lift_coefficients(np.eye(4), c), c)
    Phi = np.random.default_rng(2).normal(size=(30, 5))
    C = np.random.default_rng(3).normal(size=(3, 2))
    assert np.abs(Phi @ lift_coefficients(U, C) - (Phi @ U) @ C).max() <= 1e-12


def test_pod_reducer_estimator():
    S = random_gram(8, 2)
    red = PODReducer(gamma=1e-4).fit(S)
    assert red.n_components_ == pod_reduce(S, 1e-4).K
    assert red.get_params() == {"gamma": 1e-4, "indicator": "sqrt"}
    Phi = np.ones((3, 8))
    assert red.transform(Phi).shape == (3, red.n_components_)
    with pytest.raises(ValueError):
        red.transform(np.ones((3, 7)))
    with pytest.raises(ValueError):
        PODReducer().fit(np.ones((3, 4)))


def test_reduction_dict():
    d = pod_reduce(np.diag([4.0, 1.0]), 0.4).to_dict()
    assert d["K"] == 1 and d["M"] == 2 and d["indicator"] == [2 / 3, 1.0]
