import numpy as np
import pytest

from rsnn.basisnet import (
    Architecture,
    BoxBubble,
    Gaussian,
    NetworkParams,
    NoEnvelope,
    backprop,
    dumps_params,
    eval_basis,
    init_coefficients,
    init_params,
    load_params,
    loads_params,
    make_envelope,
    save_params,
)

BOX = make_envelope("box_bubble", [(0.0, 1.0), (0.0, 1.0)])
ENVELOPES = [NoEnvelope(), BOX, Gaussian(), make_envelope("box_bubble", [(-1.0, 2.0), (0.5, 1.5)])]


def small_net(seed=3, d=2, hidden=(7, 5), M=4):
    return init_params(Architecture(d, hidden, M), seed)


def test_init_is_deterministic():
    arch = Architecture(2, (100, 100, 100), 300)
    a, b = init_params(arch, 1), init_params(arch, 1)
    assert np.array_equal(a.flat, b.flat)
    assert not np.array_equal(a.flat, init_params(arch, 2).flat)


def test_benchmark_size_parameter_count():
    arch = Architecture(2, (100, 100, 100), 300)
    expected = (2 * 100 + 100) + 2 * (100 * 100 + 100) + (100 * 300 + 300)
    assert expected == 50800
    assert arch.n_params == expected
    assert init_params(arch, 1).flat.shape == (expected,)


def test_init_bounds_follow_fan_in():
    p = init_params(Architecture(2, (100, 100, 100), 300), 1)
    assert np.abs(p.weights[0]).max() <= 1 / np.sqrt(2)
    assert np.abs(p.biases[0]).max() <= 1 / np.sqrt(2)
    for W, b in zip(p.weights[1:], p.biases[1:]):
        assert np.abs(W).max() <= 0.1 and np.abs(b).max() <= 0.1


def test_flat_views_and_roundtrip():
    p = small_net()
    shapes = [W.shape for W in p.weights]
    assert shapes == [(7, 2), (5, 7), (4, 5)]
    q = p.unflatten(p.flat)
    assert np.array_equal(q.flat, p.flat)
    for W1, W2 in zip(p.weights, q.weights):
        assert np.array_equal(W1, W2)
    p.flat[0] = 42.0
    assert p.weights[0][0, 0] == 42.0
    with pytest.raises(ValueError):
        NetworkParams(p.arch, np.zeros(3))


def test_architecture_validation():
    with pytest.raises(ValueError):
        Architecture(0, (3,), 2)
    with pytest.raises(ValueError):
        Architecture(2, (3, 0), 2)


def test_coefficients():
    assert np.array_equal(init_coefficients(5, 1), np.ones((5, 1)))
    a, b = init_coefficients(5, 3, seed=1), init_coefficients(5, 3, seed=1)
    assert np.array_equal(a, b)
    c = init_coefficients(200, 15, seed=4)
    assert c.min() >= -1 and c.max() <= 1
    with pytest.raises(ValueError):
        init_coefficients(0, 1)


def test_box_envelope_zero_on_boundary():
    p = init_params(Architecture(2, (20, 20), 10), 1)
    pts = np.array([[0.0, 0.37], [1.0, 0.2], [0.3, 0.0], [0.9, 1.0]])
    b = eval_basis(p, BOX, pts)
    assert np.all(b.values == 0.0)


def test_single_sine_neuron():
    arch = Architecture(1, (), 1)
    p = NetworkParams(arch, np.array([1.0, 0.0]))
    b = eval_basis(p, NoEnvelope(), np.array([[0.0], [0.7]]))
    np.testing.assert_allclose(b.values[:, 0], [0.0, np.sin(0.7)], atol=1e-16)
    np.testing.assert_allclose(b.grads[0, :, 0], [1.0, np.cos(0.7)], atol=1e-16)


@pytest.mark.parametrize("env", ENVELOPES, ids=lambda e: e.kind)
def test_spatial_gradients_match_finite_differences(env):
    p = init_params(Architecture(2, (30, 30), 12), 5)
    pts = np.random.default_rng(0).uniform(0.05, 0.95, (25, 2))
    b = eval_basis(p, env, pts)
    h = 1e-5
    for a in range(2):
        e = np.zeros(2)
        e[a] = h
        fd = (eval_basis(p, env, pts + e).values - eval_basis(p, env, pts - e).values) / (2 * h)
        assert np.abs(fd - b.grads[a]).max() <= 1e-6 * np.abs(b.grads[a]).max()
    assert b.gradients.shape == (25, 12, 2)


@pytest.mark.parametrize("env", ENVELOPES[1:], ids=lambda e: e.kind)
def test_product_rule(env):
    p = small_net()
    pts = np.random.default_rng(1).uniform(0, 1, (9, 2))
    b = eval_basis(p, env, pts, keep_cache=True)
    c = b.cache
    expect = c["J"] * c["f"][None, :, None] + c["phi"][None] * c["df"].T[:, :, None]
    np.testing.assert_allclose(b.grads, expect, rtol=0, atol=1e-15)


def test_unenveloped_values_bounded_and_deterministic():
    p = init_params(Architecture(2, (50, 50), 40), 2)
    pts = np.random.default_rng(2).normal(0, 10, (200, 2))
    b1 = eval_basis(p, NoEnvelope(), pts)
    b2 = eval_basis(p, NoEnvelope(), pts)
    assert np.abs(b1.values).max() <= 1.0
    assert np.array_equal(b1.values, b2.values) and np.array_equal(b1.grads, b2.grads)


def test_gaussian_envelope_range():
    f, _ = Gaussian()(np.random.default_rng(0).normal(0, 3, (100, 2)))
    assert np.all(f > 0) and np.all(f <= 1)


def test_nonfinite_point_reported_with_index():
    p = small_net()
    pts = np.array([[0.1, 0.2], [np.nan, 0.5]])
    with pytest.raises(FloatingPointError, match="index 1"):
        eval_basis(p, BOX, pts)


def test_bad_point_dimension():
    with pytest.raises(ValueError):
        eval_basis(small_net(), BOX, np.zeros((3, 3)))


@pytest.mark.parametrize("env", ENVELOPES, ids=lambda e: e.kind)
def test_backprop_matches_finite_differences(env):
    p = small_net(seed=11)
    pts = np.random.default_rng(4).uniform(0.1, 0.9, (6, 2))
    rng = np.random.default_rng(5)
    b = eval_basis(p, env, pts, keep_cache=True)
    Cv = rng.normal(size=b.values.shape)
    Cg = rng.normal(size=b.grads.shape)

    def functional(flat):
        e = eval_basis(p.unflatten(flat), env, pts)
        return np.sum(Cv * e.values) + np.sum(Cg * e.grads)

    g = backprop(p, b, Cv, Cg)
    h = 1e-6
    idx = rng.choice(p.flat.size, 30, replace=False)
    for i in idx:
        e = np.zeros_like(p.flat)
        e[i] = h
        fd = (functional(p.flat + e) - functional(p.flat - e)) / (2 * h)
        assert abs(fd - g[i]) <= 1e-6 * max(1.0, abs(fd))


def test_backprop_needs_cache():
    p = small_net()
    b = eval_basis(p, BOX, np.full((2, 2), 0.5))
    with pytest.raises(ValueError):
        backprop(p, b, b.values, b.grads)


def test_serialization_roundtrip(tmp_path):
    p = small_net(seed=9)
    data = dumps_params(p)
    assert data[:8] == b"RSNNPAR1"
    hlen = int.from_bytes(data[8:12], "little")
    assert len(data) == 12 + hlen + 8 * p.arch.n_params
    np.testing.assert_array_equal(np.frombuffer(data[12 + hlen:], "<f8"), p.flat)
    q = loads_params(data)
    assert q.arch == p.arch and q.seed == 9 and np.array_equal(q.flat, p.flat)
    save_params(p, tmp_path / "p.bin")
    assert np.array_equal(load_params(tmp_path / "p.bin").flat, p.flat)
    with pytest.raises(ValueError):
        loads_params(b"XXXXXXXX" + data[8:])
    with pytest.raises(ValueError):
        loads_params(data[:-8])


def test_make_envelope():
    assert isinstance(make_envelope("gaussian"), Gaussian)
    assert isinstance(make_envelope("none"), NoEnvelope)
    assert isinstance(BOX, BoxBubble)
    with pytest.raises(ValueError):
        make_envelope("box_bubble")
    with pytest.raises(ValueError):
        make_envelope("cosine")
