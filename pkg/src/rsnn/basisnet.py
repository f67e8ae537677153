"""Sine-activated fully connected network whose last layer supplies the basis.

The forward pass carries the spatial Jacobian of every layer alongside the
activations, so basis values *and* their exact gradients come out of one
sweep. The cached intermediates are reused by :func:`backprop` to pull
cotangents of (values, gradients) back to the flat parameter vector.
"""

from dataclasses import dataclass, field
import io
import json
import struct

import numpy as np

__all__ = [
    "Architecture",
    "NetworkParams",
    "BoxBubble",
    "Gaussian",
    "NoEnvelope",
    "make_envelope",
    "BasisEval",
    "init_params",
    "init_coefficients",
    "eval_basis",
    "backprop",
    "save_params",
    "load_params",
    "dumps_params",
    "loads_params",
]


@dataclass(frozen=True)
class Architecture:
    """Layer widths ``d -> hidden[0] -> ... -> hidden[-1] -> M``."""

    d: int
    hidden: tuple = (100, 100, 100)
    M: int = 300

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.d < 1 or self.M < 1 or any(h < 1 for h in self.hidden):
            raise ValueError(f"all layer widths must be >= 1, got {self}")

    @property
    def widths(self):
        return (self.d, *self.hidden, self.M)

    @property
    def shapes(self):
        w = self.widths
        return [(w[l + 1], w[l]) for l in range(len(w) - 1)]

    @property
    def n_params(self):
        return sum(o * (i + 1) for o, i in self.shapes)


class NetworkParams:
    """Weights and biases stored in one flat float64 vector.

    Ordering is layer by layer: ``W_1`` (row-major), ``b_1``, ``W_2``,
    ``b_2``, ... . ``weights`` and ``biases`` are views into ``flat``, so
    updating ``flat`` in place updates the layers.
    """

    def __init__(self, arch, flat=None, seed=None):
        self.arch = arch
        if flat is None:
            flat = np.zeros(arch.n_params)
        flat = np.ascontiguousarray(flat, dtype=np.float64)
        if flat.shape != (arch.n_params,):
            raise ValueError(f"expected {arch.n_params} parameters, got shape {flat.shape}")
        self.flat = flat
        self.seed = seed
        self.weights = []
        self.biases = []
        pos = 0
        for o, i in arch.shapes:
            self.weights.append(flat[pos:pos + o * i].reshape(o, i))
            pos += o * i
            self.biases.append(flat[pos:pos + o])
            pos += o

    def copy(self):
        return NetworkParams(self.arch, self.flat.copy(), self.seed)

    def unflatten(self, flat):
        return NetworkParams(self.arch, np.array(flat, dtype=np.float64), self.seed)

    def __repr__(self):
        return f"NetworkParams({self.arch}, n_params={self.arch.n_params})"


def init_params(arch, seed=1):
    """Uniform ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]`` for weights and biases."""
    rng = np.random.default_rng(seed)
    parts = []
    for o, i in arch.shapes:
        bound = 1.0 / np.sqrt(i)
        parts.append(rng.uniform(-bound, bound, size=o * i))
        parts.append(rng.uniform(-bound, bound, size=o))
    return NetworkParams(arch, np.concatenate(parts), seed=seed)


def init_coefficients(M, k, seed=1):
    """Fixed output coefficients, shape (M, k).

    A single output uses the all-ones vector; several outputs are drawn
    uniformly from [-1, 1].
    """
    if M < 1 or k < 1:
        raise ValueError(f"M and k must be >= 1, got M={M}, k={k}")
    if k == 1:
        return np.ones((M, 1))
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=(M, k))


# -- envelopes ----------------------------------------------------------------


class NoEnvelope:
    kind = "none"

    def __call__(self, x):
        return np.ones(x.shape[0]), np.zeros_like(x)

    def describe(self):
        return {"kind": self.kind}


@dataclass(frozen=True)
class BoxBubble:
    """``f(x) = prod_i (x_i - a_i)(b_i - x_i)``; vanishes on the box boundary."""

    bounds: tuple
    kind: str = field(default="box_bubble", init=False)

    def __call__(self, x):
        lo = np.array([b[0] for b in self.bounds], dtype=float)
        hi = np.array([b[1] for b in self.bounds], dtype=float)
        fac = (x - lo) * (hi - x)
        dfac = (hi - x) - (x - lo)
        f = np.prod(fac, axis=1)
        grad = np.empty_like(x)
        for i in range(x.shape[1]):
            others = np.prod(np.delete(fac, i, axis=1), axis=1)
            grad[:, i] = dfac[:, i] * others
        return f, grad

    def describe(self):
        return {"kind": self.kind, "bounds": [list(b) for b in self.bounds]}


class Gaussian:
    """``f(x) = exp(-x.x / 2)``."""

    kind = "gaussian"

    def __call__(self, x):
        f = np.exp(-0.5 * np.einsum("ij,ij->i", x, x))
        return f, -x * f[:, None]

    def describe(self):
        return {"kind": self.kind}


def make_envelope(kind, bounds=None):
    if kind == "box_bubble":
        if bounds is None:
            raise ValueError("box_bubble envelope needs bounds")
        return BoxBubble(tuple(tuple(b) for b in bounds))
    if kind == "gaussian":
        return Gaussian()
    if kind in ("none", None):
        return NoEnvelope()
    raise ValueError(f"unknown envelope kind {kind!r}")


# -- forward / backward -------------------------------------------------------


@dataclass
class BasisEval:
    """Basis values (n_pts, M) and gradients (d, n_pts, M) at a point set.

    ``cache`` holds per-layer ``(z, y_prev, T)`` where ``z`` is the
    pre-activation, ``y_prev`` the layer input and ``T[a]`` the tangent of
    ``z`` along input direction ``a``; plus the raw output and envelope.
    It is ``None`` when evaluation was done without caching.
    """

    values: np.ndarray
    grads: np.ndarray
    cache: dict | None = None

    @property
    def gradients(self):
        """Gradients laid out as (n_pts, M, d)."""
        return np.moveaxis(self.grads, 0, -1)

    @property
    def n_points(self):
        return self.values.shape[0]


def eval_basis(params, envelope, points, keep_cache=False):
    """Evaluate the enveloped basis ``phi_j(x) f(x)`` and its spatial gradient."""
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.arch.d:
        raise ValueError(f"points must have shape (n, {params.arch.d}), got {x.shape}")
    n, d = x.shape

    layers = []
    y = x
    J = None  # J[a] = d y / d x_a, shape (d, n, width); identity at the input
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        z = y @ W.T + b
        if J is None:
            T = np.broadcast_to(W.T[:, None, :], (d, n, W.shape[0]))
        else:
            T = J @ W.T
        c = np.cos(z)
        y_next = np.sin(z)
        J = c * T
        if keep_cache:
            layers.append((z, y, T))
        y = y_next

    f, df = envelope(x)
    values = y * f[:, None]
    grads = J * f[None, :, None] + y[None, :, :] * df.T[:, :, None]

    bad = ~np.isfinite(values).all(axis=1) | ~np.isfinite(grads).all(axis=(0, 2))
    if bad.any():
        idx = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite basis value at point index {idx}: {x[idx]}")

    cache = None
    if keep_cache:
        cache = {"layers": layers, "phi": y, "J": J, "f": f, "df": df}
    return BasisEval(values, grads, cache)


def backprop(params, basis, dvalues, dgrads):
    """Pull cotangents of (values, grads) back to a flat parameter gradient.

    ``dvalues`` has the shape of ``basis.values`` and ``dgrads`` the shape
    of ``basis.grads``. Requires an evaluation made with ``keep_cache=True``.
    """
    if basis.cache is None:
        raise ValueError("basis was evaluated without keep_cache=True")
    cache = basis.cache
    f, df = cache["f"], cache["df"]
    layers = cache["layers"]

    # envelope product rule
    ybar = dvalues * f[:, None] + np.einsum("na,anm->nm", df, dgrads)
    Jbar = dgrads * f[None, :, None]

    grad = np.empty_like(params.flat)
    out = NetworkParams(params.arch, grad)
    for l in range(len(layers) - 1, -1, -1):
        W = params.weights[l]
        z, y_prev, T = layers[l]
        c = np.cos(z)
        Tbar = Jbar * c
        zbar = ybar * c - np.sin(z) * np.einsum("anm,anm->nm", Jbar, T)
        Wbar = zbar.T @ y_prev
        if l == 0:
            # input Jacobian is the identity
            Wbar += Tbar.sum(axis=1).T
        else:
            z_prev, _, T_prev = layers[l - 1]
            J_prev = np.cos(z_prev) * T_prev
            Wbar += np.einsum("anm,ank->mk", Tbar, J_prev)
            Jbar = Tbar @ W
            ybar = zbar @ W
        out.weights[l][...] = Wbar
        out.biases[l][...] = zbar.sum(axis=0)
    return grad


# -- serialization ------------------------------------------------------------

_MAGIC = b"RSNNPAR1"


def dumps_params(params):
    """Serialise to bytes: magic, uint32 LE header length, JSON header,
    then the flat parameter vector as little-endian float64."""
    header = json.dumps(
        {
            "d": params.arch.d,
            "hidden": list(params.arch.hidden),
            "M": params.arch.M,
            "seed": params.seed,
            "n_params": params.arch.n_params,
        },
        sort_keys=True,
    ).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", len(header)))
    buf.write(header)
    buf.write(params.flat.astype("<f8").tobytes())
    return buf.getvalue()


def loads_params(data):
    if data[:8] != _MAGIC:
        raise ValueError("not a parameter checkpoint (bad magic)")
    (hlen,) = struct.unpack("<I", data[8:12])
    header = json.loads(data[12:12 + hlen].decode("utf-8"))
    arch = Architecture(header["d"], tuple(header["hidden"]), header["M"])
    flat = np.frombuffer(data[12 + hlen:], dtype="<f8").astype(np.float64)
    if flat.size != header["n_params"]:
        raise ValueError(f"checkpoint holds {flat.size} values, header says {header['n_params']}")
    return NetworkParams(arch, flat, seed=header["seed"])


def save_params(params, path):
    with open(path, "wb") as fh:
        fh.write(dumps_params(params))


def load_params(path):
    with open(path, "rb") as fh:
        return loads_params(fh.read())
