"""A small array-valued reverse-mode AD engine and the MLP built on it.

Every operation records its parents and a vector-Jacobian product.  Input
gradients of the network are obtained by pushing forward tangents through
the layers *as graph operations*, so a loss containing ``|grad_x u|^2`` can
be differentiated once more with respect to the parameters by an ordinary
reverse sweep (reverse-over-forward, mixed second order).

A 0-d :class:`Tensor` is the differentiable scalar of the package; wrapping
plain floats performs exactly the NumPy float arithmetic underneath.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np


class Tensor:
    __slots__ = ("value", "parents", "vjp")
    # make NumPy defer binary operators to the reflected Tensor methods
    __array_ufunc__ = None

    def __init__(self, value, parents: tuple = (), vjp: Callable | None = None):
        self.value = np.asarray(value, dtype=float)
        self.parents = parents
        self.vjp = vjp

    @property
    def shape(self):
        return self.value.shape

    @property
    def ndim(self):
        return self.value.ndim

    def __repr__(self):
        return f"Tensor({self.value!r})"

    def __float__(self):
        return float(self.value)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        n = self.value.size if axis is None else self.value.shape[axis]
        return tsum(self, axis) * (1.0 / n)

    def reshape(self, *shape):
        return reshape(self, shape[0] if len(shape) == 1 else shape)

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor(a.value + b.value, (a, b), lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(-a.value, (a,), lambda g: (-g,))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return Tensor(av * bv, (a, b), lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    out = av / bv

    def vjp(g):
        return _unbroadcast(g / bv, av.shape), _unbroadcast(-g * out / bv, bv.shape)

    return Tensor(out, (a, b), vjp)


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    av = a.value
    return Tensor(av**exponent, (a,), lambda g: (g * exponent * av ** (exponent - 1),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    av, bv = a.value, b.value
    return Tensor(av @ bv, (a, b), lambda g: (_unbroadcast(g @ bv.T, av.shape), _unbroadcast(av.T @ g, bv.shape)))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return Tensor(a.value.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return Tensor(a.value.reshape(shape), (a,), lambda g: (g.reshape(old),))


def tsum(a, axis=None) -> Tensor:
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return Tensor(a.value.sum(axis=axis), (a,), vjp)


def maximum(a, b) -> Tensor:
    """Elementwise max; ties send the whole gradient to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    pick = a.value >= b.value
    return Tensor(
        np.maximum(a.value, b.value),
        (a, b),
        lambda g: (_unbroadcast(g * pick, a.shape), _unbroadcast(g * ~pick, b.shape)),
    )


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return Tensor(out, (a,), lambda g: (g * out,))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    t = np.tanh(a.value)
    return Tensor(t, (a,), lambda g: (g * (1.0 - t * t),))


def relu3(a) -> Tensor:
    """``max(0, x^3)``, C^2 at the origin."""
    a = as_tensor(a)
    pos = np.maximum(a.value, 0.0)
    return Tensor(pos**3, (a,), lambda g: (g * 3.0 * pos**2,))


def relu3_prime(a) -> Tensor:
    """Derivative ``3 x^2`` for x > 0 and 0 otherwise, itself differentiable."""
    a = as_tensor(a)
    pos = np.maximum(a.value, 0.0)
    return Tensor(3.0 * pos**2, (a,), lambda g: (g * 6.0 * pos,))


def _tanh_prime(a: Tensor, t: Tensor) -> Tensor:
    return 1.0 - t * t


def _relu3_prime(a: Tensor, t: Tensor) -> Tensor:
    return relu3_prime(a)


# activation name -> (sigma, sigma' given pre-activation and output)
ACTIVATIONS = {
    "relu3": (relu3, _relu3_prime),
    "tanh": (tanh, _tanh_prime),
}


def grad(output: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """Reverse sweep from a scalar ``output``; returns d output / d each of ``wrt``."""
    if output.value.size != 1:
        raise ValueError("grad needs a scalar output")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen:
                stack.append((p, False))
    adj = {id(output): np.ones_like(output.value)}
    for node in reversed(order):
        g = adj.get(id(node))
        if g is None or node.vjp is None:
            continue
        for p, gp in zip(node.parents, node.vjp(g)):
            if id(p) in adj:
                adj[id(p)] = adj[id(p)] + gp
            else:
                adj[id(p)] = gp
    return [adj.get(id(t), np.zeros_like(t.value)) for t in wrt]


# --------------------------------------------------------------------------
# multilayer perceptron


@dataclass
class MLPParams:
    """Weights ``W_i`` (fan_out x fan_in) and biases ``b_i`` for every layer.

    The last layer is linear and holds the output weights and output bias.
    Entries are NumPy arrays, or Tensors while being differentiated.
    """

    layer_sizes: tuple[int, ...]
    activation: str
    weights: list
    biases: list

    def __post_init__(self):
        self.layer_sizes = tuple(int(s) for s in self.layer_sizes)
        if len(self.layer_sizes) < 3 or self.layer_sizes[-1] != 1:
            raise ValueError("layer_sizes must be [d, K_1, ..., K_l, 1] with l >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        for i, (fi, fo) in enumerate(zip(self.layer_sizes[:-1], self.layer_sizes[1:])):
            if np.shape(_val(self.weights[i])) != (fo, fi) or np.shape(_val(self.biases[i])) != (fo,):
                raise ValueError(f"layer {i} has mismatched weight/bias shapes")

    @property
    def num_params(self) -> int:
        s = self.layer_sizes
        return sum(fo * fi + fo for fi, fo in zip(s[:-1], s[1:]))

    def flatten(self) -> np.ndarray:
        """Layer-major; row-major weights, then biases, per layer."""
        parts = []
        for W, b in zip(self.weights, self.biases):
            parts.append(np.ravel(_val(W)))
            parts.append(np.ravel(_val(b)))
        return np.concatenate(parts)

    def with_flat(self, theta: np.ndarray) -> "MLPParams":
        return unflatten(self.layer_sizes, self.activation, theta)


def _val(x):
    return x.value if isinstance(x, Tensor) else x


def unflatten(layer_sizes, activation: str, theta) -> MLPParams:
    theta = np.asarray(theta, dtype=float)
    weights, biases, k = [], [], 0
    for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:]):
        weights.append(theta[k : k + fo * fi].reshape(fo, fi))
        k += fo * fi
        biases.append(theta[k : k + fo].copy())
        k += fo
    if k != theta.size:
        raise ValueError(f"expected {k} parameters, got {theta.size}")
    return MLPParams(tuple(layer_sizes), activation, weights, biases)


def _batch(x) -> tuple[np.ndarray | Tensor, bool]:
    if isinstance(x, Tensor):
        return (x, False) if x.ndim == 2 else (x.reshape(1, -1), True)
    x = np.asarray(x, dtype=float)
    return (x, False) if x.ndim == 2 else (x.reshape(1, -1), True)


def mlp_forward(params: MLPParams, x) -> Tensor:
    """Network output ``beta . z_l(...z_1(x)) + b`` for a point or an ``(m, d)`` batch."""
    X, single = _batch(x)
    if X.shape[1] != params.layer_sizes[0]:
        raise ValueError(f"input dimension {X.shape[1]} != {params.layer_sizes[0]}")
    sigma, _ = ACTIVATIONS[params.activation]
    z = X
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        z = sigma(z @ as_tensor(W).T + b)
    out = (z @ as_tensor(params.weights[-1]).T + params.biases[-1]).reshape(-1)
    return out.reshape(()) if single else out


def forward_with_input_grad(params: MLPParams, x) -> tuple[Tensor, list[Tensor]]:
    """Output and its input gradient, both as graph nodes for later reverse sweeps.

    ``x`` is an ``(m, d)`` constant batch; returns ``u`` of shape ``(m,)``
    and a list of ``d`` tensors of shape ``(m,)`` holding ``du/dx_j``.
    """
    X = np.atleast_2d(np.asarray(x, dtype=float))
    d = params.layer_sizes[0]
    if X.shape[1] != d:
        raise ValueError(f"input dimension {X.shape[1]} != {d}")
    sigma, dsigma = ACTIVATIONS[params.activation]
    eye = np.eye(d)
    z: Tensor | np.ndarray = X
    tangents: list = [eye[j : j + 1] for j in range(d)]
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        WT = as_tensor(W).T
        a = z @ WT + b
        z = sigma(a)
        s = dsigma(a, z)
        tangents = [s * (t @ WT) for t in tangents]
    WT = as_tensor(params.weights[-1]).T
    u = (z @ WT + params.biases[-1]).reshape(-1)
    du = [(t @ WT).reshape(-1) for t in tangents]
    return u, du


def grad_input(params: MLPParams, x) -> np.ndarray:
    """Exact ``grad_x u`` at a point ``(d,)`` or batch ``(m, d)``."""
    X, single = _batch(x)
    _, du = forward_with_input_grad(params, X)
    g = np.stack([t.value for t in du], axis=-1)
    return g[0] if single else g


def value_and_grad_params(loss_builder: Callable[[MLPParams], Tensor], params: MLPParams):
    """Evaluate ``loss_builder(params)`` and its gradient as a flat length-Q vector."""
    leaves_w = [Tensor(np.array(_val(W))) for W in params.weights]
    leaves_b = [Tensor(np.array(_val(b))) for b in params.biases]
    live = MLPParams(params.layer_sizes, params.activation, leaves_w, leaves_b)
    loss = as_tensor(loss_builder(live))
    grads = grad(loss, [t for pair in zip(leaves_w, leaves_b) for t in pair])
    return float(loss.value), np.concatenate([np.ravel(g) for g in grads])


def grad_params(loss_builder: Callable[[MLPParams], Tensor], params: MLPParams) -> np.ndarray:
    return value_and_grad_params(loss_builder, params)[1]


def glorot_limit(fan_in: int, fan_out: int) -> float:
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def init_params(
    layer_sizes: Sequence[int],
    scheme: str = "fan_in_uniform",
    seed: int = 0,
    activation: str = "relu3",
    steps: int = 2000,
    box: tuple[Sequence[float], Sequence[float]] | None = None,
    batch_size: int = 256,
) -> MLPParams:
    """Initialize network parameters.

    ``fan_in_uniform`` draws weights from U(-a, a) with
    ``a = sqrt(6 / (fan_in + fan_out))`` and zero biases.
    ``pretrained_identity`` starts from that draw and runs ``steps`` Adam
    iterations on ``E[(u(x) - x_1)^2]`` with ``x`` uniform in ``box``
    (unit square by default), so the initial guess mirrors the admissible
    field's symmetry.
    """
    layer_sizes = tuple(int(s) for s in layer_sizes)
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fi, fo in zip(layer_sizes[:-1], layer_sizes[1:]):
        a = glorot_limit(fi, fo)
        weights.append(rng.uniform(-a, a, size=(fo, fi)))
        biases.append(np.zeros(fo))
    params = MLPParams(layer_sizes, activation, weights, biases)
    if scheme == "fan_in_uniform":
        return params
    if scheme != "pretrained_identity":
        raise ValueError(f"unknown init scheme {scheme!r}")

    from .optim import AdamConfig, TrainState, adam_step

    d = layer_sizes[0]
    lo, hi = (np.zeros(d), np.ones(d)) if box is None else (np.asarray(box[0]), np.asarray(box[1]))
    cfg = AdamConfig()
    state = TrainState.start(params.flatten())
    for k in range(steps):
        X = lo + (hi - lo) * np.random.default_rng([seed, 7, k]).random((batch_size, d))
        target = X[:, 0]

        def loss(p, X=X, target=target):
            r = mlp_forward(p, X) - target
            return (r * r).mean()

        _, g = value_and_grad_params(loss, params.with_flat(state.theta))
        state = adam_step(state, g, cfg)
    return params.with_flat(state.theta)
