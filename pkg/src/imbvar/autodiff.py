"""Minimal reverse-mode autodiff over dense float64 arrays.

A :class:`Tape` records every :class:`Value` in creation order, which is a
topological order by construction, so :func:`backward` is a single reverse
sweep.  Scalars are 0-d arrays; matrices are 2-d row-major.  Broadcasting
is limited to scalar-against-array plus the explicit row-vector bias add.

One tape, one backward: calling :func:`backward` twice on the same tape
raises instead of silently accumulating adjoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class AutodiffError(Exception):
    pass


class ShapeError(AutodiffError):
    pass


class DomainError(AutodiffError):
    pass


class Tape:
    """Owner of one forward evaluation.  Not thread-shared."""

    def __init__(self):
        self.nodes: list[Value] = []
        self.backward_done = False

    def _record(self, data, parents, backprop) -> "Value":
        v = Value(np.asarray(data, dtype=np.float64), self, len(self.nodes), parents, backprop)
        self.nodes.append(v)
        return v

    def leaf(self, data) -> "Value":
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise DomainError("leaf value contains non-finite entries")
        return self._record(arr, (), None)

    # constants are leaves too; the split is only documentation of intent
    const = leaf


class Value:
    """Node on a tape: forward data plus the accumulated adjoint."""

    __slots__ = ("data", "grad", "tape", "node_id", "_parents", "_backprop")

    def __init__(self, data, tape, node_id, parents, backprop):
        self.data = data
        self.grad = None
        self.tape = tape
        self.node_id = node_id
        self._parents = parents
        self._backprop = backprop

    @property
    def shape(self):
        return self.data.shape

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __repr__(self):
        return f"Value(shape={self.data.shape}, id={self.node_id})"


def _same_tape(*values: Value) -> Tape:
    tape = values[0].tape
    for v in values[1:]:
        if v.tape is not tape:
            raise AutodiffError("operands recorded on different tapes")
    return tape


def _binary_shapes(a: Value, b: Value):
    if a.data.shape == b.data.shape:
        return
    if a.data.ndim == 0 or b.data.ndim == 0:
        return
    raise ShapeError(f"elementwise op needs equal shapes or a scalar, got {a.data.shape} vs {b.data.shape}")


def _reduce_to(grad: np.ndarray, shape) -> np.ndarray:
    # adjoint of a scalar broadcast is the full sum
    if grad.shape == tuple(shape):
        return grad
    return np.sum(grad).reshape(shape) if shape == () else np.full(shape, np.sum(grad))


def add(a: Value, b: Value) -> Value:
    tape = _same_tape(a, b)
    _binary_shapes(a, b)

    def backprop(g):
        a.grad += _reduce_to(g, a.data.shape)
        b.grad += _reduce_to(g, b.data.shape)

    return tape._record(a.data + b.data, (a, b), backprop)


def sub(a: Value, b: Value) -> Value:
    tape = _same_tape(a, b)
    _binary_shapes(a, b)

    def backprop(g):
        a.grad += _reduce_to(g, a.data.shape)
        b.grad -= _reduce_to(g, b.data.shape)

    return tape._record(a.data - b.data, (a, b), backprop)


def mul(a: Value, b: Value) -> Value:
    tape = _same_tape(a, b)
    _binary_shapes(a, b)

    def backprop(g):
        a.grad += _reduce_to(g * b.data, a.data.shape)
        b.grad += _reduce_to(g * a.data, b.data.shape)

    return tape._record(a.data * b.data, (a, b), backprop)


def scalar_mul(a: Value, c: float) -> Value:
    c = float(c)

    def backprop(g):
        a.grad += g * c

    return a.tape._record(a.data * c, (a,), backprop)


def matmul(a: Value, b: Value) -> Value:
    tape = _same_tape(a, b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError("matmul operands must be 2-d")
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}")

    def backprop(g):
        a.grad += g @ b.data.T
        b.grad += a.data.T @ g

    return tape._record(a.data @ b.data, (a, b), backprop)


def add_rowvec(mat: Value, vec: Value) -> Value:
    """matrix (n x k) plus a row vector (k,), broadcast down the rows."""
    tape = _same_tape(mat, vec)
    if mat.data.ndim != 2 or vec.data.ndim != 1 or mat.data.shape[1] != vec.data.shape[0]:
        raise ShapeError(f"add_rowvec needs (n,k) + (k,), got {mat.data.shape} + {vec.data.shape}")

    def backprop(g):
        mat.grad += g
        vec.grad += g.sum(axis=0)

    return tape._record(mat.data + vec.data[None, :], (mat, vec), backprop)


def exp(a: Value) -> Value:
    out = np.exp(a.data)

    def backprop(g):
        a.grad += g * out

    return a.tape._record(out, (a,), backprop)


def log(a: Value) -> Value:
    if np.any(a.data <= 0.0):
        raise DomainError("log of non-positive argument")

    def backprop(g):
        a.grad += g / a.data

    return a.tape._record(np.log(a.data), (a,), backprop)


def sigmoid(a: Value) -> Value:
    out = np.empty_like(a.data)
    pos = a.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def backprop(g):
        a.grad += g * out * (1.0 - out)

    return a.tape._record(out, (a,), backprop)


def tanh(a: Value) -> Value:
    out = np.tanh(a.data)

    def backprop(g):
        a.grad += g * (1.0 - out * out)

    return a.tape._record(out, (a,), backprop)


def relu(a: Value) -> Value:
    # subgradient at 0 is 0
    mask = a.data > 0.0

    def backprop(g):
        a.grad += g * mask

    return a.tape._record(np.where(mask, a.data, 0.0), (a,), backprop)


def softplus(a: Value) -> Value:
    out = np.logaddexp(0.0, a.data)

    def backprop(g):
        a.grad += g * _expit(a.data)

    return a.tape._record(out, (a,), backprop)


def _expit(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def clip(a: Value, lo: float, hi: float) -> Value:
    """Clamp with straight-through gradient inside [lo, hi]."""
    mask = (a.data >= lo) & (a.data <= hi)

    def backprop(g):
        a.grad += g * mask

    return a.tape._record(np.clip(a.data, lo, hi), (a,), backprop)


def vsum(a: Value) -> Value:
    shape = a.data.shape

    def backprop(g):
        a.grad += np.full(shape, float(g))

    return a.tape._record(np.sum(a.data), (a,), backprop)


def vmean(a: Value) -> Value:
    shape = a.data.shape
    n = a.data.size

    def backprop(g):
        a.grad += np.full(shape, float(g) / n)

    return a.tape._record(np.mean(a.data), (a,), backprop)


def rowsum(a: Value) -> Value:
    """Sum over columns: (n, k) -> (n,)."""
    if a.data.ndim != 2:
        raise ShapeError("rowsum needs a 2-d operand")
    k = a.data.shape[1]

    def backprop(g):
        a.grad += np.repeat(g[:, None], k, axis=1)

    return a.tape._record(a.data.sum(axis=1), (a,), backprop)


def bce_with_logits(logits: Value, targets: np.ndarray) -> Value:
    """Elementwise binary cross-entropy from logits, stable form.

    loss = max(a, 0) - a*y + log(1 + exp(-|a|)); grad is sigmoid(a) - y.
    """
    y = np.asarray(targets, dtype=np.float64)
    if y.shape != logits.data.shape:
        raise ShapeError(f"targets shape {y.shape} != logits shape {logits.data.shape}")
    a = logits.data
    out = np.maximum(a, 0.0) - a * y + np.log1p(np.exp(-np.abs(a)))

    def backprop(g):
        logits.grad += g * (_expit(a) - y)

    return logits.tape._record(out, (logits,), backprop)


def backward(loss: Value) -> None:
    """Reverse sweep from a scalar loss; fills .grad on every tape node."""
    tape = loss.tape
    if loss.data.size != 1:
        raise AutodiffError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if tape.backward_done:
        raise AutodiffError("backward already ran on this tape; build a fresh tape instead")
    tape.backward_done = True
    for node in tape.nodes:
        node.grad = np.zeros_like(node.data)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        if node._backprop is not None:
            node._backprop(node.grad)


def grad_check(f, params: list[np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f(params)`` must return ``(loss, grads)`` where ``grads`` is either a
    list of tape leaves wrapping ``params`` in order, or a zero-argument
    callable yielding the gradient arrays once backward has run.  ``params``
    are perturbed in place and restored.
    """
    if not (1e-7 <= h <= 1e-3):
        raise ValueError(f"step h={h} outside [1e-7, 1e-3]")
    loss, grads = f(params)
    backward(loss)
    if callable(grads):
        analytic = [g.copy() for g in grads()]
    else:
        analytic = [leaf.grad.copy() for leaf in grads]

    def eval_scalar():
        val = float(f(params)[0].data)
        if not np.isfinite(val):
            raise AutodiffError("non-finite loss at perturbed point")
        return val

    worst = 0.0
    for p, g in zip(params, analytic):
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = eval_scalar()
            flat[i] = keep - h
            down = eval_scalar()
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]), abs(numeric))
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# layers and optimizer

_ACTIVATIONS = {
    "identity": lambda v: v,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softplus": softplus,
}


@dataclass
class DenseLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str = "identity"

    @classmethod
    def init(cls, rng: np.random.Generator, in_dim: int, out_dim: int,
             activation: str = "identity") -> "DenseLayer":
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        scale = np.sqrt(2.0 / (in_dim + out_dim))
        w = rng.standard_normal((out_dim, in_dim)) * scale
        return cls(w, np.zeros(out_dim), activation)


class MLP:
    """Dense stack.  Each forward builds fresh leaves on the given tape and
    remembers them so gradients can be read back after backward."""

    def __init__(self, layers: list[DenseLayer]):
        self.layers = layers
        self._leaf_calls: list[list[Value]] = []
        self._leaf_tape: Tape | None = None

    @classmethod
    def init(cls, rng, sizes: list[int], hidden_activation: str = "relu",
             out_activation: str = "identity") -> "MLP":
        layers = []
        for i in range(len(sizes) - 1):
            act = out_activation if i == len(sizes) - 2 else hidden_activation
            layers.append(DenseLayer.init(rng, sizes[i], sizes[i + 1], act))
        return cls(layers)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out

    def forward(self, tape: Tape, x: Value) -> Value:
        # a fresh tape starts a fresh gradient accumulation; repeated
        # forwards on the same tape (e.g. one per MC draw) sum up
        if tape is not self._leaf_tape:
            self._leaf_tape = tape
            self._leaf_calls = []
        leaves = []
        h = x
        for layer in self.layers:
            w = tape.leaf(layer.weights)
            b = tape.leaf(layer.bias)
            leaves += [w, b]
            h = add_rowvec(matmul(h, transpose_const(tape, w, layer.weights)), b)
            h = _ACTIVATIONS[layer.activation](h)
        self._leaf_calls.append(leaves)
        return h

    def gradients(self) -> list[np.ndarray]:
        """Per-parameter adjoints, summed over all forwards on the last tape."""
        total = [np.zeros_like(p) for p in self.parameters()]
        for leaves in self._leaf_calls:
            for acc, leaf in zip(total, leaves):
                acc += leaf.grad
        return total

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        """Pure-numpy forward for evaluation paths; no tape, no grads."""
        h = x
        for layer in self.layers:
            h = h @ layer.weights.T + layer.bias
            h = _apply_activation_np(h, layer.activation)
        return h


def transpose_const(tape: Tape, w_leaf: Value, w_data: np.ndarray) -> Value:
    """W^T as a tape node whose adjoint flows back into the W leaf."""

    def backprop(g):
        w_leaf.grad += g.T

    return tape._record(w_data.T, (w_leaf,), backprop)


def _apply_activation_np(h: np.ndarray, activation: str) -> np.ndarray:
    if activation == "identity":
        return h
    if activation == "relu":
        return np.maximum(h, 0.0)
    if activation == "tanh":
        return np.tanh(h)
    if activation == "sigmoid":
        return _expit(h)
    if activation == "softplus":
        return np.logaddexp(0.0, h)
    raise ValueError(f"unknown activation {activation!r}")


class AdamState:
    """Bias-corrected Adam over a fixed list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.first_moment = [np.zeros_like(p) for p in params]
        self.second_moment = [np.zeros_like(p) for p in params]


def adam_step(state: AdamState, params: list[np.ndarray],
              grads: list[np.ndarray]) -> None:
    """One in-place Adam update on every parameter array."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise AutodiffError("adam_step: params/grads/state length mismatch")
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise AutodiffError("adam_step rejected a non-finite gradient")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1 ** t
    bc2 = 1.0 - state.beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
