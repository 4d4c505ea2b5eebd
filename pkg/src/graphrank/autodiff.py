"""Dense reverse-mode differentiation over numpy arrays.

A :class:`Tensor` records the op that produced it and a closure mapping the
output gradient to parent gradients. Calling :meth:`Tensor.backward` on a
scalar walks the recorded graph in reverse topological order.

Everything is float64. Any non-finite value produced by an op raises
:class:`NumericError` naming that op.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.special import expit


class ShapeError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, value, requires_grad: bool = False, parents=(), backward=None, op="leaf"):
        value = _as_array(value)
        if not np.isfinite(value).all():
            raise NumericError(f"non-finite value produced by {op}")
        self.value = value
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward
        self.op = op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape})"

    def backward(self, grad=None) -> None:
        if grad is None:
            if self.value.size != 1:
                raise ShapeError(f"backward on non-scalar output of shape {self.shape}")
            grad = np.ones_like(self.value)
        order: list[Tensor] = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): _as_array(grad)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg

    __array_priority__ = 100

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, backward, op) -> Tensor:
    req = any(p.requires_grad for p in parents)
    return Tensor(value, req, parents if req else (), backward if req else None, op)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast {a.shape} with {b.shape}") from None


# -- elementwise ------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    return _make(a.value - b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)), "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    return _make(a.value * b.value, (a, b),
                 lambda g: (_unbroadcast(g * b.value, a.shape),
                            _unbroadcast(g * a.value, b.shape)), "mul")


def square(a: Tensor) -> Tensor:
    return _make(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,), "square")


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.value)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0
    return _make(a.value * mask, (a,), lambda g: (g * mask,), "relu")


def identity(a: Tensor) -> Tensor:
    return a


ACTIVATIONS: dict[str, Callable[[Tensor], Tensor]] = {
    "sigmoid": sigmoid, "tanh": tanh, "relu": relu, "identity": identity,
}


def activation(name: str) -> Callable[[Tensor], Tensor]:
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}") from None


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return expit(x)


def _act_forward(name: str, h: np.ndarray) -> np.ndarray:
    """Apply an activation in place and return the result."""
    if name == "sigmoid":
        with np.errstate(over="ignore"):
            np.negative(h, out=h)
            np.exp(h, out=h)
        h += 1.0
        return np.reciprocal(h, out=h)
    if name == "tanh":
        return np.tanh(h, out=h)
    if name == "relu":
        return np.maximum(h, 0.0, out=h)
    if name == "identity":
        return h
    raise ValueError(f"unknown activation {name!r}")


def _act_grad(name: str, out: np.ndarray, g: np.ndarray) -> np.ndarray:
    if name == "sigmoid":
        d = 1.0 - out
        d *= out
        d *= g
        return d
    if name == "tanh":
        d = out * out
        np.subtract(1.0, d, out=d)
        d *= g
        return d
    if name == "relu":
        return g * (out > 0)
    return g


def linear(x, W, b=None, act: str = "identity") -> Tensor:
    """Fused ``act(x @ W + b)``; same result as composing matmul, add and the activation."""
    x, W = as_tensor(x), as_tensor(W)
    if x.value.ndim != 2 or W.value.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeError(f"linear: incompatible shapes {x.shape} @ {W.shape}")
    h = x.value @ W.value
    parents = (x, W)
    if b is not None:
        b = as_tensor(b)
        if b.shape not in ((1, W.shape[1]), (W.shape[1],)):
            raise ShapeError(f"linear: bias shape {b.shape} does not fit output width {W.shape[1]}")
        h += b.value
        parents = (x, W, b)
    out = _act_forward(act, h)

    def back(g):
        d = _act_grad(act, out, g)
        grads = (d @ W.value.T if x.requires_grad else None,
                 x.value.T @ d if W.requires_grad else None)
        if b is not None:
            grads += (d.sum(axis=0).reshape(b.shape),)
        return grads

    return _make(out, parents, back, f"linear[{act}]")


# -- linear algebra and reductions ------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
    return _make(a.value @ b.value, (a, b),
                 lambda g: (g @ b.value.T, a.value.T @ g), "matmul")


def sparse_matmul(m: sp.spmatrix, x: Tensor) -> Tensor:
    """Product of a constant sparse matrix with a tensor."""
    if m.shape[1] != x.shape[0]:
        raise ShapeError(f"sparse_matmul: incompatible shapes {m.shape} @ {x.shape}")
    return _make(m @ x.value, (x,), lambda g: (m.T @ g,), "sparse_matmul")


def gather_rows(x: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
        raise ShapeError(f"gather_rows: index out of range for {x.shape[0]} rows")
    n = x.shape[0]

    def back(g):
        out = np.zeros((n,) + g.shape[1:])
        np.add.at(out, idx, g)
        return (out,)

    return _make(x.value[idx], (x,), back, "gather_rows")


def total(a: Tensor) -> Tensor:
    return _make(a.value.sum(), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),), "sum")


def mean(a: Tensor) -> Tensor:
    n = a.value.size
    if n == 0:
        raise ShapeError("mean: empty tensor")
    return _make(a.value.mean(), (a,), lambda g: (np.full(a.shape, g / n),), "mean")


# -- segment ops ------------------------------------------------------------

def _segment_starts(segment_ids: np.ndarray, n_groups: int, op: str) -> np.ndarray:
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.size and np.any(np.diff(segment_ids) < 0):
        raise ShapeError(f"{op}: segment ids must be non-decreasing")
    counts = np.bincount(segment_ids, minlength=n_groups)
    if counts.shape[0] != n_groups:
        raise ShapeError(f"{op}: segment id {segment_ids.max()} >= group count {n_groups}")
    if np.any(counts == 0):
        raise ShapeError(f"{op}: empty segment {int(np.argmin(counts))}")
    return np.concatenate([[0], np.cumsum(counts)[:-1]])


def segment_sum(x: Tensor, segment_ids, n_groups: int | None = None) -> Tensor:
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    n_groups = int(segment_ids.max()) + 1 if n_groups is None else n_groups
    starts = _segment_starts(segment_ids, n_groups, "segment_sum")
    if x.shape[0] != segment_ids.shape[0]:
        raise ShapeError(f"segment_sum: {x.shape[0]} rows but {segment_ids.shape[0]} segment ids")
    return _make(np.add.reduceat(x.value, starts, axis=0), (x,),
                 lambda g: (g[segment_ids],), "segment_sum")


def segment_mean(x: Tensor, segment_ids, n_groups: int | None = None) -> Tensor:
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    n_groups = int(segment_ids.max()) + 1 if n_groups is None else n_groups
    starts = _segment_starts(segment_ids, n_groups, "segment_mean")
    if x.shape[0] != segment_ids.shape[0]:
        raise ShapeError(f"segment_mean: {x.shape[0]} rows but {segment_ids.shape[0]} segment ids")
    counts = np.bincount(segment_ids, minlength=n_groups).astype(np.float64)
    counts = counts.reshape((-1,) + (1,) * (x.value.ndim - 1))
    return _make(np.add.reduceat(x.value, starts, axis=0) / counts, (x,),
                 lambda g: ((g / counts)[segment_ids],), "segment_mean")


def segment_softmax(scores: Tensor, segment_ids, n_groups: int | None = None) -> Tensor:
    """Softmax of an ``(n, 1)`` score column within each segment."""
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    n_groups = int(segment_ids.max()) + 1 if n_groups is None else n_groups
    starts = _segment_starts(segment_ids, n_groups, "segment_softmax")
    s = scores.value
    shifted = s - np.maximum.reduceat(s, starts, axis=0)[segment_ids]
    e = np.exp(shifted)
    w = e / np.add.reduceat(e, starts, axis=0)[segment_ids]

    def back(g):
        inner = np.add.reduceat(g * w, starts, axis=0)[segment_ids]
        return (w * (g - inner),)

    return _make(w, (scores,), back, "segment_softmax")


def segment_reduce(values: Tensor, segment_ids, mode: str, n_groups: int | None = None,
                   score_weights: Tensor | None = None, score_bias: Tensor | None = None) -> Tensor:
    """Reduce rows per segment: ``sum``, ``mean`` or ``softmax``.

    Softmax mode computes a score ``values @ score_weights + score_bias`` per
    row, normalizes it within each segment and returns the weighted sum of
    rows. Without score parameters all scores are zero, i.e. a plain mean.
    """
    values = as_tensor(values)
    if mode == "sum":
        return segment_sum(values, segment_ids, n_groups)
    if mode == "mean":
        return segment_mean(values, segment_ids, n_groups)
    if mode == "softmax":
        if score_weights is None:
            scores = Tensor(np.zeros((values.shape[0], 1)))
        else:
            scores = matmul(values, score_weights)
            if score_bias is not None:
                scores = add(scores, score_bias)
        weights = segment_softmax(scores, segment_ids, n_groups)
        return segment_sum(mul(weights, values), segment_ids, n_groups)
    raise ValueError(f"unknown pooling mode {mode!r}")


# -- losses -----------------------------------------------------------------

def bce_with_logits(logits: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy with ``p = logistic(logit)`` clamped to [1e-12, 1-1e-12]."""
    labels = _as_array(labels).reshape(logits.shape)
    p = np.clip(_sigmoid(logits.value), 1e-12, 1.0 - 1e-12)
    n = labels.size
    loss = -np.mean(labels * np.log(p) + (1.0 - labels) * np.log1p(-p))
    # gradient of the unclamped logistic loss
    p_raw = _sigmoid(logits.value)
    return _make(loss, (logits,), lambda g: (g * (p_raw - labels) / n,), "bce_with_logits")


def mse(pred: Tensor, target) -> Tensor:
    target = _as_array(target).reshape(pred.shape)
    return mean(square(sub(pred, target)))


# -- parameters -------------------------------------------------------------

class ParamStore:
    """Named parameter arrays with matching gradient slots."""

    def __init__(self, rng_seed: int = 0):
        self.rng_seed = rng_seed
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._rng = np.random.default_rng(rng_seed)

    def __contains__(self, name):
        return name in self.params

    def __getitem__(self, name) -> np.ndarray:
        return self.params[name]

    def __len__(self):
        return len(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def add(self, name: str, shape: tuple[int, ...], init: str = "glorot") -> np.ndarray:
        if name in self.params:
            raise KeyError(f"parameter {name!r} already exists")
        if init == "glorot":
            fan_in = shape[0]
            fan_out = shape[1] if len(shape) > 1 else 1
            s = np.sqrt(6.0 / (fan_in + fan_out))
            value = self._rng.uniform(-s, s, size=shape)
        elif init == "zeros":
            value = np.zeros(shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        self.set(name, value)
        return self.params[name]

    def set(self, name: str, value) -> None:
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def zero_grad(self) -> None:
        for name, v in self.params.items():
            self.grads[name] = np.zeros_like(v)

    def copy(self) -> "ParamStore":
        other = ParamStore(self.rng_seed)
        for name, v in self.params.items():
            other.params[name] = v.copy()
            other.grads[name] = self.grads[name].copy()
        return other

    def num_weights(self) -> int:
        return sum(v.size for v in self.params.values())


def forward_backward(fn: Callable[..., Tensor], params: ParamStore, *inputs):
    """Run ``fn(leaves, *inputs)`` and write d(output)/d(param) into ``params.grads``.

    ``leaves`` maps parameter names to fresh differentiable tensors. The output
    must be a scalar. Returns the output value as a float.
    """
    leaves = {name: Tensor(v, requires_grad=True) for name, v in params.params.items()}
    out = fn(leaves, *inputs)
    out.backward()
    for name, leaf in leaves.items():
        params.grads[name] = leaf.grad if leaf.grad is not None else np.zeros_like(params.params[name])
    return float(out.value)


def constants(params: ParamStore) -> dict[str, Tensor]:
    """Non-differentiable views of the parameters for inference passes."""
    return {name: Tensor(v) for name, v in params.params.items()}


# -- checkpoints ------------------------------------------------------------

CHECKPOINT_FORMAT = "graphrank-checkpoint/1"


def save_checkpoint(path: str | Path, params: ParamStore, meta: dict | None = None) -> None:
    """Write parameters as JSON: ``{"format", "rng_seed", "meta", "params": [{name, shape, values}]}``.

    Python's float repr is the shortest round-tripping decimal, so loading
    restores every float64 bit-exactly.
    """
    doc = {
        "format": CHECKPOINT_FORMAT,
        "rng_seed": params.rng_seed,
        "meta": meta or {},
        "params": [{"name": n, "shape": list(v.shape), "values": v.ravel().tolist()}
                   for n, v in params.params.items()],
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[ParamStore, dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    params = ParamStore(doc.get("rng_seed", 0))
    for entry in doc["params"]:
        params.set(entry["name"], np.array(entry["values"], dtype=np.float64).reshape(entry["shape"]))
    return params, doc.get("meta", {})
