"""Small reverse-mode differentiation substrate on top of numpy.

Each kernel returns a new :class:`Tensor` holding its forward value and a
closure that pushes the upstream gradient back to its inputs. Calling
``backward()`` on a scalar result walks the graph in reverse topological
order, so gradients are exact (analytic) and accumulated in a fixed order.

All data is float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import NumericError, ShapeError, ValidationError

PROB_EPS = 1e-7
GRAD_FLOOR = 1e-8


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def numpy(self):
        return self.data

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf."""
        if seed is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() needs a scalar, got shape {self.shape}")
            seed = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

        grads = {id(self): np.asarray(seed, dtype=np.float64)}
        owned = set()
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
                _accumulate(grads, owned, id(parent), pg, parent.shape)


class _SliceGrad:
    """Gradient that is zero except on ``array[key]``."""

    __slots__ = ("key", "value")

    def __init__(self, key, value):
        self.key = key
        self.value = value


def _accumulate(grads, owned, key, pg, shape):
    # buffers in ``owned`` were allocated here and may be updated in place;
    # anything else may alias an upstream gradient and is copied first
    buf = grads.get(key)
    if isinstance(pg, _SliceGrad):
        if buf is None:
            buf = np.zeros(shape)
        elif key not in owned:
            buf = buf.copy()
        buf[pg.key] += pg.value
        grads[key] = buf
        owned.add(key)
    elif buf is None:
        grads[key] = pg
    elif key in owned:
        buf += pg
    else:
        grads[key] = buf + pg
        owned.add(key)


def tensor(data, requires_grad=False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(name, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{name}: cannot broadcast a{a.shape} with b{b.shape}") from None


# --- elementwise ----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("add", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor(a.data + b.data, _parents=(a, b), _backward=backward)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("sub", a, b)

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor(a.data - b.data, _parents=(a, b), _backward=backward)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor(a.data * b.data, _parents=(a, b), _backward=backward)


def scale(a, c: float) -> Tensor:
    a = _as_tensor(a)
    return Tensor(a.data * c, _parents=(a,), _backward=lambda g: (g * c,))


def rsub(c: float, a) -> Tensor:
    """``c - a`` for a python scalar ``c``."""
    a = _as_tensor(a)
    return Tensor(c - a.data, _parents=(a,), _backward=lambda g: (-g,))


def _stable_sigmoid(x):
    # tanh form: no overflow for large |x| and exactly 0.5 at 0
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    s = _stable_sigmoid(a.data)
    return Tensor(s, _parents=(a,), _backward=lambda g: (g * s * (1.0 - s),))


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.data <= 0):
        raise NumericError("log: non-positive input")
    return Tensor(np.log(a.data), _parents=(a,), _backward=lambda g: (g / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to ``[lo, hi]``; gradient passes only where the input is inside."""
    a = _as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor(np.clip(a.data, lo, hi), _parents=(a,),
                  _backward=lambda g: (g * inside,))


def softmax(a) -> Tensor:
    """Softmax over the last axis."""
    a = _as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (s * (g - (g * s).sum(axis=-1, keepdims=True)),)

    return Tensor(s, _parents=(a,), _backward=backward)


# --- linear algebra / shape ------------------------------------------------

def _matmul(x, y):
    # BLAS summation order depends on memory layout and numpy's batched path
    # differs from the 2-D one. Operands are made C-contiguous and stacks go
    # slice by slice, so a stacked forest reproduces each tree bit for bit.
    if x.ndim == 2 and y.ndim == 2:
        return np.matmul(np.ascontiguousarray(x), np.ascontiguousarray(y))
    lead = np.broadcast_shapes(x.shape[:-2], y.shape[:-2])
    x = np.broadcast_to(x, lead + x.shape[-2:])
    y = np.broadcast_to(y, lead + y.shape[-2:])
    out = np.empty(lead + (x.shape[-2], y.shape[-1]))
    for idx in np.ndindex(*lead):
        out[idx] = np.matmul(np.ascontiguousarray(x[idx]), np.ascontiguousarray(y[idx]))
    return out


def matmul(a, b) -> Tensor:
    """Batched matmul over leading axes, numpy semantics for ndim >= 2."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: a{a.shape} @ b{b.shape}")
    try:
        out = _matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul: a{a.shape} @ b{b.shape}") from None

    def backward(g):
        ga = _matmul(g, np.swapaxes(b.data, -1, -2))
        gb = _matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor(out, _parents=(a, b), _backward=backward)


def transpose(a) -> Tensor:
    """Swap the last two axes."""
    a = _as_tensor(a)
    return Tensor(np.swapaxes(a.data, -1, -2), _parents=(a,),
                  _backward=lambda g: (np.swapaxes(g, -1, -2),))


def reshape(a, shape) -> Tensor:
    a = _as_tensor(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: {a.shape} -> {tuple(shape)}") from None
    return Tensor(out, _parents=(a,), _backward=lambda g: (g.reshape(a.shape),))


def expand_dims(a, axis: int) -> Tensor:
    a = _as_tensor(a)
    return Tensor(np.expand_dims(a.data, axis), _parents=(a,),
                  _backward=lambda g: (np.squeeze(g, axis=axis),))


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate along ``axis`` (last by default)."""
    ts = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in ts], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in ts)
        raise ShapeError(f"concat: incompatible shapes {shapes}") from None
    bounds = np.cumsum([t.shape[axis] for t in ts])[:-1]

    def backward(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor(out, _parents=tuple(ts), _backward=backward)


def take(a, key) -> Tensor:
    """Basic slicing ``a[key]`` (ints and slices only)."""
    a = _as_tensor(a)
    try:
        out = a.data[key]
    except IndexError as exc:
        raise ShapeError(f"slice: {key!r} on shape {a.shape}: {exc}") from None

    return Tensor(out, _parents=(a,), _backward=lambda g: (_SliceGrad(key, g),))


def reduce_sum(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    out = a.data.sum(axis=axis)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),)

    return Tensor(out, _parents=(a,), _backward=backward)


def reduce_mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    n = a.data.size if axis is None else a.shape[axis]
    return scale(reduce_sum(a, axis=axis), 1.0 / n)


# --- loss ------------------------------------------------------------------

def bce(p, y) -> Tensor:
    """Mean binary cross-entropy of probabilities ``p`` against labels ``y``."""
    p = _as_tensor(p)
    y = np.asarray(y, dtype=np.float64)
    if p.shape != y.shape:
        raise ShapeError(f"bce: p{p.shape} vs y{y.shape}")
    pc = clip(p, PROB_EPS, 1.0 - PROB_EPS)
    terms = add(mul(y, log(pc)), mul(1.0 - y, log(rsub(1.0, pc))))
    return scale(reduce_mean(terms), -1.0)


def bce_loss(p, y):
    """Return ``(loss, dloss/dp)`` for a probability vector and 0/1 labels."""
    pt = Tensor(np.asarray(p, dtype=np.float64), requires_grad=True)
    loss = bce(pt, y)
    loss.backward()
    return float(loss.data), pt.grad


# --- parameters and Adam ----------------------------------------------------

@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("beta1 and beta2 must lie in [0, 1)")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")


@dataclass
class ParamStore:
    """Named parameter arrays plus their Adam moments."""

    params: dict
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0

    def __post_init__(self):
        self.params = {k: np.array(v, dtype=np.float64) for k, v in self.params.items()}
        for k, p in self.params.items():
            self.m.setdefault(k, np.zeros_like(p))
            self.v.setdefault(k, np.zeros_like(p))

    def __getitem__(self, name):
        return self.params[name]

    def names(self):
        return list(self.params)

    def copy(self) -> "ParamStore":
        return ParamStore(
            {k: p.copy() for k, p in self.params.items()},
            {k: a.copy() for k, a in self.m.items()},
            {k: a.copy() for k, a in self.v.items()},
            self.t,
        )


def adam_step(store: ParamStore, grads: Mapping[str, np.ndarray], cfg: AdamConfig) -> ParamStore:
    """One bias-corrected Adam update, applied in place; returns ``store``."""
    if set(grads) != set(store.params):
        missing = sorted(set(store.params) - set(grads))
        extra = sorted(set(grads) - set(store.params))
        raise KeyError(f"gradient keys mismatch: missing={missing} extra={extra}")
    store.t += 1
    bc1 = 1.0 - cfg.beta1 ** store.t
    bc2 = 1.0 - cfg.beta2 ** store.t
    for name in store.params:
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != store.params[name].shape:
            raise ShapeError(f"adam: grad {name}{g.shape} vs param {store.params[name].shape}")
        m, v = store.m[name], store.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        store.params[name] = store.params[name] - (cfg.learning_rate / bc1) * m / (np.sqrt(v / bc2) + cfg.epsilon)
    return store


# --- finite differences -----------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_error: dict
    tol: float

    @property
    def passed(self) -> bool:
        return all(e < self.tol for e in self.max_rel_error.values())

    @property
    def worst(self) -> float:
        return max(self.max_rel_error.values(), default=0.0)


def gradient_check(
    f: Callable[[dict], Tensor],
    params: ParamStore | Mapping[str, np.ndarray],
    step: float = 1e-5,
    tol: float = 1e-4,
) -> GradCheckReport:
    """Compare reverse-mode gradients of ``f`` with central differences.

    Uses the fourth-order five-point stencil. With it a coarser ``step``
    (say 1e-3) keeps truncation error negligible while cutting round-off,
    which matters for coordinates whose gradient is tiny.

    ``f`` receives a dict of :class:`Tensor` keyed like ``params`` and must
    return a scalar Tensor. Relative error per coordinate is
    ``|a - n| / max(|a|, |n|, floor)``; the floor keeps coordinates that are
    zero up to round-off (both values below ~1e-8) from reading as 100% error.
    """
    arrays = params.params if isinstance(params, ParamStore) else params
    arrays = {k: np.array(v, dtype=np.float64) for k, v in arrays.items()}

    leaves = {k: Tensor(v.copy(), requires_grad=True) for k, v in arrays.items()}
    out = f(leaves)
    if not np.all(np.isfinite(out.data)):
        raise NumericError("gradient_check: f is not finite at params")
    out.backward()

    def value(current):
        r = float(f({k: Tensor(v) for k, v in current.items()}).data)
        if not math.isfinite(r):
            raise NumericError("gradient_check: f is not finite at a perturbed point")
        return r

    report = {}
    for name, base in arrays.items():
        analytic = leaves[name].grad
        if analytic is None:
            analytic = np.zeros_like(base)
        worst = 0.0
        for idx in np.ndindex(base.shape):
            def shifted(k):
                moved = base.copy()
                moved[idx] += k * step
                return value({**arrays, name: moved})

            numeric = (8.0 * (shifted(1) - shifted(-1)) - (shifted(2) - shifted(-2))) / (12.0 * step)
            a = float(analytic[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), GRAD_FLOOR)
            worst = max(worst, err)
        report[name] = worst
    return GradCheckReport(report, tol)
