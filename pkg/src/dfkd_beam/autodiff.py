"""
Small reverse-mode automatic differentiation engine on top of numpy.

Every :class:`Tensor` produced by an operation remembers its parents and a
closure that maps the upstream gradient to gradients for each parent. Nodes
receive a monotonically increasing creation id, so sorting the reachable
nodes by id (descending) gives a valid reverse topological order without a
recursive graph walk.

Broadcasting is deliberately limited to tensor-with-scalar. The only other
implicit expansion is the bias row in :func:`linear`.
"""

from __future__ import annotations

import itertools
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ContractError, DimensionError, ParameterError

_ids = itertools.count()

GradFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """Dense float64 array that participates in a differentiation graph.

    ``grad`` is ``None`` until a backward pass reaches the tensor; repeated
    backward passes accumulate (``+=``) until :meth:`zero_grad` is called.
    """

    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_grad_fn", "_id")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None,
                 _parents: tuple["Tensor", ...] = (), _grad_fn: GradFn | None = None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name
        self._parents = _parents
        self._grad_fn = _grad_fn
        self._id = next(_ids)

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() on a tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

    # -- operator sugar ---------------------------------------------------
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

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a python scalar")
        return mul(self, 1.0 / float(other))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], grad_fn: GradFn) -> Tensor:
    needs = any(p.requires_grad for p in parents)
    if not needs:
        return Tensor(data)
    return Tensor(data, requires_grad=True, _parents=parents, _grad_fn=grad_fn)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(node) into ``.grad`` of every reachable node.

    Gradients flowing within one call are kept in a pass-local table, so a
    second call adds exactly one more copy of each gradient.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return

    seen: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        node = stack.pop()
        if node._id in seen:
            continue
        seen[node._id] = node
        for p in node._parents:
            if p.requires_grad and p._id not in seen:
                stack.append(p)

    pending: dict[int, np.ndarray] = {loss._id: np.ones_like(loss.data)}
    for nid in sorted(seen, reverse=True):
        node = seen[nid]
        g = pending.pop(nid, None)
        if g is None:
            g = np.zeros_like(node.data)
        node.grad = g.copy() if node.grad is None else node.grad + g
        if node._grad_fn is None:
            continue
        for parent, pg in zip(node._parents, node._grad_fn(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent._id in pending:
                pending[parent._id] = pending[parent._id] + pg
            else:
                pending[parent._id] = pg


# ---------------------------------------------------------------------------
# elementwise binary ops
# ---------------------------------------------------------------------------

def _check_binary(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape and a.size != 1 and b.size != 1:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ and neither is a scalar")


def _reduce_to(g: np.ndarray, target: Tensor) -> np.ndarray:
    if g.shape == target.shape:
        return g
    # scalar operand: sum the broadcast gradient back down
    return np.full(target.shape, g.sum())


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "add")
    return _make(a.data + b.data, (a, b),
                 lambda g: (_reduce_to(g, a), _reduce_to(g, b)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "sub")
    return _make(a.data - b.data, (a, b),
                 lambda g: (_reduce_to(g, a), _reduce_to(-g, b)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_binary(a, b, "mul")
    return _make(a.data * b.data, (a, b),
                 lambda g: (_reduce_to(g * b.data, a) if a.requires_grad else None,
                            _reduce_to(g * a.data, b) if b.requires_grad else None))


# ---------------------------------------------------------------------------
# elementwise unary ops
# ---------------------------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return _make(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return _make(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    return _make(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return _make(y, (x,), lambda g: (g * 0.5 / y,))


_ELEMENTWISE = {
    "add": add, "sub": sub, "mul": mul,
    "relu": relu, "tanh": tanh, "sigmoid": sigmoid, "square": square,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: ``elementwise("tanh", x)``, ``elementwise("add", a, b)``."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ParameterError(f"unknown elementwise op {op!r}; expected one of {sorted(_ELEMENTWISE)}") from None
    return fn(*[as_tensor(a) for a in args])


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return _make(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T if a.requires_grad else None,
                            a.data.T @ g if b.requires_grad else None))


def linear(x, w, b) -> Tensor:
    """``x @ w + b`` with ``b`` added to every row (x: B×k, w: k×n, b: n)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"linear: cannot multiply {x.shape} by {w.shape}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"linear: bias shape {b.shape} does not match output width {w.shape[1]}")
    return _make(x.data @ w.data + b.data, (x, w, b),
                 lambda g: (g @ w.data.T if x.requires_grad else None,
                            x.data.T @ g if w.requires_grad else None,
                            g.sum(axis=0) if b.requires_grad else None))


# ---------------------------------------------------------------------------
# reductions and shape manipulation
# ---------------------------------------------------------------------------

def tsum(x: Tensor, axis: int | None = None) -> Tensor:
    shape = x.shape
    if axis is None:
        return _make(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),))
    return _make(x.data.sum(axis=axis), (x,),
                 lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),))


def tmean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.size if axis is None else x.shape[axis]
    return mul(tsum(x, axis), 1.0 / n)


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def getitem(x: Tensor, index) -> Tensor:
    shape = x.shape

    idx = index if isinstance(index, tuple) else (index,)
    fancy = any(isinstance(i, (list, np.ndarray)) for i in idx)

    def grad_fn(g):
        full = np.zeros(shape)
        if fancy:
            np.add.at(full, index, g)
        else:
            full[index] += g
        return (full,)

    return _make(np.array(x.data[index]), (x,), grad_fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as exc:
        raise DimensionError(f"concat: {[t.shape for t in tensors]} along axis {axis}: {exc}") from None
    splits = np.cumsum(sizes)[:-1]
    return _make(data, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: shapes differ {sorted(shapes)}")
    data = np.stack([t.data for t in tensors], axis=axis)
    n = len(tensors)
    return _make(data, tuple(tensors),
                 lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# ---------------------------------------------------------------------------
# probability helpers
# ---------------------------------------------------------------------------

def _check_temperature(temperature: float) -> float:
    t = float(temperature)
    if not t > 0 or not np.isfinite(t):
        raise ParameterError(f"temperature must be a positive finite number, got {temperature!r}")
    return t


def softmax_np(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    s = z / temperature
    s = s - s.max(axis=-1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    s = z / temperature
    s = s - s.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def softmax(z, temperature: float = 1.0) -> Tensor:
    """Softmax of ``z / temperature`` along the last axis."""
    z = as_tensor(z)
    t = _check_temperature(temperature)
    p = softmax_np(z.data, t)

    def grad_fn(g):
        return ((p * (g - (g * p).sum(axis=-1, keepdims=True))) / t,)

    return _make(p, (z,), grad_fn)


def log_softmax(z, temperature: float = 1.0) -> Tensor:
    z = as_tensor(z)
    t = _check_temperature(temperature)
    out = log_softmax_np(z.data, t)
    p = np.exp(out)

    def grad_fn(g):
        return ((g - p * g.sum(axis=-1, keepdims=True)) / t,)

    return _make(out, (z,), grad_fn)


def moments(x) -> tuple[Tensor, Tensor]:
    """Per-column mean and biased (divide-by-B) variance of a B×H batch."""
    x = as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"moments expects a B×H matrix, got shape {x.shape}")
    b = x.shape[0]
    if b < 1:
        raise ParameterError("moments of an empty batch")
    mu = x.data.mean(axis=0)
    centered = x.data - mu
    var = (centered ** 2).mean(axis=0)
    mean_t = _make(mu, (x,), lambda g: (np.broadcast_to(g / b, x.shape).copy(),))
    # d var / dx_ij = 2 (x_ij - mu_j) / B; the mean's own dependence cancels
    var_t = _make(var, (x,), lambda g: (2.0 * centered * g / b,))
    return mean_t, var_t


def l2_norm(x, axis: int = -1) -> Tensor:
    """Euclidean norm along ``axis``; the gradient at the zero vector is taken as 0."""
    x = as_tensor(x)
    n = np.sqrt((x.data ** 2).sum(axis=axis))

    def grad_fn(g):
        nk = np.expand_dims(n, axis)
        safe = np.where(nk > 0, nk, 1.0)
        return (np.where(nk > 0, x.data / safe, 0.0) * np.expand_dims(g, axis),)

    return _make(n, (x,), grad_fn)


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

def numerical_gradient(fn: Callable[[], Tensor], array: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn()`` with respect to ``array`` (mutated in place, restored)."""
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn().item()
        flat[i] = orig - eps
        fm = fn().item()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-12) -> float:
    """``‖a - b‖ / max(‖a‖, ‖b‖, floor)``."""
    den = max(np.linalg.norm(a), np.linalg.norm(b), floor)
    return float(np.linalg.norm(a - b) / den)


def gradcheck(fn: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-5) -> dict[str, float]:
    """Compare autodiff and finite-difference gradients of ``fn()`` for each tensor.

    ``fn`` must rebuild its graph from the tensors' current ``data`` on each
    call. Returns the relative error per tensor (keyed by name or position).
    """
    params = list(params)
    for p in params:
        p.zero_grad()
    loss = fn()
    backward(loss)
    errors = {}
    for i, p in enumerate(params):
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numerical_gradient(fn, p.data, eps)
        errors[p.name or str(i)] = relative_error(analytic, numeric)
    return errors
