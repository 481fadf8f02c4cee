"""Reverse-mode differentiation over dense float64 arrays.

A :class:`Tape` records every primitive applied to :class:`Tensor` values in
execution order. :func:`backward` sweeps the tape in reverse and applies each
primitive's vector-Jacobian product. The tape is rebuilt on every forward pass.

Example::

    tape = Tape()
    w = tape.variable(np.eye(2))
    loss = reduce_sum(w @ w)
    grads = backward(tape, loss)
    grads.wrt(w)
"""
from __future__ import annotations

import builtins
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, StructuralError

VJP = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class Node:
    op: str
    inputs: tuple  # node ids, None for constants
    vjp: VJP | None
    saved: dict = field(default_factory=dict)


class Tensor:
    """A value on a tape. Constants carry ``node=None``."""

    __array_ufunc__ = None
    __slots__ = ("data", "tape", "node")

    def __init__(self, data, tape: "Tape | None" = None, node: int | None = None):
        self.data = np.asarray(data, dtype=np.float64)
        self.tape = tape
        self.node = node

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def T(self):
        return transpose(self)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, node={self.node})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return elementwise_mul(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, 1.0 / other)
        return divide(self, other)

    def __neg__(self):
        return scalar_mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return slice_(self, index)


class Tape:
    """Ordered record of primitive applications.

    With ``enabled=False`` values are computed but nothing is recorded, which
    is what evaluation passes use.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.nodes: list[Node] = []
        self.param_names: dict[int, str] = {}

    def __len__(self):
        return len(self.nodes)

    def constant(self, value) -> Tensor:
        return Tensor(value, self, None)

    def variable(self, value, name: str | None = None) -> Tensor:
        value = np.array(value, dtype=np.float64)
        if not self.enabled:
            return Tensor(value, self, None)
        self.nodes.append(Node("leaf", (), None))
        node = len(self.nodes) - 1
        if name is not None:
            self.param_names[node] = name
        return Tensor(value, self, node)

    def param(self, store: "ParamStore", name: str) -> Tensor:
        return self.variable(store[name], name=name)

    def record(self, op: str, value: np.ndarray, inputs: Sequence[Tensor], vjp: VJP,
               **saved) -> Tensor:
        if not np.all(np.isfinite(value)):
            raise NumericalError(f"{op} produced non-finite values")
        tracked = [t.node for t in inputs]
        if not self.enabled or all(n is None for n in tracked):
            return Tensor(value, self, None)
        self.nodes.append(Node(op, tuple(tracked), vjp, saved))
        return Tensor(value, self, len(self.nodes) - 1)

    def ops(self, name: str) -> list[Node]:
        return [n for n in self.nodes if n.op == name]


class Gradients(dict):
    """Mapping node id -> gradient array."""

    def wrt(self, tensor: Tensor) -> np.ndarray:
        if tensor.node is None:
            raise StructuralError("tensor is a constant and has no gradient")
        g = self.get(tensor.node)
        return np.zeros_like(tensor.data) if g is None else g


def backward(tape: Tape, loss: Tensor, store: "ParamStore | None" = None) -> Gradients:
    """Propagate d(loss) back through ``tape``.

    Gradients of parameter leaves (created with :meth:`Tape.param`) are added
    into ``store.grads``.
    """
    if loss.data.size != 1:
        raise StructuralError(f"loss must be scalar, got shape {loss.shape}")
    if loss.node is None:
        return Gradients()
    grads = Gradients({loss.node: np.ones_like(loss.data)})
    for idx in range(loss.node, -1, -1):
        g = grads.get(idx)
        if g is None:
            continue
        node = tape.nodes[idx]
        if node.vjp is None:
            continue
        for parent, pg in zip(node.inputs, node.vjp(g)):
            if parent is None or pg is None:
                continue
            if parent in grads:
                grads[parent] = grads[parent] + pg
            else:
                grads[parent] = pg
    if store is not None:
        for node, name in tape.param_names.items():
            if node in grads:
                store.accumulate(name, grads[node])
    return grads


class ParamStore:
    """Named trainable arrays, their gradient accumulators and optimizer slots.

    Non-trainable buffers (e.g. batch-norm running statistics) live in
    ``buffers`` and are never touched by the optimizer.
    """

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.slots: dict[str, dict[str, np.ndarray]] = {}
        self.buffers: dict[str, np.ndarray] = {}

    def add(self, name: str, value) -> np.ndarray:
        if name in self.params:
            raise StructuralError(f"duplicate parameter name {name!r}")
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        return value

    def __getitem__(self, name):
        return self.params[name]

    def __setitem__(self, name, value):
        value = np.asarray(value, dtype=np.float64)
        if value.shape != self.params[name].shape:
            raise StructuralError(
                f"{name}: shape {value.shape} != {self.params[name].shape}")
        self.params[name] = value

    def __contains__(self, name):
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def names(self) -> list[str]:
        return list(self.params)

    def accumulate(self, name: str, grad: np.ndarray):
        if grad.shape != self.params[name].shape:
            raise StructuralError(
                f"gradient for {name} has shape {grad.shape}, "
                f"expected {self.params[name].shape}")
        self.grads[name] = self.grads[name] + grad

    def zero_grad(self):
        for name in self.grads:
            self.grads[name] = np.zeros_like(self.params[name])

    def copy(self) -> "ParamStore":
        new = ParamStore()
        new.params = {k: v.copy() for k, v in self.params.items()}
        new.grads = {k: v.copy() for k, v in self.grads.items()}
        new.slots = {k: {s: a.copy() for s, a in d.items()} for k, d in self.slots.items()}
        new.buffers = {k: v.copy() for k, v in self.buffers.items()}
        return new

    def num_parameters(self, prefix: str = "") -> int:
        return builtins.sum(v.size for k, v in self.params.items() if k.startswith(prefix))


# ---------------------------------------------------------------------------
# primitives

def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, like.tape if like is not None else None, None)


def _tape_of(*xs) -> Tape:
    for x in xs:
        if isinstance(x, Tensor) and x.tape is not None:
            return x.tape
    return Tape(enabled=False)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise StructuralError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


def add(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("add", a, b)
    sa, sb = a.shape, b.shape
    return tape.record("add", a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("sub", a, b)
    sa, sb = a.shape, b.shape
    return tape.record("sub", a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), -_unbroadcast(g, sb)))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    tape = _tape_of(a)
    a = _as_tensor(a)
    c = float(c)
    return tape.record("scalar_mul", a.data * c, (a,), lambda g: (g * c,))


def elementwise_mul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("elementwise_mul", a, b)
    ad, bd = a.data, b.data
    return tape.record("elementwise_mul", ad * bd, (a, b),
                       lambda g: (_unbroadcast(g * bd, ad.shape),
                                  _unbroadcast(g * ad, bd.shape)))


def divide(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast("divide", a, b)
    ad, bd = a.data, b.data
    out = ad / bd
    return tape.record("divide", out, (a, b),
                       lambda g: (_unbroadcast(g / bd, ad.shape),
                                  _unbroadcast(-g * out / bd, bd.shape)))


def matmul(a, b) -> Tensor:
    tape = _tape_of(a, b)
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise StructuralError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape),
                _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape))

    return tape.record("matmul", ad @ bd, (a, b), vjp)


def transpose(a: Tensor) -> Tensor:
    """Swap the last two axes."""
    tape = _tape_of(a)
    a = _as_tensor(a)
    if a.ndim < 2:
        raise StructuralError(f"transpose needs ndim >= 2, got shape {a.shape}")
    return tape.record("transpose", np.swapaxes(a.data, -1, -2), (a,),
                       lambda g: (np.swapaxes(g, -1, -2),))


def relu(a: Tensor) -> Tensor:
    tape = _tape_of(a)
    a = _as_tensor(a)
    pos = a.data > 0
    return tape.record("relu", np.where(pos, a.data, 0.0), (a,),
                       lambda g: (g * pos,), x=a.data)


def exp(a: Tensor) -> Tensor:
    tape = _tape_of(a)
    a = _as_tensor(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.data)
    return tape.record("exp", out, (a,), lambda g: (g * out,))


def sqrt(a: Tensor) -> Tensor:
    """Square root; the derivative at exactly 0 is taken as 0 (subgradient)."""
    tape = _tape_of(a)
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise NumericalError("sqrt of negative value")
    out = np.sqrt(a.data)
    pos = out > 0
    safe = np.where(pos, out, 1.0)
    return tape.record("sqrt", out, (a,), lambda g: (np.where(pos, g / (2.0 * safe), 0.0),),
                       x=a.data)


def rsqrt(a: Tensor) -> Tensor:
    """x ** -0.5 with 0 mapped to 0 (pseudo-inverse convention), zero gradient there."""
    tape = _tape_of(a)
    a = _as_tensor(a)
    if np.any(a.data < 0):
        raise NumericalError("rsqrt of negative value")
    pos = a.data > 0
    safe = np.where(pos, a.data, 1.0)
    out = np.where(pos, safe ** -0.5, 0.0)
    return tape.record("rsqrt", out, (a,),
                       lambda g: (np.where(pos, -0.5 * g * out / safe, 0.0),))


def sigmoid(a: Tensor) -> Tensor:
    tape = _tape_of(a)
    a = _as_tensor(a)
    out = _sigmoid(a.data)
    return tape.record("sigmoid", out, (a,), lambda g: (g * out * (1.0 - out),))


def softplus(a: Tensor) -> Tensor:
    """log(1 + exp(x)) evaluated without overflow."""
    tape = _tape_of(a)
    a = _as_tensor(a)
    x = a.data
    out = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    s = _sigmoid(x)
    return tape.record("softplus", out, (a,), lambda g: (g * s,))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    tape = _tape_of(a)
    a = _as_tensor(a)
    shape = a.shape
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return tape.record("sum", np.asarray(out), (a,), vjp)


def sum_rows(a: Tensor) -> Tensor:
    """Row sums: reduce the last axis."""
    return reduce_sum(a, axis=-1)


def reshape(a: Tensor, shape) -> Tensor:
    tape = _tape_of(a)
    a = _as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise StructuralError(f"reshape: cannot view {old} as {shape}") from None
    return tape.record("reshape", out, (a,), lambda g: (g.reshape(old),))


def slice_(a: Tensor, index) -> Tensor:
    tape = _tape_of(a)
    a = _as_tensor(a)
    shape = a.shape

    def vjp(g):
        full = np.zeros(shape)
        np.add.at(full, index, g)
        return (full,)

    return tape.record("slice", np.array(a.data[index]), (a,), vjp)


def pad(a: Tensor, pad_width) -> Tensor:
    """Zero-pad; ``pad_width`` follows :func:`numpy.pad`."""
    tape = _tape_of(a)
    a = _as_tensor(a)
    out = np.pad(a.data, pad_width)
    widths = np.broadcast_to(np.asarray(pad_width, dtype=int), (a.ndim, 2))
    index = tuple(slice(lo, lo + n) for (lo, _), n in zip(widths, a.shape))
    return tape.record("pad", out, (a,), lambda g: (g[index].copy(),))


def max_over_set(x: Tensor, member: np.ndarray) -> Tensor:
    """Per-feature maximum over a node set.

    ``x`` has shape (..., N, f) and ``member`` (..., N, N) is boolean;
    ``out[..., i, j] = max_{k: member[..., i, k]} x[..., k, j]``. Rows with an
    empty set produce 0. The gradient goes to the single winning index; ties go
    to the lowest index.
    """
    tape = _tape_of(x)
    x = _as_tensor(x)
    member = np.asarray(member, dtype=bool)
    if member.shape[-1] != x.shape[-2] or member.shape[-2] != x.shape[-2]:
        raise StructuralError(
            f"max_over_set: member shape {member.shape} does not match {x.shape}")
    cand = np.where(member[..., :, :, None], x.data[..., None, :, :], -np.inf)
    win = np.argmax(cand, axis=-2)  # (..., N, f)
    nonempty = member.any(axis=-1)[..., None]
    out = np.where(nonempty, np.take_along_axis(x.data, win, axis=-2), 0.0)
    n = x.shape[-2]

    def vjp(g):
        g = np.where(nonempty, g, 0.0)
        onehot = win[..., None, :] == np.arange(n)[:, None]  # (..., N, N, f)
        return ((onehot * g[..., None, :]).sum(axis=-3),)

    return tape.record("max_over_set", out, (x,), vjp, win=win)


def top_eigenvalue(a: Tensor) -> Tensor:
    """Largest eigenvalue of each symmetric matrix in a (..., N, N) stack.

    Output shape (..., 1, 1). The gradient is v vᵀ for the top eigenvector v,
    valid where the top eigenvalue is simple.
    """
    tape = _tape_of(a)
    a = _as_tensor(a)
    try:
        w, v = np.linalg.eigh(a.data)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigendecomposition failed: {exc}") from None
    top = v[..., :, -1]
    out = w[..., -1][..., None, None]
    return tape.record("top_eigenvalue", out, (a,),
                       lambda g: (g * top[..., :, None] * top[..., None, :],),
                       eigenvalues=w)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tape = _tape_of(*tensors)
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise StructuralError(
            f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return tape.record("concat", out, tensors,
                       lambda g: [p.copy() for p in np.split(g, bounds, axis=axis)])


# ---------------------------------------------------------------------------

def finite_difference(f: Callable[[np.ndarray], float], x: np.ndarray,
                      step: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar ``f`` at ``x``."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f(x)
        flat[i] = orig - step
        lo = f(x)
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad

