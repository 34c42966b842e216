"""Minimal dense-tensor reverse-mode autodiff with an Adam optimizer.

Everything is float64 and CPU-only. Graphs are built eagerly: each op
returns a new Tensor holding its value and a closure that propagates
gradients to its parents. `backward()` on a scalar root fills `.grad`
on every reachable tensor with `requires_grad=True`.

Broadcasting is deliberately restricted to adding a bias vector over the
rows of a matrix; anything else raises ShapeError so that shape bugs
surface at the op that caused them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible for an op."""

    def __init__(self, op: str, *shapes):
        self.op = op
        self.shapes = tuple(tuple(s) for s in shapes)
        super().__init__(f"{op}: incompatible shapes {self.shapes}")


class NonFiniteError(FloatingPointError):
    """Raised when a non-finite value is found where finiteness is required."""

    def __init__(self, where: str):
        self.where = where
        super().__init__(f"non-finite values in {where}")


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class Tensor:
    """A node in the computation graph: a float64 ndarray plus grad plumbing."""

    __slots__ = ("value", "grad", "op", "parents", "_backward", "requires_grad", "name")

    def __init__(self, value, requires_grad=False, op="leaf", parents=(), name=None):
        self.value = _as_array(value)
        self.grad: np.ndarray | None = None
        self.op = op
        self.parents: tuple[Tensor, ...] = parents
        self._backward = None  # set by the op that created this tensor
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.value.shape

    def item(self) -> float:
        return float(self.value)

    def __repr__(self):
        return f"Tensor(op={self.op!r}, shape={self.value.shape})"

    # Operator sugar; constants are wrapped as non-differentiable leaves.
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def backward(self):
        """Reverse-mode sweep from a scalar root."""
        if self.value.size != 1:
            raise ShapeError("backward(root must be scalar)", self.value.shape)
        order = topo_order(self)
        for t in order:
            t.grad = None
        self.grad = np.ones_like(self.value)
        for t in reversed(order):
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)


def topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the graph reachable from root."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
    return order


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray):
    if t.grad is None:
        t.grad = np.zeros_like(t.value)
    t.grad = t.grad + g


def _is_scalar(a: np.ndarray) -> bool:
    return a.size == 1 and a.ndim == 0


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    bias = a.value.ndim == 2 and b.value.ndim == 1 and a.value.shape[1] == b.value.shape[0]
    if not (a.value.shape == b.value.shape or bias or _is_scalar(a.value) or _is_scalar(b.value)):
        raise ShapeError("add", a.value.shape, b.value.shape)
    out = Tensor(a.value + b.value, op="add", parents=(a, b))

    def _bw(g):
        _accum(a, _reduce_to(g, a.value))
        _accum(b, _reduce_to(g, b.value))

    out._backward = _bw
    return out


def _reduce_to(g: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Sum g down to target's shape (scalar or bias-vector broadcast)."""
    if g.shape == target.shape:
        return g
    if target.ndim == 0:
        return np.asarray(g.sum())
    if target.ndim == 1 and g.ndim == 2 and g.shape[1] == target.shape[0]:
        return g.sum(axis=0)
    raise ShapeError("reduce_to", g.shape, target.shape)


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if not (a.value.shape == b.value.shape or _is_scalar(a.value) or _is_scalar(b.value)):
        raise ShapeError("sub", a.value.shape, b.value.shape)
    out = Tensor(a.value - b.value, op="sub", parents=(a, b))

    def _bw(g):
        _accum(a, _reduce_to(g, a.value))
        _accum(b, _reduce_to(-g, b.value))

    out._backward = _bw
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _wrap(a), _wrap(b)
    if not (a.value.shape == b.value.shape or _is_scalar(a.value) or _is_scalar(b.value)):
        raise ShapeError("mul", a.value.shape, b.value.shape)
    out = Tensor(a.value * b.value, op="mul", parents=(a, b))

    def _bw(g):
        _accum(a, _reduce_to(g * b.value, a.value))
        _accum(b, _reduce_to(g * a.value, b.value))

    out._backward = _bw
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.value.shape[1] != b.value.shape[0]:
        raise ShapeError("matmul", a.value.shape, b.value.shape)
    out = Tensor(a.value @ b.value, op="matmul", parents=(a, b))

    def _bw(g):
        _accum(a, g @ b.value.T)
        _accum(b, a.value.T @ g)

    out._backward = _bw
    return out


def relu(x: Tensor) -> Tensor:
    out = Tensor(np.maximum(x.value, 0.0), op="relu", parents=(x,))
    mask = (x.value > 0.0).astype(np.float64)
    out._backward = lambda g: _accum(x, g * mask)
    return out


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    out = Tensor(np.where(x.value > 0.0, x.value, slope * x.value), op="leaky_relu", parents=(x,))
    mask = np.where(x.value > 0.0, 1.0, slope)
    out._backward = lambda g: _accum(x, g * mask)
    return out


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.value)
    out = Tensor(y, op="tanh", parents=(x,))
    out._backward = lambda g: _accum(x, g * (1.0 - y * y))
    return out


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.value)
    out = Tensor(y, op="exp", parents=(x,))
    out._backward = lambda g: _accum(x, g * y)
    return out


def log(x: Tensor) -> Tensor:
    out = Tensor(np.log(x.value), op="log", parents=(x,))
    out._backward = lambda g: _accum(x, g / x.value)
    return out


def square(x: Tensor) -> Tensor:
    out = Tensor(x.value * x.value, op="square", parents=(x,))
    out._backward = lambda g: _accum(x, g * 2.0 * x.value)
    return out


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.value)
    out = Tensor(y, op="sqrt", parents=(x,))
    out._backward = lambda g: _accum(x, g * 0.5 / y)
    return out


def tsum(x: Tensor, axis: int | None = None) -> Tensor:
    out = Tensor(x.value.sum(axis=axis), op="sum", parents=(x,))

    def _bw(g):
        if axis is None:
            _accum(x, np.full_like(x.value, float(g)))
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.value.shape).copy())

    out._backward = _bw
    return out


def tmean(x: Tensor, axis: int | None = None) -> Tensor:
    n = x.value.size if axis is None else x.value.shape[axis]
    out = Tensor(x.value.mean(axis=axis), op="mean", parents=(x,))

    def _bw(g):
        if axis is None:
            _accum(x, np.full_like(x.value, float(g) / n))
        else:
            _accum(x, np.broadcast_to(np.expand_dims(g, axis), x.value.shape) / n)

    out._backward = _bw
    return out


def maximum(x: Tensor, c: float) -> Tensor:
    """Elementwise max with a constant. Subgradient is 0 on the inactive
    branch, including exactly at the kink (hinge losses hit it often)."""
    out = Tensor(np.maximum(x.value, c), op="max_const", parents=(x,))
    mask = (x.value > c).astype(np.float64)
    out._backward = lambda g: _accum(x, g * mask)
    return out


def concat(parts: list[Tensor], axis: int = 0) -> Tensor:
    ndim = parts[0].value.ndim
    for p in parts[1:]:
        if p.value.ndim != ndim:
            raise ShapeError("concat", parts[0].value.shape, p.value.shape)
    out = Tensor(np.concatenate([p.value for p in parts], axis=axis), op="concat", parents=tuple(parts))
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def _bw(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accum(p, g[tuple(idx)])

    out._backward = _bw
    return out


def narrow(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice along one axis."""
    ax = axis % x.value.ndim
    idx = [slice(None)] * x.value.ndim
    idx[ax] = slice(start, stop)
    out = Tensor(x.value[tuple(idx)], op="slice", parents=(x,))

    def _bw(g):
        full = np.zeros_like(x.value)
        full[tuple(idx)] = g
        _accum(x, full)

    out._backward = _bw
    return out


def take_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """Row gather; duplicate rows accumulate gradient."""
    rows = np.asarray(rows, dtype=np.intp)
    out = Tensor(x.value[rows], op="take_rows", parents=(x,))

    def _bw(g):
        full = np.zeros_like(x.value)
        np.add.at(full, rows, g)
        _accum(x, full)

    out._backward = _bw
    return out


def softmax(x: Tensor) -> Tensor:
    """Numerically stable softmax over the last axis."""
    z = x.value - x.value.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, op="softmax", parents=(x,))

    def _bw(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        _accum(x, y * (g - dot))

    out._backward = _bw
    return out


# ---------------------------------------------------------------------------
# Parameters and Adam


def parameter(value, name: str) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


@dataclass
class AdamState:
    """Bias-corrected Adam. Moments live per-parameter, keyed by name."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: AdamState) -> AdamState:
    """One Adam update in place on `params`, reading each tensor's .grad.

    Parameters with no gradient this step are left untouched (their moments
    are still advanced by a zero gradient, matching the usual convention of
    treating an absent gradient as zero).
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.value)
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"gradient of parameter {name!r}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.value)
            v = np.zeros_like(p.value)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p.value = p.value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


def zero_grads(params: dict[str, Tensor]):
    for p in params.values():
        p.grad = None


# ---------------------------------------------------------------------------
# Verification harness


def grad_check(fn, params: dict[str, Tensor], h: float = 1e-5) -> float:
    """Max relative error between autodiff and central finite differences.

    `fn(params)` must return a scalar Tensor and be evaluable repeatedly.
    Relative error uses max(|a|, |b|, 1) as the scale so that near-zero
    gradients are compared absolutely.
    """
    zero_grads(params)
    root = fn(params)
    root.backward()
    analytic = {k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value)) for k, p in params.items()}

    worst = 0.0
    for name, p in params.items():
        flat = p.value.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = fn(params).item()
            flat[i] = orig - h
            down = fn(params).item()
            flat[i] = orig
            fd = (up - down) / (2.0 * h)
            ad = analytic[name].reshape(-1)[i]
            err = abs(ad - fd) / max(abs(ad), abs(fd), 1.0)
            worst = max(worst, err)
    return worst


# ---------------------------------------------------------------------------
# Checkpoint serialization: flat JSON {name: {shape, data}}


def save_params(params: dict[str, Tensor], path):
    blob = {
        name: {"shape": list(p.value.shape), "data": p.value.reshape(-1).tolist()}
        for name, p in params.items()
    }
    with open(path, "w") as f:
        json.dump(blob, f)


def load_params(path) -> dict[str, Tensor]:
    with open(path) as f:
        blob = json.load(f)
    out = {}
    for name, rec in blob.items():
        arr = np.asarray(rec["data"], dtype=np.float64).reshape(rec["shape"])
        out[name] = parameter(arr, name)
    return out
