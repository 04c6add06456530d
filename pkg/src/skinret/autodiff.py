"""Reverse-mode automatic differentiation on numpy arrays.

A Tape records one training step's primitive operations in execution order;
``backward`` walks the record once in reverse and accumulates adjoints
additively, so replaying an identical tape is bit-deterministic. Variables
wrap float64 ndarrays. Operations called on tape-less Variables (or raw
arrays) just compute values without recording, which is how inference reuses
the exact same forward code as training.

Kink conventions: for ``maximum``/``clamp``/``relu``/``abs`` the gradient is
0 on the inactive side and 1 on the active side; at equality the identity
(variable) branch counts as active, except ``abs`` which uses subgradient 0
at the origin.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np


class TapeError(RuntimeError):
    """Variables from different tapes were mixed, or no tape was present."""


class ShapeError(ValueError):
    """An operation was applied to values of unsupported shape."""


class Tape:
    """Append-only record of primitive operations for one backward pass."""

    def __init__(self) -> None:
        self._nodes: list[tuple[Variable, tuple]] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def backward(self, loss: "Variable") -> "Gradients":
        """Reverse accumulation from a scalar loss over this tape."""
        if loss.tape is not self:
            raise TapeError("loss Variable does not belong to this tape")
        if loss.value.size != 1:
            raise ShapeError(f"loss must be scalar, got shape {loss.value.shape}")
        table: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
        for out, links in reversed(self._nodes):
            g = table.get(id(out))
            if g is None:
                continue
            for var, pull in links:
                contrib = pull(g)
                prev = table.get(id(var))
                table[id(var)] = contrib if prev is None else prev + contrib
        return Gradients(table)


class Gradients:
    """Gradient lookup produced by a backward pass; unreached Variables map to zero."""

    def __init__(self, table: dict[int, np.ndarray]) -> None:
        self._table = table

    def get(self, var: "Variable") -> np.ndarray:
        g = self._table.get(id(var))
        if g is None:
            return np.zeros_like(var.value)
        return np.reshape(g, var.value.shape)


class Variable:
    """A float64 array plus the tape (if any) it is recorded on."""

    __slots__ = ("value", "tape")

    def __init__(self, value, tape: Tape | None = None) -> None:
        self.value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(self.value)):
            raise ValueError("Variable holds non-finite values")
        self.tape = tape

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self) -> str:
        return f"Variable(shape={self.value.shape}, tape={'yes' if self.tape else 'no'})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)


def variable(tape: Tape | None, value) -> Variable:
    """Create a leaf Variable on `tape` (a constant when tape is None)."""
    return Variable(value, tape)


def constant(value) -> Variable:
    return Variable(value, None)


def wrap(x) -> Variable:
    return x if isinstance(x, Variable) else Variable(x)


def _merge_tape(inputs: Iterable[Variable]) -> Tape | None:
    tape = None
    for v in inputs:
        if v.tape is None:
            continue
        if tape is None:
            tape = v.tape
        elif tape is not v.tape:
            raise TapeError("cannot mix Variables from different tapes")
    return tape


def record(
    value: np.ndarray,
    inputs: Sequence[Variable],
    pullbacks: Sequence[Callable[[np.ndarray], np.ndarray]],
) -> Variable:
    """Create an op's output Variable and register its pullbacks.

    `pullbacks[i]` maps the output adjoint to input i's adjoint contribution.
    Recording is skipped when no input carries a tape. This is the extension
    point for fused operations (quaternion products, trilinear sampling).
    """
    tape = _merge_tape(inputs)
    out = Variable(value, tape)
    if tape is not None:
        links = tuple(
            (v, fn) for v, fn in zip(inputs, pullbacks) if v.tape is not None
        )
        tape._nodes.append((out, links))
    return out


def backward(loss: Variable) -> Gradients:
    """Gradients of a scalar loss for every Variable reachable on its tape."""
    if loss.tape is None:
        raise TapeError("loss is not attached to a tape")
    return loss.tape.backward(loss)


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum an adjoint over the axes numpy broadcasting introduced."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic

def add(a, b) -> Variable:
    a, b = wrap(a), wrap(b)
    return record(
        a.value + b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(g, b.value.shape),
        ),
    )


def sub(a, b) -> Variable:
    a, b = wrap(a), wrap(b)
    return record(
        a.value - b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g, a.value.shape),
            lambda g: _unbroadcast(-g, b.value.shape),
        ),
    )


def mul(a, b) -> Variable:
    a, b = wrap(a), wrap(b)
    return record(
        a.value * b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g * b.value, a.value.shape),
            lambda g: _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b) -> Variable:
    a, b = wrap(a), wrap(b)
    return record(
        a.value / b.value,
        (a, b),
        (
            lambda g: _unbroadcast(g / b.value, a.value.shape),
            lambda g: _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def neg(a) -> Variable:
    a = wrap(a)
    return record(-a.value, (a,), (lambda g: -g,))


def sqrt(a) -> Variable:
    a = wrap(a)
    out = np.sqrt(a.value)
    return record(out, (a,), (lambda g: g * (0.5 / out),))


def exp(a) -> Variable:
    a = wrap(a)
    out = np.exp(a.value)
    return record(out, (a,), (lambda g: g * out,))


def tanh(a) -> Variable:
    a = wrap(a)
    out = np.tanh(a.value)
    return record(out, (a,), (lambda g: g * (1.0 - out * out),))


def sigmoid(a) -> Variable:
    a = wrap(a)
    v = a.value
    out = np.where(v >= 0, 1.0 / (1.0 + np.exp(-np.abs(v))), np.exp(-np.abs(v)) / (1.0 + np.exp(-np.abs(v))))
    return record(out, (a,), (lambda g: g * out * (1.0 - out),))


def relu(a) -> Variable:
    a = wrap(a)
    mask = a.value >= 0.0
    return record(np.where(mask, a.value, 0.0), (a,), (lambda g: g * mask,))


def absolute(a) -> Variable:
    a = wrap(a)
    s = np.sign(a.value)
    return record(np.abs(a.value), (a,), (lambda g: g * s,))


def maximum(a, b) -> Variable:
    """Elementwise max; at equality the first argument takes the gradient."""
    a, b = wrap(a), wrap(b)
    take_a = a.value >= b.value
    return record(
        np.where(take_a, a.value, b.value),
        (a, b),
        (
            lambda g: _unbroadcast(g * take_a, a.value.shape),
            lambda g: _unbroadcast(g * ~take_a, b.value.shape),
        ),
    )


def clamp(a, lo: float, hi: float) -> Variable:
    """Clamp to [lo, hi]; gradient 1 inside the interval (inclusive), 0 outside."""
    a = wrap(a)
    inside = (a.value >= lo) & (a.value <= hi)
    return record(np.clip(a.value, lo, hi), (a,), (lambda g: g * inside,))


def atan2(y, x) -> Variable:
    y, x = wrap(y), wrap(x)
    denom = x.value * x.value + y.value * y.value
    return record(
        np.arctan2(y.value, x.value),
        (y, x),
        (
            lambda g: _unbroadcast(g * x.value / denom, y.value.shape),
            lambda g: _unbroadcast(-g * y.value / denom, x.value.shape),
        ),
    )


# ---------------------------------------------------------------------------
# reductions and shape ops

def sum(a, axis=None, keepdims: bool = False) -> Variable:  # noqa: A001 - numpy-style name
    a = wrap(a)
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def pull(g):
        if axis is None:
            return np.broadcast_to(g, a.value.shape).copy()
        gg = g if keepdims else np.expand_dims(g, axis)
        return np.broadcast_to(gg, a.value.shape).copy()

    return record(out, (a,), (pull,))


def mean(a, axis=None, keepdims: bool = False) -> Variable:
    a = wrap(a)
    count = a.value.size if axis is None else a.value.shape[axis]
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def matmul(a, b) -> Variable:
    """2-D @ 2-D or 2-D @ 1-D matrix product."""
    a, b = wrap(a), wrap(b)
    if a.value.ndim != 2 or b.value.ndim not in (1, 2):
        raise ShapeError(f"matmul supports (m,n)@(n,k) or (m,n)@(n,), got {a.value.shape} @ {b.value.shape}")
    out = a.value @ b.value
    if b.value.ndim == 2:
        pulls = (lambda g: g @ b.value.T, lambda g: a.value.T @ g)
    else:
        pulls = (lambda g: np.outer(g, b.value), lambda g: a.value.T @ g)
    return record(out, (a, b), pulls)


def getitem(a, key) -> Variable:
    a = wrap(a)
    out = a.value[key]

    def pull(g):
        buf = np.zeros_like(a.value)
        np.add.at(buf, key, g)
        return buf

    return record(np.array(out, copy=True), (a,), (pull,))


def reshape(a, shape) -> Variable:
    a = wrap(a)
    return record(a.value.reshape(shape), (a,), (lambda g: g.reshape(a.value.shape),))


def concat(parts: Sequence, axis: int = 0) -> Variable:
    parts = [wrap(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def make_pull(i):
        def pull(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            return g[tuple(sl)]

        return pull

    return record(
        np.concatenate([p.value for p in parts], axis=axis),
        tuple(parts),
        tuple(make_pull(i) for i in range(len(parts))),
    )


def stack(parts: Sequence, axis: int = 0) -> Variable:
    parts = [wrap(p) for p in parts]

    def make_pull(i):
        return lambda g: np.take(g, i, axis=axis)

    return record(
        np.stack([p.value for p in parts], axis=axis),
        tuple(parts),
        tuple(make_pull(i) for i in range(len(parts))),
    )


def softmax(a, axis: int = -1) -> Variable:
    a = wrap(a)
    shifted = a.value - np.max(a.value, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / np.sum(e, axis=axis, keepdims=True)

    def pull(g):
        dot = np.sum(g * out, axis=axis, keepdims=True)
        return (g - dot) * out

    return record(out, (a,), (pull,))


def detached_sign(a) -> np.ndarray:
    """Sign of the values, as a constant (no gradient flows through it)."""
    return np.sign(wrap(a).value)


# ---------------------------------------------------------------------------
# gradient checking

def gradcheck(
    f: Callable[..., Variable],
    args: Sequence[np.ndarray],
    eps: float = 1e-6,
    scale: float = 1.0,
) -> float:
    """Worst relative error between tape gradients and central differences.

    `f(tape, *variables)` must build and return a scalar Variable. The
    relative error per component is |ad - fd| / max(|ad|, |fd|, scale), so
    near-zero gradients are compared absolutely against `scale`.
    """
    args = [np.asarray(a, dtype=np.float64) for a in args]
    tape = Tape()
    leaves = [variable(tape, a) for a in args]
    out = f(tape, *leaves)
    grads = tape.backward(out)

    worst = 0.0
    for i, a in enumerate(args):
        g_ad = grads.get(leaves[i])
        g_fd = np.zeros_like(a)
        flat = g_fd.reshape(-1)
        for k in range(a.size):
            bump = np.zeros_like(a).reshape(-1)
            bump[k] = eps
            bump = bump.reshape(a.shape)
            hi = f(None, *[constant(args[j] + (bump if j == i else 0)) for j in range(len(args))])
            lo = f(None, *[constant(args[j] - (bump if j == i else 0)) for j in range(len(args))])
            flat[k] = (float(hi.value) - float(lo.value)) / (2.0 * eps)
        denom = np.maximum(np.maximum(np.abs(g_ad), np.abs(g_fd)), scale)
        err = np.max(np.abs(g_ad - g_fd) / denom) if a.size else 0.0
        worst = max(worst, float(err))
    return worst
