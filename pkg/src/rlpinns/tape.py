"""Reverse-mode accumulation over numpy arrays.

A :class:`Tape` records every operation applied to a :class:`Var`.  Nodes are
appended in evaluation order, so operand ids always precede the node that
uses them and the backward sweep is a plain reverse loop.

Operands that are not :class:`Var` (floats, ndarrays) are treated as
constants; an operation on constants only returns a plain ndarray and records
nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Tape",
    "Var",
    "TapeError",
    "tape_backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "elementary",
    "elementary_series",
    "relu",
    "total",
    "mean",
    "take",
    "reshape",
    "value_of",
    "ELEMENTARY",
]


class TapeError(ValueError):
    """Raised for malformed tape usage (bad node ids, foreign tapes)."""


@dataclass
class _Node:
    kind: str
    parents: tuple[int, ...]
    # one pullback per parent: upstream gradient -> parent gradient
    pullbacks: tuple[Callable[[np.ndarray], np.ndarray], ...]
    shape: tuple[int, ...]
    dtype: np.dtype


@dataclass
class Tape:
    """Append-only record of operations over parameter leaves."""

    nodes: list[_Node] = field(default_factory=list)
    leaf_ids: list[int] = field(default_factory=list)

    def parameter(self, values) -> "Var":
        """Register a parameter array as a leaf and return its handle."""
        arr = np.array(values)
        if arr.dtype.kind != "f":
            arr = arr.astype(float)
        var = self._push("leaf", (), (), arr)
        self.leaf_ids.append(var.node)
        return var

    def _push(self, kind, parents, pullbacks, value) -> "Var":
        value = np.asarray(value)
        self.nodes.append(_Node(kind, parents, pullbacks, value.shape, value.dtype))
        return Var(self, len(self.nodes) - 1, value)

    def backward(self, output: "Var | int", seed=None) -> np.ndarray:
        """Gradient of ``output`` w.r.t. every registered leaf, concatenated.

        ``output`` must be scalar unless an explicit ``seed`` cotangent is given.
        """
        out_id = output.node if isinstance(output, Var) else output
        if isinstance(output, Var) and output.tape is not self:
            raise TapeError("output belongs to a different tape")
        if not isinstance(out_id, (int, np.integer)) or not 0 <= out_id < len(self.nodes):
            raise TapeError(f"invalid node id {out_id!r}")
        node = self.nodes[out_id]
        if seed is None:
            if int(np.prod(node.shape)) != 1:
                raise TapeError("backward from a non-scalar node needs a seed")
            seed = np.ones(node.shape, dtype=node.dtype)
        grads: dict[int, np.ndarray] = {out_id: np.asarray(seed, dtype=node.dtype)}
        for nid in range(out_id, -1, -1):
            g = grads.pop(nid, None)
            if g is None:
                continue
            node = self.nodes[nid]
            if node.kind == "leaf":
                grads[nid] = g  # keep for collection below
                continue
            for pid, pull in zip(node.parents, node.pullbacks):
                contrib = pull(g)
                if pid in grads:
                    grads[pid] = grads[pid] + contrib
                else:
                    grads[pid] = contrib
        parts = []
        for lid in self.leaf_ids:
            shp = self.nodes[lid].shape
            g = grads.get(lid)
            parts.append(np.zeros(int(np.prod(shp)), self.nodes[lid].dtype) if g is None else np.ravel(g))
        return np.concatenate(parts) if parts else np.zeros(0)


def tape_backward(tape: Tape, output) -> np.ndarray:
    """Functional alias of :meth:`Tape.backward`."""
    return tape.backward(output)


class Var:
    """Handle to a recorded node: its tape, node id and forward value."""

    __slots__ = ("tape", "node", "value")
    __array_priority__ = 1000

    def __init__(self, tape: Tape, node: int, value: np.ndarray):
        self.tape = tape
        self.node = node
        self.value = value

    @property
    def shape(self):
        return self.value.shape

    def __repr__(self):
        return f"Var(node={self.node}, shape={self.value.shape})"

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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)


def value_of(x) -> np.ndarray:
    if isinstance(x, Var):
        return x.value
    if isinstance(x, np.ndarray) and x.dtype.kind == "f":
        return x
    if isinstance(x, (float, int)) and not isinstance(x, bool):
        return float(x)  # python scalars stay weakly typed
    return np.asarray(x, dtype=float)


def _tape_of(*xs) -> Tape | None:
    tape = None
    for x in xs:
        if isinstance(x, Var):
            if tape is None:
                tape = x.tape
            elif x.tape is not tape:
                raise TapeError("operands recorded on different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _record(kind, operands, value, pulls):
    """Push a node whose Var operands get the matching pullbacks."""
    tape = _tape_of(*operands)
    if tape is None:
        return value
    parents, pullbacks = [], []
    for x, pull in zip(operands, pulls):
        if isinstance(x, Var):
            parents.append(x.node)
            pullbacks.append(pull)
    return tape._push(kind, tuple(parents), tuple(pullbacks), value)


def add(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(
        "add", (a, b), av + bv,
        (lambda g: _unbroadcast(g, np.shape(av)), lambda g: _unbroadcast(g, np.shape(bv))),
    )


def sub(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(
        "sub", (a, b), av - bv,
        (lambda g: _unbroadcast(g, np.shape(av)), lambda g: _unbroadcast(-g, np.shape(bv))),
    )


def neg(a):
    return _record("neg", (a,), -value_of(a), (lambda g: -g,))


def mul(a, b):
    av, bv = value_of(a), value_of(b)
    return _record(
        "mul", (a, b), av * bv,
        (lambda g: _unbroadcast(g * bv, np.shape(av)), lambda g: _unbroadcast(g * av, np.shape(bv))),
    )


def div(a, b):
    av, bv = value_of(a), value_of(b)
    if np.any(bv == 0):
        raise ZeroDivisionError("division by zero value")
    out = av / bv
    return _record(
        "div", (a, b), out,
        (lambda g: _unbroadcast(g / bv, np.shape(av)),
         lambda g: _unbroadcast(-g * out / bv, np.shape(bv))),
    )


def matmul(a, b):
    """Matrix product for 1-D/2-D operands (vector @ matrix, matrix @ matrix)."""
    av, bv = value_of(a), value_of(b)
    out = av @ bv

    def pull_a(g):
        if bv.ndim == 1:
            return np.multiply.outer(g, bv) if av.ndim == 2 else g * bv
        return g @ bv.T

    def pull_b(g):
        if av.ndim == 1:
            return np.multiply.outer(av, g) if bv.ndim == 2 else g * av
        if bv.ndim == 1:
            return av.T @ g
        return av.T @ g

    return _record("matmul", (a, b), out, (pull_a, pull_b))


def relu(a):
    av = value_of(a)
    mask = av > 0
    return _record("relu", (a,), np.where(mask, av, 0.0), (lambda g: g * mask,))


def total(a, axis=None):
    av = value_of(a)

    def pull(g):
        if axis is None:
            return np.broadcast_to(g, np.shape(av)).copy()
        return np.broadcast_to(np.expand_dims(g, axis), np.shape(av)).copy()

    return _record("sum", (a,), av.sum(axis=axis), (pull,))


def mean(a, axis=None):
    av = value_of(a)
    n = np.size(av) if axis is None else np.shape(av)[axis]
    return mul(total(a, axis=axis), 1.0 / n)


def _is_basic(index) -> bool:
    parts = index if isinstance(index, tuple) else (index,)
    return all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis or p is None for p in parts)


def take(a, index):
    av = value_of(a)

    basic = _is_basic(index)

    def pull(g):
        out = np.zeros(av.shape, dtype=g.dtype)
        if basic:
            out[index] = g
        else:
            np.add.at(out, index, g)
        return out

    return _record("take", (a,), av[index], (pull,))


def reshape(a, shape):
    av = value_of(a)
    return _record("reshape", (a,), av.reshape(shape), (lambda g: g.reshape(np.shape(av)),))


# --- elementary functions and their derivatives of any order ---------------

def _tanh_coeffs(k: int) -> list[float]:
    # d/dz P(tanh z) = P'(t) (1 - t^2); coefficients lowest degree first
    p = np.polynomial.Polynomial([0.0, 1.0])
    one_minus_t2 = np.polynomial.Polynomial([1.0, 0.0, -1.0])
    for _ in range(k):
        p = p.deriv() * one_minus_t2
    return [float(c) for c in p.coef]


_TANH_COEFFS = [_tanh_coeffs(k) for k in range(8)]


def _horner(coeffs, t):
    out = coeffs[-1] * t + coeffs[-2] if len(coeffs) > 1 else np.full_like(t, coeffs[0])
    for c in reversed(coeffs[:-2]):
        out = out * t
        if c:
            out += c
    return out


def _tanh_all(z, n):
    t = np.tanh(z)
    return [t] + [_horner(_TANH_COEFFS[k], t) for k in range(1, n + 1)]


def _exp_all(z, n):
    e = np.exp(z)
    return [e] * (n + 1)


def _sin_all(z, n):
    s, c = np.sin(z), np.cos(z)
    cycle = (s, c, -s, -c)
    return [cycle[k % 4] for k in range(n + 1)]


def _cos_all(z, n):
    s, c = np.sin(z), np.cos(z)
    cycle = (c, -s, -c, s)
    return [cycle[k % 4] for k in range(n + 1)]


def _cosh_all(z, n):
    ch, sh = np.cosh(z), np.sinh(z)
    return [ch if k % 2 == 0 else sh for k in range(n + 1)]


def _reciprocal_all(z, n):
    inv = 1.0 / z
    out, p = [], inv
    for k in range(n + 1):
        out.append((-1.0) ** k * math.factorial(k) * p)
        p = p * inv
    return out


def _sqrt_all(z, n):
    r = np.sqrt(z)
    out, c, p = [], 1.0, r
    for j in range(n + 1):
        out.append(c * p)
        c *= 0.5 - j
        p = p / z
    return out


def _log_all(z, n):
    out = [np.log(z)]
    inv = 1.0 / z
    p = inv
    for k in range(1, n + 1):
        out.append((-1.0) ** (k - 1) * math.factorial(k - 1) * p)
        p = p * inv
    return out


# fn -> callable(z, n) returning [f(z), f'(z), ..., f^(n)(z)]
ELEMENTARY: dict[str, Callable[[np.ndarray, int], list]] = {
    "tanh": _tanh_all,
    "exp": _exp_all,
    "sin": _sin_all,
    "cos": _cos_all,
    "cosh": _cosh_all,
    "reciprocal": _reciprocal_all,
    "sqrt": _sqrt_all,
    "log": _log_all,
}


def elementary_series(fn: str, x, order: int) -> list:
    """``[f(x), f'(x), ..., f^(order)(x)]``, each recorded with its own pullback.

    The pullback of the k-th entry multiplies by the (k+1)-th derivative, so
    every entry stays differentiable in ``x``.
    """
    try:
        table = ELEMENTARY[fn]
    except KeyError:
        raise ValueError(f"unknown elementary function {fn!r}") from None
    xv = value_of(x)
    derivs = table(xv, order + 1)
    out = []
    for k in range(order + 1):
        nxt = derivs[k + 1]
        out.append(_record(f"{fn}^{k}", (x,), derivs[k], ((lambda g, nxt=nxt: g * nxt),)))
    return out


def elementary(fn: str, x, order: int = 0):
    """``fn`` differentiated ``order`` times, evaluated at ``x``."""
    return elementary_series(fn, x, order)[order]
