"""Truncated multivariate Taylor jets.

A :class:`Jet` carries a value and a chosen set of partial derivatives with
respect to the input coordinates.  Coefficients are raw partials (not divided
by factorials) and may be batched: every coefficient broadcasts against a
leading point axis.  Coefficients can be plain arrays or :class:`~rlpinns.tape.Var`
handles, so parameter gradients flow through jet arithmetic unchanged.

A coefficient stored as ``None`` is a structural zero; it is skipped in
products, which keeps seeded coordinates and first layers cheap.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from math import comb
from typing import Iterable, Sequence

import numpy as np

from . import tape as T

__all__ = [
    "DerivativeBasis",
    "Jet",
    "JetError",
    "seed_coordinates",
    "jet_arith",
    "jet_elem",
    "constant_jet",
    "JET_FUNCTIONS",
]

MAX_ORDER = 4

JET_FUNCTIONS = ("tanh", "exp", "sin", "cos", "cosh_reciprocal", "cosh", "reciprocal", "sqrt", "log")


class JetError(ValueError):
    pass


MultiIndex = tuple[int, ...]


def _sub_indices(alpha: MultiIndex) -> Iterable[MultiIndex]:
    return itertools.product(*(range(a + 1) for a in alpha))


@dataclass(frozen=True)
class DerivativeBasis:
    """Downward-closed set of multi-indices tracked by a jet.

    Use :meth:`closure` to build one from the partials a residual needs; the
    constructor validates but does not complete the set.
    """

    dimension: int
    multi_indices: tuple[MultiIndex, ...]

    def __post_init__(self):
        if self.dimension < 1:
            raise JetError("dimension must be positive")
        seen = set()
        for alpha in self.multi_indices:
            if len(alpha) != self.dimension:
                raise JetError(f"multi-index {alpha} has wrong dimension")
            if any(a < 0 for a in alpha) or sum(alpha) > MAX_ORDER:
                raise JetError(f"multi-index {alpha} out of range (orders 0..{MAX_ORDER})")
            if alpha in seen:
                raise JetError(f"duplicate multi-index {alpha}")
            seen.add(alpha)
        if self.multi_indices[0] != (0,) * self.dimension:
            raise JetError("the zero multi-index must come first")
        for alpha in self.multi_indices:
            for gamma in _sub_indices(alpha):
                if gamma not in seen:
                    raise JetError(f"basis not closed: {alpha} needs {gamma}")

    @classmethod
    def closure(cls, dimension: int, targets: Iterable[Sequence[int]] = ()) -> "DerivativeBasis":
        """Smallest valid basis containing ``targets``."""
        need = {(0,) * dimension}
        for t in targets:
            t = tuple(int(v) for v in t)
            if len(t) != dimension:
                raise JetError(f"target {t} does not match dimension {dimension}")
            need.update(_sub_indices(t))
        ordered = sorted(need, key=lambda a: (sum(a), tuple(-v for v in a)))
        return cls(dimension, tuple(ordered))

    @classmethod
    def full(cls, dimension: int, order: int) -> "DerivativeBasis":
        targets = [a for a in itertools.product(range(order + 1), repeat=dimension) if sum(a) <= order]
        return cls.closure(dimension, targets)

    @classmethod
    def axis_orders(cls, dimension: int, order: int, mixed: Iterable[Sequence[int]] = ()) -> "DerivativeBasis":
        """Pure partials up to ``order`` along every axis plus any ``mixed`` targets."""
        targets = []
        for i in range(dimension):
            e = [0] * dimension
            e[i] = order
            targets.append(e)
        return cls.closure(dimension, [*targets, *mixed])

    def __len__(self):
        return len(self.multi_indices)

    def __contains__(self, alpha):
        return tuple(alpha) in self._position

    @cached_property
    def _position(self) -> dict[MultiIndex, int]:
        return {a: i for i, a in enumerate(self.multi_indices)}

    def index(self, alpha: Sequence[int]) -> int:
        try:
            return self._position[tuple(alpha)]
        except KeyError:
            raise JetError(f"multi-index {tuple(alpha)} is not tracked") from None

    def unit(self, axis: int, order: int = 1) -> MultiIndex:
        e = [0] * self.dimension
        e[axis] = order
        return tuple(e)

    @cached_property
    def order(self) -> int:
        return max(sum(a) for a in self.multi_indices)

    @cached_property
    def orders(self) -> tuple[int, ...]:
        return tuple(sum(a) for a in self.multi_indices)

    @cached_property
    def leibniz_terms(self) -> tuple[tuple[tuple[int, int, int], ...], ...]:
        """Per index: (i_gamma, i_rest, binomial) for the general product rule."""
        out = []
        for alpha in self.multi_indices:
            terms = []
            for gamma in _sub_indices(alpha):
                rest = tuple(a - g for a, g in zip(alpha, gamma))
                c = 1
                for a, g in zip(alpha, gamma):
                    c *= comb(a, g)
                terms.append((self._position[gamma], self._position[rest], c))
            out.append(tuple(terms))
        return tuple(out)

    @cached_property
    def chain_terms(self) -> tuple[tuple[tuple[int, int, int], ...], ...]:
        """Per index alpha = beta + e_i: (i_gamma, i_{beta-gamma+e_i}, C(beta, gamma)).

        ``d^alpha f(g) = sum_{gamma <= beta} C(beta, gamma) d^gamma f'(g) d^{beta-gamma+e_i} g``.
        """
        out = [()]
        for alpha in self.multi_indices[1:]:
            i = next(k for k, a in enumerate(alpha) if a)
            beta = list(alpha)
            beta[i] -= 1
            terms = []
            for gamma in _sub_indices(beta):
                rest = [b - g for b, g in zip(beta, gamma)]
                rest[i] += 1
                c = 1
                for b, g in zip(beta, gamma):
                    c *= comb(b, g)
                terms.append((self._position[gamma], self._position[tuple(rest)], c))
            out.append(tuple(terms))
        return tuple(out)


def _is_zero(c) -> bool:
    return c is None


def _madd(acc, term):
    return term if acc is None else T.add(acc, term)


def _scaled_product(p, q, c):
    term = T.mul(p, q)
    return term if c == 1 else T.mul(term, float(c))


@dataclass(frozen=True, eq=False)
class Jet:
    """Value plus tracked partial derivatives at one point (or a batch)."""

    basis: DerivativeBasis
    coeffs: tuple

    def __post_init__(self):
        if len(self.coeffs) != len(self.basis):
            raise JetError("coefficient count does not match basis size")

    @property
    def value(self):
        return self.coeffs[0] if self.coeffs[0] is not None else 0.0

    def __getitem__(self, alpha):
        c = self.coeffs[self.basis.index(alpha)]
        return 0.0 if c is None else c

    def coefficient(self, alpha):
        return self[alpha]

    def numeric(self) -> np.ndarray:
        """All coefficients as an array of shape (len(basis), *batch)."""
        vals = [np.asarray(T.value_of(0.0 if c is None else c)) for c in self.coeffs]
        shape = np.broadcast_shapes(*(v.shape for v in vals))
        return np.stack([np.broadcast_to(v, shape) for v in vals])

    def _check(self, other: "Jet"):
        if other.basis != self.basis:
            raise JetError("basis mismatch")

    def __add__(self, other):
        return jet_arith("add", self, other)

    def __radd__(self, other):
        return jet_arith("add", self, other)

    def __sub__(self, other):
        return jet_arith("sub", self, other)

    def __rsub__(self, other):
        return jet_arith("add", jet_arith("scale", self, -1.0), other)

    def __mul__(self, other):
        return jet_arith("mul", self, other)

    def __rmul__(self, other):
        return jet_arith("mul", self, other)

    def __truediv__(self, other):
        return jet_arith("div", self, other)

    def __neg__(self):
        return jet_arith("scale", self, -1.0)


def constant_jet(basis: DerivativeBasis, value) -> Jet:
    return Jet(basis, (value,) + (None,) * (len(basis) - 1))


def seed_coordinates(point, basis: DerivativeBasis) -> list[Jet]:
    """Coordinate jets at ``point`` (shape (d,) or a batch (n, d))."""
    point = np.asarray(point)
    if point.dtype.kind != "f":
        point = point.astype(float)
    if point.shape[-1:] != (basis.dimension,):
        raise JetError(f"point dimension {point.shape[-1:]} != basis dimension {basis.dimension}")
    jets = []
    for i in range(basis.dimension):
        coeffs = [None] * len(basis)
        coeffs[0] = point[..., i]
        e = basis.unit(i)
        if e in basis:
            coeffs[basis.index(e)] = point.dtype.type(1.0)
        jets.append(Jet(basis, tuple(coeffs)))
    return jets


def jet_arith(op: str, a: Jet, b) -> Jet:
    """Jet arithmetic: add, sub, mul, div, scale.

    ``b`` may be a Jet on the same basis or a real (scalar or per-point array)
    treated as constant in the coordinates.
    """
    if op == "scale":
        if isinstance(b, Jet):
            raise JetError("scale takes a real factor")
        return Jet(a.basis, tuple(None if c is None else T.mul(c, b) for c in a.coeffs))
    if not isinstance(b, Jet):
        if op == "add":
            return Jet(a.basis, (_madd(a.coeffs[0], b),) + a.coeffs[1:])
        if op == "sub":
            return Jet(a.basis, (_madd(a.coeffs[0], T.neg(b)),) + a.coeffs[1:])
        if op == "mul":
            return jet_arith("scale", a, b)
        if op == "div":
            if np.any(T.value_of(b) == 0):
                raise ZeroDivisionError("division of jet by zero")
            return jet_arith("scale", a, T.div(1.0, b))
        raise JetError(f"unknown jet operation {op!r}")
    a._check(b)
    if op == "add":
        return Jet(a.basis, tuple(_add_opt(x, y) for x, y in zip(a.coeffs, b.coeffs)))
    if op == "sub":
        return Jet(a.basis, tuple(_add_opt(x, None if y is None else T.neg(y)) for x, y in zip(a.coeffs, b.coeffs)))
    if op == "mul":
        out = []
        for terms in a.basis.leibniz_terms:
            acc = None
            for ig, ir, c in terms:
                p, q = a.coeffs[ig], b.coeffs[ir]
                if p is None or q is None:
                    continue
                acc = _madd(acc, _scaled_product(p, q, c))
            out.append(acc)
        return Jet(a.basis, tuple(out))
    if op == "div":
        if np.any(T.value_of(b.value) == 0):
            raise ZeroDivisionError("division by jet with zero value")
        return jet_arith("mul", a, jet_elem("reciprocal", b))
    raise JetError(f"unknown jet operation {op!r}")


def _add_opt(x, y):
    if x is None:
        return y
    if y is None:
        return x
    return T.add(x, y)


def _compose(a: Jet, fn: str) -> Jet:
    basis = a.basis
    K = basis.order
    orders = basis.orders
    value = a.coeffs[0] if a.coeffs[0] is not None else np.zeros(())
    derivs = T.elementary_series(fn, value, K)
    chain = basis.chain_terms
    prev: list = []
    for k in range(K, -1, -1):
        cur = [None] * len(basis)
        cur[0] = derivs[k]
        for idx in range(1, len(basis)):
            if orders[idx] > K - k:
                continue
            acc = None
            for ig, ir, c in chain[idx]:
                p, q = prev[ig], a.coeffs[ir]
                if p is None or q is None:
                    continue
                acc = _madd(acc, _scaled_product(p, q, c))
            cur[idx] = acc
        prev = cur
    return Jet(basis, tuple(prev))


def jet_elem(fn: str, a: Jet) -> Jet:
    """Apply an elementary function to a jet (multivariate Faa di Bruno)."""
    if fn == "cosh_reciprocal":
        return _compose(_compose(a, "cosh"), "reciprocal")
    if fn == "reciprocal" and np.any(T.value_of(a.value) == 0):
        raise ZeroDivisionError("reciprocal of zero-valued jet")
    if fn not in T.ELEMENTARY:
        raise JetError(f"unknown jet function {fn!r}")
    return _compose(a, fn)
