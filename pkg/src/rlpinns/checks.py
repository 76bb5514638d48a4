"""Finite-difference cross-checks for the jet engine."""

from __future__ import annotations

import itertools
import math

import numpy as np

from .jets import DerivativeBasis, seed_coordinates
from .network import MLPSpec, ParamVector, forward_jet, forward_scalar, init_params

__all__ = ["DERIV_TOLERANCES", "FD_STEPS", "stencil_weights", "fd_partial", "random_tanh_net", "check_jet_derivatives"]

DERIV_TOLERANCES = {1: 1e-5, 2: 1e-4, 3: 1e-3, 4: 1e-2}
FD_STEPS = {1: 1e-2, 2: 2e-2, 3: 2e-2, 4: 3e-2}


def stencil_weights(order: int, half_width: int = 4) -> np.ndarray:
    """Central-difference weights on offsets -p..p for the ``order``-th derivative."""
    offsets = np.arange(-half_width, half_width + 1, dtype=float)
    n = offsets.size
    vander = offsets[None, :] ** np.arange(n)[:, None]
    rhs = np.zeros(n)
    rhs[order] = math.factorial(order)
    return np.linalg.solve(vander, rhs)


def fd_partial(f, point, alpha, h: float, half_width: int = 4) -> float:
    """Tensor-product central difference of ``f`` for multi-index ``alpha``.

    ``f`` maps an (n, d) array to n values.
    """
    point = np.asarray(point, dtype=float)
    axes = [i for i, a in enumerate(alpha) if a]
    if not axes:
        return float(f(point[None, :])[0])
    offsets = np.arange(-half_width, half_width + 1)
    weights = [stencil_weights(alpha[i], half_width) for i in axes]
    combos = list(itertools.product(range(offsets.size), repeat=len(axes)))
    pts = np.repeat(point[None, :], len(combos), axis=0)
    coef = np.ones(len(combos))
    for row, combo in enumerate(combos):
        for k, (axis, j) in enumerate(zip(axes, combo)):
            pts[row, axis] += offsets[j] * h
            coef[row] *= weights[k][j]
    return float(coef @ f(pts) / h ** sum(alpha))


def random_tanh_net(rng) -> tuple[MLPSpec, ParamVector]:
    """Small tanh net: 1-3 hidden layers of width <= 32, random biases."""
    dim = int(rng.integers(1, 4))
    hidden = tuple(int(w) for w in rng.integers(1, 33, size=int(rng.integers(1, 4))))
    spec = MLPSpec(dim, hidden)
    params = init_params(spec, int(rng.integers(2**31)))
    values = params.values * rng.uniform(0.5, 1.5)
    for lay in spec.layout:
        values[lay.bias_offset:lay.bias_offset + lay.cols] = rng.uniform(-0.5, 0.5, size=lay.cols)
    return spec, params.with_values(values)


def check_jet_derivatives(n_nets: int = 200, seed: int = 0, max_order: int = 4) -> dict[int, tuple[float, float]]:
    """Worst relative error per derivative order over random nets and points.

    Returns ``{order: (worst, tolerance)}``.
    """
    rng = np.random.default_rng(seed)
    worst = {k: 0.0 for k in range(1, max_order + 1)}
    for _ in range(n_nets):
        spec, params = random_tanh_net(rng)
        basis = DerivativeBasis.full(spec.input_dim, max_order)
        x = rng.uniform(-1, 1, size=spec.input_dim)
        jet = forward_jet(spec, params, seed_coordinates(x, basis))

        def f(p):
            return forward_scalar(spec, params, p)

        for alpha in basis.multi_indices[1:]:
            k = sum(alpha)
            exact = float(np.asarray(jet[alpha]))
            approx = fd_partial(f, x, alpha, FD_STEPS[k])
            err = abs(exact - approx) / max(abs(approx), 1e-6)
            worst[k] = max(worst[k], err)
    return {k: (w, DERIV_TOLERANCES[k]) for k, w in worst.items()}
