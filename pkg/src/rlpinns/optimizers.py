"""Parameter updaters: Adam and an Armijo-backtracking L-BFGS."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

__all__ = [
    "OptimizerError",
    "AdamState",
    "adam_init",
    "adam_step",
    "LbfgsState",
    "lbfgs_step",
]


class OptimizerError(ValueError):
    pass


@dataclass(frozen=True)
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps_stab: float = 1e-8
    lr: float = 1e-3


def adam_init(n_params: int, lr: float = 1e-3, beta1=0.9, beta2=0.999, eps_stab=1e-8, dtype=float) -> AdamState:
    return AdamState(np.zeros(n_params, dtype), np.zeros(n_params, dtype), 0, beta1, beta2, eps_stab, lr)


def adam_step(state: AdamState, params: np.ndarray, gradient: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Inputs are not modified."""
    g = np.asarray(gradient)
    if g.shape != np.shape(params) or g.shape != state.m.shape:
        raise OptimizerError(f"shape mismatch: params {np.shape(params)}, gradient {g.shape}, state {state.m.shape}")
    if not np.all(np.isfinite(g)):
        bad = int(np.count_nonzero(~np.isfinite(g)))
        raise OptimizerError(f"non-finite gradient ({bad} entries); step rejected")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.m + (1 - b1) * g
    v = b2 * state.v + (1 - b2) * g * g
    m_hat = m / (1 - b1**t)
    v_hat = v / (1 - b2**t)
    new = params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_stab)
    return new.astype(np.result_type(params), copy=False), replace(state, m=m, v=v, step_count=t)


@dataclass
class LbfgsState:
    """Curvature history and line-search controls.

    ``history`` holds (s, y) pairs with positive curvature ``s @ y``.
    ``fallbacks`` counts steps where the quasi-Newton direction failed the
    line search and a steepest-descent step was taken instead.
    """

    capacity: int = 10
    lr: float = 1.0
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_trials: int = 20
    history: deque = field(default_factory=deque)
    iterations: int = 0
    fallbacks: int = 0
    last_fallback: bool = False
    loss: float = float("nan")
    _x: np.ndarray | None = field(default=None, repr=False)
    _g: np.ndarray | None = field(default=None, repr=False)


def _two_loop(g: np.ndarray, history) -> np.ndarray:
    q = g.copy()
    alphas = []
    for s, y in reversed(history):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((a, rho))
    if history:
        s, y = history[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (a, rho) in zip(history, reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def _backtrack(fn, x, f0, g0, d, state):
    slope = g0 @ d
    alpha = state.lr
    for _ in range(state.max_trials):
        x_new = x + alpha * d
        f_new, g_new = fn(x_new)
        if np.isfinite(f_new) and f_new <= f0 + state.armijo_c * alpha * slope:
            return x_new, f_new, np.asarray(g_new, dtype=float)
        alpha *= state.backtrack
    return None


def lbfgs_step(
    state: LbfgsState,
    params: np.ndarray,
    evaluate: Callable[[np.ndarray], tuple[float, np.ndarray]],
) -> tuple[np.ndarray, LbfgsState]:
    """One L-BFGS iteration with an Armijo backtracking line search.

    ``evaluate(params) -> (loss, gradient)`` must be deterministic.  The state
    is updated in place and returned for convenience.
    """
    x = np.asarray(params, dtype=float)
    if state._x is not None and np.array_equal(state._x, x):
        f0, g0 = state.loss, state._g
    else:
        f0, g0 = evaluate(x)
        g0 = np.asarray(g0, dtype=float)
    if not np.isfinite(f0) or not np.all(np.isfinite(g0)):
        raise OptimizerError("non-finite loss or gradient at the current point")
    state.iterations += 1
    state.last_fallback = False
    if not np.any(g0):
        state.loss, state._x, state._g = float(f0), x, g0
        return x, state

    d = _two_loop(g0, state.history)
    if not state.history:
        d = d / max(1.0, float(np.linalg.norm(g0)))
    found = None
    if g0 @ d < 0:
        found = _backtrack(evaluate, x, f0, g0, d, state)
    if found is None:
        state.history.clear()
        state.last_fallback = True
        state.fallbacks += 1
        d = -g0 / max(1.0, float(np.linalg.norm(g0)))
        found = _backtrack(evaluate, x, f0, g0, d, state)
        if found is None:
            state.loss, state._x, state._g = float(f0), x, g0
            return x, state

    x_new, f_new, g_new = found
    s, y = x_new - x, g_new - g0
    if s @ y > 1e-12 * max(1.0, float(y @ y)):
        state.history.append((s, y))
        while len(state.history) > state.capacity:
            state.history.popleft()
    state.loss, state._x, state._g = float(f_new), x_new, g_new
    return x_new, state
