"""Collocation-point selection: UNIFORM, RAR, RAD and the DQN-driven sampler."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tape as T
from .network import MLPSpec, ParamVector, forward, forward_scalar, init_params, param_gradient
from .optimizers import AdamState, adam_init, adam_step
from .problems import BoundaryBatch, ProblemSpec
from .training import TrainConfig, TrainReport, residual_magnitudes, train

__all__ = [
    "SamplingError",
    "SamplerResult",
    "Transition",
    "ReplayBuffer",
    "RLConfig",
    "RoundsConfig",
    "uniform_sample",
    "rar_select",
    "rad_density",
    "rad_draw",
    "rar_run",
    "rad_run",
    "rl_epsilon",
    "rl_step",
    "compute_reward",
    "episode_ratio",
    "update_success_counter",
    "termination_episode",
    "dqn_update",
    "rl_run",
    "write_point_cloud",
]


class SamplingError(RuntimeError):
    pass


@dataclass
class SamplerResult:
    points: np.ndarray
    sampling_time: float
    scores: np.ndarray | None = None  # delta_u (RL) or |residual| (RAR/RAD)
    training_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)
    params: ParamVector | None = None
    reports: list[TrainReport] = field(default_factory=list)

    def __len__(self):
        return len(self.points)


# --- UNIFORM ----------------------------------------------------------------

def uniform_sample(lower, upper, count: int, seed) -> SamplerResult:
    """``count`` i.i.d. uniform points in the box [lower, upper]."""
    if count <= 0:
        raise ValueError("count must be positive")
    start = time.perf_counter()
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    pts = rng.uniform(lower, upper, size=(count, lower.size))
    return SamplerResult(pts, time.perf_counter() - start)


# --- RAR / RAD ----------------------------------------------------------------

def rar_select(residuals, m: int) -> np.ndarray:
    """Indices of the ``m`` largest residuals, ties broken by lowest index."""
    r = np.asarray(residuals, dtype=float)
    if m > r.size:
        raise ValueError(f"cannot select {m} of {r.size} candidates")
    if m < 0:
        raise ValueError("m must be nonnegative")
    return np.argsort(-r, kind="stable")[:m]


def rad_density(residuals) -> np.ndarray:
    """Normalised RAD mass: p_i = r_i / mean(r) + 1, divided by its sum."""
    r = np.asarray(residuals, dtype=float)
    if r.size == 0:
        raise ValueError("empty residual list")
    if not np.all(np.isfinite(r)) or np.any(r < 0):
        raise ValueError("residual magnitudes must be finite and nonnegative")
    mean = r.mean()
    if mean == 0:
        return np.full(r.size, 1.0 / r.size)
    p = r / mean + 1.0
    return p / p.sum()


def rad_draw(probabilities, m: int, rng) -> np.ndarray:
    """Draw ``m`` distinct indices according to ``probabilities``."""
    p = np.asarray(probabilities, dtype=float)
    return rng.choice(p.size, size=m, replace=False, p=p)


@dataclass
class RoundsConfig:
    t_max: int
    s0: int
    s: int
    train: TrainConfig


def _rounds(kind, spec, net, params, points, batches, config: RoundsConfig, seed):
    if config.t_max <= 0:
        raise ValueError("t_max must be positive")
    if config.s > config.s0:
        raise ValueError("cannot add more points per round than there are candidates")
    rng = np.random.default_rng(seed)
    sampling = training = 0.0
    added, scores, reports = [], [], []
    pts = np.asarray(points, dtype=float)
    for _ in range(config.t_max):
        start = time.perf_counter()
        cand = rng.uniform(spec.lower, spec.upper, size=(config.s0, spec.dimension))
        res = residual_magnitudes(spec, net, params, cand)
        if kind == "rar":
            idx = rar_select(res, config.s)
        else:
            idx = rad_draw(rad_density(res), config.s, rng)
        sampling += time.perf_counter() - start
        added.append(cand[idx])
        scores.append(res[idx])
        pts = np.concatenate([pts, cand[idx]])
        params, rep = train(spec, net, params, pts, batches, config.train)
        training += rep.wall_time
        reports.append(rep)
    return SamplerResult(
        np.concatenate(added), sampling, np.concatenate(scores), training,
        {"rounds": config.t_max, "per_round": config.s}, params, reports,
    )


def rar_run(spec, net, params, points, batches, config: RoundsConfig, seed=0) -> SamplerResult:
    """Residual-based refinement: top-S of S0 candidates per round, retrain after each."""
    return _rounds("rar", spec, net, params, points, batches, config, seed)


def rad_run(spec, net, params, points, batches, config: RoundsConfig, seed=0) -> SamplerResult:
    """Residual-based distribution: S draws from the RAD mass per round, retrain after each."""
    return _rounds("rad", spec, net, params, points, batches, config, seed)


# --- RL sampler -----------------------------------------------------------

@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    delta_u: float


class ReplayBuffer:
    """Fixed-capacity FIFO ring of transitions."""

    def __init__(self, capacity: int, dimension: int):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, dimension))
        self.next_states = np.zeros((capacity, dimension))
        self.actions = np.zeros(capacity, dtype=int)
        self.rewards = np.zeros(capacity)
        self.delta_u = np.zeros(capacity)
        self.cursor = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, t: Transition):
        i = self.cursor
        self.states[i] = t.state
        self.next_states[i] = t.next_state
        self.actions[i] = t.action
        self.rewards[i] = t.reward
        self.delta_u[i] = t.delta_u
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _order(self) -> np.ndarray:
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def transitions(self) -> list[Transition]:
        """Stored transitions, oldest first."""
        return [
            Transition(self.states[i].copy(), int(self.actions[i]), float(self.rewards[i]),
                       self.next_states[i].copy(), float(self.delta_u[i]))
            for i in self._order()
        ]

    def sample(self, batch: int, rng) -> np.ndarray:
        """Indices of a uniform mini-batch drawn with replacement."""
        if self.size == 0:
            raise SamplingError("replay buffer is empty")
        return rng.integers(0, self.size, size=batch)


@dataclass
class RLConfig:
    epsilon: float
    action_step: float | Sequence[float]
    init_low: Sequence[float]
    init_high: Sequence[float]
    episodes_max: int = 100
    steps_per_episode: int = 200
    buffer_capacity: int = 1000
    gamma: float = 0.95
    sync_every: int = 5
    patience: int = 5
    success_ratio: float = 0.5
    dqn_batch: int = 64
    q_lr: float = 1e-3
    q_hidden: tuple[int, ...] = (128, 64)

    def __post_init__(self):
        for name in ("epsilon", "episodes_max", "steps_per_episode", "buffer_capacity",
                     "sync_every", "patience", "dqn_batch", "q_lr"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if np.any(np.asarray(self.action_step) <= 0):
            raise ValueError("action_step must be positive")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")


def rl_epsilon(n: int) -> float:
    """Exploration probability 0.5 / n for episode n >= 1."""
    if n < 1:
        raise ValueError("episode index starts at 1")
    return min(1.0, 0.5 / n)


def rl_step(state, action: int, lower, upper, step) -> np.ndarray:
    """Move along one axis by +/- step and clamp to the box.

    Action ``2*i`` is +step along axis i, ``2*i + 1`` is -step.
    """
    state = np.asarray(state, dtype=float)
    d = state.size
    if not 0 <= action < 2 * d:
        raise ValueError(f"invalid action {action} for {d} dimensions")
    axis, sign = divmod(action, 2)
    step = np.broadcast_to(np.asarray(step, dtype=float), (d,))
    nxt = state.copy()
    nxt[axis] += -step[axis] if sign else step[axis]
    return np.clip(nxt, lower, upper)


def compute_reward(u_prev, u_next, epsilon: float):
    """(reward, delta_u): reward is delta_u when delta_u >= epsilon, else 0."""
    delta = np.abs(np.asarray(u_next, dtype=float) - np.asarray(u_prev, dtype=float))
    reward = np.where(delta >= epsilon, delta, 0.0)
    if reward.ndim == 0:
        return float(reward), float(delta)
    return reward, delta


def episode_ratio(delta_us, epsilon: float) -> float:
    d = np.asarray(delta_us, dtype=float)
    if d.size == 0:
        raise ValueError("empty episode")
    return float(np.count_nonzero(d >= epsilon)) / d.size


def update_success_counter(counter: int, ratio: float, threshold: float = 0.5) -> int:
    return counter + 1 if ratio >= threshold else 0


def termination_episode(ratios: Sequence[float], patience: int = 5, threshold: float = 0.5) -> int | None:
    """1-based episode after which the consecutive-success rule stops, or None."""
    counter = 0
    for n, r in enumerate(ratios, start=1):
        counter = update_success_counter(counter, r, threshold)
        if counter >= patience:
            return n
    return None


def dqn_update(
    qspec: MLPSpec,
    q_params: np.ndarray,
    target_params: np.ndarray,
    adam: AdamState,
    buffer: ReplayBuffer,
    batch: int,
    gamma: float,
    rng,
) -> tuple[np.ndarray, AdamState, float]:
    """One Adam step on the mean squared Bellman error of a replay mini-batch."""
    idx = buffer.sample(batch, rng)
    s, a = buffer.states[idx], buffer.actions[idx]
    r, s2 = buffer.rewards[idx], buffer.next_states[idx]
    q_next = np.asarray(forward(qspec, target_params, s2))
    y = r + gamma * q_next.max(axis=1)
    rows = np.arange(len(idx))

    def loss_fn(theta):
        q = forward(qspec, theta, s)
        diff = T.sub(y, T.take(q, (rows, a)))
        return T.mean(T.mul(diff, diff))

    loss, grad = param_gradient(qspec, q_params, loss_fn)
    new, adam = adam_step(adam, q_params, grad)
    return new, adam, loss


def _greedy(qspec, params, state) -> int:
    return int(np.argmax(forward(qspec, params, state[None, :])[0]))


def rl_run(
    lower,
    upper,
    surrogate: Callable[[np.ndarray], np.ndarray],
    config: RLConfig,
    seed: int = 0,
) -> SamplerResult:
    """Single-round DQN sampling over the box with a frozen surrogate.

    ``surrogate`` maps an (n, d) array of points to n values; it is only
    evaluated, never trained.  Returns the distinct states of buffered
    transitions whose variation reached ``config.epsilon``.
    """
    start = time.perf_counter()
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    d = lower.size
    rng = np.random.default_rng(seed)
    qspec = MLPSpec(d, tuple(config.q_hidden), 2 * d, "relu")
    q = init_params(qspec, int(rng.integers(2**31))).values
    target = q.copy()
    adam = adam_init(q.size, lr=config.q_lr)
    buffer = ReplayBuffer(config.buffer_capacity, d)
    init_low = np.broadcast_to(np.asarray(config.init_low, dtype=float), (d,))
    init_high = np.broadcast_to(np.asarray(config.init_high, dtype=float), (d,))
    n_actions = 2 * d

    counter = 0
    ratios, losses = [], []
    episodes = 0
    for n in range(1, config.episodes_max + 1):
        episodes = n
        p = rl_epsilon(n)
        x = rng.uniform(init_low, init_high)
        states = [x]
        actions = []
        for _ in range(config.steps_per_episode):
            if rng.random() < p:
                act = int(rng.integers(n_actions))
            else:
                act = _greedy(qspec, q, x)
            x = rl_step(x, act, lower, upper, config.action_step)
            states.append(x)
            actions.append(act)
        states = np.asarray(states)
        u = np.asarray(surrogate(states), dtype=float).ravel()
        rewards, delta = compute_reward(u[:-1], u[1:], config.epsilon)
        for t in range(config.steps_per_episode):
            buffer.add(Transition(states[t], actions[t], float(rewards[t]), states[t + 1], float(delta[t])))
        ratio = episode_ratio(delta, config.epsilon)
        ratios.append(ratio)
        counter = update_success_counter(counter, ratio, config.success_ratio)
        q, adam, loss = dqn_update(qspec, q, target, adam, buffer, config.dqn_batch, config.gamma, rng)
        losses.append(loss)
        if n % config.sync_every == 0:
            target = q.copy()
        if counter >= config.patience:
            break

    order = buffer._order()
    keep = order[buffer.delta_u[order] >= config.epsilon]
    pts, first = np.unique(buffer.states[keep], axis=0, return_index=True)
    first_sorted = np.sort(first)
    pts = buffer.states[keep][first_sorted]
    scores = buffer.delta_u[keep][first_sorted]
    elapsed = time.perf_counter() - start
    if len(pts) == 0:
        raise SamplingError(
            f"no transition reached delta_u >= {config.epsilon} after {episodes} episodes; "
            "lower the variation threshold epsilon"
        )
    diagnostics = {
        "episodes": episodes,
        "terminated_early": counter >= config.patience,
        "ratios": ratios,
        "dqn_losses": losses,
        "buffer_size": len(buffer),
    }
    return SamplerResult(pts, elapsed, scores, 0.0, diagnostics)


def write_point_cloud(path, points, scores=None, names=None, score_name="score") -> Path:
    """CSV with one row per point: coordinates then score (blank if absent)."""
    points = np.asarray(points, dtype=float)
    names = names or [f"x{i}" for i in range(points.shape[1])]
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, score_name])
        for i, p in enumerate(points):
            s = "" if scores is None else repr(float(scores[i]))
            w.writerow([*(repr(float(c)) for c in p), s])
    tmp.replace(path)
    return path
