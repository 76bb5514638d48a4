"""Physics loss assembly, the full-batch training loop and the error metric."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tape as T
from .jets import seed_coordinates
from .network import MLPSpec, ParamVector, forward_jet, forward_scalar, param_gradient
from .optimizers import LbfgsState, adam_init, adam_step, lbfgs_step
from .problems import BoundaryBatch, ProblemSpec, apply_operator, operator_basis

__all__ = [
    "LossWeights",
    "TrainConfig",
    "TrainReport",
    "TrainingError",
    "residual_loss",
    "boundary_loss",
    "composite_loss",
    "residual_magnitudes",
    "train",
    "relative_l2",
    "build_test_set",
    "evaluate_error",
    "write_loss_history",
    "DIVERGENCE_THRESHOLD",
]

DIVERGENCE_THRESHOLD = 1e8


class TrainingError(RuntimeError):
    """Training aborted; carries the last finite parameters and the partial report."""

    def __init__(self, message, params=None, report=None):
        super().__init__(message)
        self.params = params
        self.report = report


@dataclass(frozen=True)
class LossWeights:
    lambda_r: float = 1.0
    lambda_b: float = 1.0

    def __post_init__(self):
        if self.lambda_r < 0 or self.lambda_b < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.lambda_r == 0 and self.lambda_b == 0:
            raise ValueError("loss weights cannot both be zero")


@dataclass
class TrainConfig:
    """``plan`` is a list of (optimizer, steps) phases, e.g. [("adam", 5000)]."""

    plan: Sequence[tuple[str, int]]
    lr: float = 1e-3
    weights: LossWeights = field(default_factory=LossWeights)
    seed: int = 0
    dtype: str = "float64"
    history_every: int = 100

    @property
    def iterations(self) -> int:
        return sum(n for _, n in self.plan)


@dataclass
class TrainReport:
    iterations: int = 0
    final_loss: float = float("nan")
    history: list[tuple[int, float, float, float]] = field(default_factory=list)
    wall_time: float = 0.0
    lbfgs_fallbacks: int = 0


def _check_points(spec: ProblemSpec, points: np.ndarray):
    if len(points) == 0:
        raise ValueError("empty point set")
    if not np.all(spec.contains(points)):
        raise ValueError("collocation point outside the domain")


def _residual_term(spec, net, theta, jets, points):
    u = forward_jet(net, theta, jets)
    r = spec.residual(u, points)
    return T.mean(T.mul(r, r))


def _boundary_term(spec, net, theta, prepared):
    total = None
    for jets, op, targets in prepared:
        u = forward_jet(net, theta, jets)
        diff = T.sub(apply_operator(op, u, spec.time_axis), targets)
        term = T.mean(T.mul(diff, diff))
        total = term if total is None else T.add(total, term)
    return total


def _prepare_boundary(spec, batches, dtype):
    if not batches:
        raise ValueError("no boundary batches")
    prepared = []
    for b in batches:
        if len(b.points) == 0:
            raise ValueError(f"empty boundary batch for operator {b.operator!r}")
        pts = np.asarray(b.points, dtype=dtype)
        basis = operator_basis(b.operator, spec.dimension, spec.time_axis)
        prepared.append((seed_coordinates(pts, basis), b.operator, np.asarray(b.targets, dtype=dtype)))
    return prepared


def _finite(x, what):
    v = float(T.value_of(x))
    if not np.isfinite(v):
        raise ValueError(f"non-finite {what}")
    return v


def residual_loss(spec: ProblemSpec, net: MLPSpec, params, points) -> float:
    """Mean squared PDE residual over the collocation points."""
    points = np.asarray(points, dtype=float)
    _check_points(spec, points)
    jets = seed_coordinates(points, spec.basis)
    return _finite(_residual_term(spec, net, getattr(params, "values", params), jets, points), "residual")


def boundary_loss(spec: ProblemSpec, net: MLPSpec, params, batches: Sequence[BoundaryBatch]) -> float:
    """Sum over boundary terms of the mean squared operator mismatch."""
    prepared = _prepare_boundary(spec, batches, float)
    return _finite(_boundary_term(spec, net, getattr(params, "values", params), prepared), "boundary loss")


def composite_loss(lr_val, lb_val, weights: LossWeights = LossWeights()):
    return T.add(T.mul(lr_val, weights.lambda_r), T.mul(lb_val, weights.lambda_b))


def residual_magnitudes(spec: ProblemSpec, net: MLPSpec, params, points, chunk: int = 4096) -> np.ndarray:
    """|residual| at each point (no tape, chunked)."""
    points = np.asarray(points, dtype=float)
    theta = getattr(params, "values", params)
    out = []
    for i in range(0, len(points), chunk):
        p = points[i:i + chunk]
        u = forward_jet(net, theta, seed_coordinates(p, spec.basis))
        out.append(np.abs(np.asarray(spec.residual(u, p), dtype=float)))
    return np.concatenate(out) if out else np.zeros(0)


class _Objective:
    """Composite loss and its parameter gradient on a fixed point set."""

    def __init__(self, spec, net, points, batches, weights, dtype):
        self.spec, self.net, self.weights = spec, net, weights
        self.dtype = np.dtype(dtype)
        self.points = np.asarray(points, dtype=self.dtype)
        _check_points(spec, self.points)
        self.jets = seed_coordinates(self.points, spec.basis)
        self.boundary = _prepare_boundary(spec, batches, self.dtype)

    def parts(self, theta):
        lr = _residual_term(self.spec, self.net, theta, self.jets, self.points)
        lb = _boundary_term(self.spec, self.net, theta, self.boundary)
        return lr, lb

    def value_and_grad(self, params: np.ndarray):
        cache = {}

        def loss_fn(theta):
            lr, lb = self.parts(theta)
            cache["lr"], cache["lb"] = float(T.value_of(lr)), float(T.value_of(lb))
            return composite_loss(lr, lb, self.weights)

        loss, grad = param_gradient(self.net, params.astype(self.dtype), loss_fn)
        return loss, grad.astype(float), cache["lr"], cache["lb"]

    def value(self, params: np.ndarray):
        lr, lb = self.parts(params.astype(self.dtype))
        lr, lb = float(T.value_of(lr)), float(T.value_of(lb))
        return float(composite_loss(lr, lb, self.weights)), lr, lb


def train(
    spec: ProblemSpec,
    net: MLPSpec,
    params: ParamVector,
    points,
    batches: Sequence[BoundaryBatch],
    config: TrainConfig,
) -> tuple[ParamVector, TrainReport]:
    """Full-batch training following ``config.plan``.

    Every iteration is one optimizer step over all collocation and boundary
    points.  Aborts with :class:`TrainingError` on a non-finite or divergent
    loss, keeping the last finite parameters.
    """
    if config.iterations <= 0:
        raise ValueError("iterations must be positive")
    obj = _Objective(spec, net, points, batches, config.weights, config.dtype)
    report = TrainReport()
    theta = np.array(params.values, dtype=float)
    start = time.perf_counter()
    it = 0

    def guard(loss, lr, lb):
        if not np.isfinite(loss) or loss > DIVERGENCE_THRESHOLD:
            report.wall_time = time.perf_counter() - start
            raise TrainingError(
                f"loss diverged at iteration {it}: {loss!r} (L_r={lr!r}, L_b={lb!r})",
                params=params.with_values(theta), report=report,
            )

    for kind, steps in config.plan:
        if kind == "adam":
            state = adam_init(theta.size, lr=config.lr)
            for _ in range(steps):
                loss, grad, lr, lb = obj.value_and_grad(theta)
                guard(loss, lr, lb)
                if it % config.history_every == 0:
                    report.history.append((it, lr, lb, loss))
                theta, state = adam_step(state, theta, grad)
                it += 1
        elif kind == "lbfgs":
            state = LbfgsState()
            last = {}

            def evaluate(x):
                loss, grad, lr, lb = obj.value_and_grad(x)
                last.update(lr=lr, lb=lb)
                return loss, grad

            for _ in range(steps):
                prev = theta
                theta, state = lbfgs_step(state, theta, evaluate)
                guard(state.loss, last.get("lr"), last.get("lb"))
                if it % config.history_every == 0:
                    report.history.append((it, last.get("lr", np.nan), last.get("lb", np.nan), state.loss))
                it += 1
                if np.array_equal(prev, theta) and not np.any(state._g):
                    break
            report.lbfgs_fallbacks += state.fallbacks
        else:
            raise ValueError(f"unknown optimizer {kind!r}")

    loss, lr, lb = obj.value(theta)
    guard(loss, lr, lb)
    report.history.append((it, lr, lb, loss))
    report.iterations = it
    report.final_loss = loss
    report.wall_time = time.perf_counter() - start
    return params.with_values(theta), report


def relative_l2(predicted, exact) -> float:
    p = np.asarray(predicted, dtype=float).ravel()
    e = np.asarray(exact, dtype=float).ravel()
    if p.size == 0 or p.size != e.size:
        raise ValueError("predicted and exact must be nonempty and of equal length")
    denom = np.linalg.norm(e)
    if denom == 0:
        raise ValueError("exact solution has zero norm")
    return float(np.linalg.norm(p - e) / denom)


def build_test_set(spec: ProblemSpec, grid: int = 201, n_random: int = 10_000, seed: int = 12345):
    """Evaluation points and exact/reference values.

    Two-coordinate problems use a ``grid x grid`` tensor grid over the box;
    higher dimensions use ``n_random`` seeded uniform points.
    """
    if spec.dimension == 2:
        axes = [np.linspace(lo, hi, grid) for lo, hi in zip(spec.lower, spec.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=-1)
    else:
        points = np.random.default_rng(seed).uniform(spec.lower, spec.upper, size=(n_random, spec.dimension))
    return points, np.asarray(spec.exact_u(points), dtype=float)


def evaluate_error(spec: ProblemSpec, net: MLPSpec, params, test_set=None) -> float:
    points, exact = test_set if test_set is not None else build_test_set(spec)
    return relative_l2(forward_scalar(net, params, points), exact)


def write_loss_history(report: TrainReport, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "L_r", "L_b", "composite"])
        for row in report.history:
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])
    tmp.replace(path)
    return path
