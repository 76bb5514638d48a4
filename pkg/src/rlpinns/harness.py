"""Experiment orchestration: per-case defaults, the three-phase pipeline, CSV output."""

from __future__ import annotations

import csv
import ctypes
import dataclasses
import json
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .network import PINN_HIDDEN, QNET_HIDDEN, MLPSpec, ParamVector, forward_scalar, init_params
from .problems import ProblemSpec, make_problem, sample_boundary
from .samplers import (
    RLConfig,
    RoundsConfig,
    SamplerResult,
    rad_run,
    rar_run,
    rl_run,
    uniform_sample,
    write_point_cloud,
)
from .training import (
    LossWeights,
    TrainConfig,
    TrainReport,
    build_test_set,
    evaluate_error,
    train,
    write_loss_history,
)

__all__ = [
    "CASES",
    "SAMPLERS",
    "CASE_ALIASES",
    "RESULT_COLUMNS",
    "ConfigError",
    "RunConfig",
    "RunRecord",
    "default_config",
    "load_config",
    "run_pipeline",
    "run_sweep",
    "emit_results",
    "read_results",
    "compare",
    "format_summary",
    "tune_allocator",
]

SAMPLERS = ("uniform", "rar", "rad", "rl")
RESULT_COLUMNS = (
    "case", "sampler", "seed", "points_added",
    "sampling_time_s", "training_time_s", "rel_l2", "episodes_used",
)
CASE_ALIASES = {"high-order": "biharmonic", "highdim": "high-dimension", "high-dim": "high-dimension"}

# Fixed offsets from the root seed, one per independent random stream.
SEED_INIT, SEED_PRETRAIN_POINTS, SEED_BOUNDARY, SEED_SAMPLER, SEED_TRAIN = 0, 1, 2, 3, 4


class ConfigError(ValueError):
    pass


def _adam(n):
    return [["adam", n]]


def _adam_lbfgs(n):
    return [["adam", n], ["lbfgs", n]]


# Per-case defaults from the published hyperparameter tables.
CASES: dict[str, dict[str, Any]] = {
    "single-peak": dict(
        lr=1e-4, n_r0=5000, pretrain_iters=5000, t_max=5, s0=1000, s=200, n_b=400,
        round_plan=_adam(5000), final_plan=_adam(25000),
        rl=dict(epsilon=0.005, action_step=0.1, init_low=[-0.1, -0.1], init_high=[0.1, 0.1],
                episodes_max=100, steps_per_episode=200, buffer_capacity=1000),
    ),
    "dual-peak": dict(
        lr=1e-4, n_r0=5000, pretrain_iters=5000, t_max=5, s0=2000, s=400, n_b=400,
        round_plan=_adam(5000), final_plan=_adam(25000),
        rl=dict(epsilon=0.01, action_step=0.1, init_low=[-0.1, -0.1], init_high=[0.1, 0.1],
                episodes_max=100, steps_per_episode=400, buffer_capacity=2000),
    ),
    "burgers": dict(
        lr=1e-3, n_r0=5000, pretrain_iters=5000, t_max=5, s0=1000, s=200, n_b=400,
        round_plan=_adam_lbfgs(5000), final_plan=_adam_lbfgs(25000),
        rl=dict(epsilon=0.1, action_step=0.1, init_low=[-0.1, 0.0], init_high=[0.1, 0.1],
                episodes_max=100, steps_per_episode=200, buffer_capacity=1000),
    ),
    "wave": dict(
        lr=1e-3, n_r0=10000, pretrain_iters=10000, t_max=5, s0=2000, s=400, n_b=400,
        round_plan=_adam(5000), final_plan=_adam(25000),
        rl=dict(epsilon=0.05, action_step=0.2, init_low=[-0.5, 0.0], init_high=[0.5, 0.5],
                episodes_max=100, steps_per_episode=400, buffer_capacity=2000),
    ),
    "high-dimension": dict(
        lr=1e-3, n_r0=10000, pretrain_iters=10000, t_max=5, s0=5000, s=1000, n_b=1000,
        round_plan=_adam(5000), final_plan=_adam(25000),
        rl=dict(epsilon=0.0001, action_step=0.1, init_low=[0.4] * 10, init_high=[0.6] * 10,
                episodes_max=100, steps_per_episode=1000, buffer_capacity=5000),
    ),
    "biharmonic": dict(
        lr=5e-5, n_r0=2000, pretrain_iters=5000, t_max=5, s0=1000, s=200, n_b=400,
        round_plan=_adam(5000), final_plan=_adam(25000),
        rl=dict(epsilon=0.05, action_step=0.1, init_low=[0.4, 0.4], init_high=[0.6, 0.6],
                episodes_max=100, steps_per_episode=200, buffer_capacity=1000),
    ),
}


@dataclass
class RunConfig:
    """Everything one (case, sampler, seed) run needs.

    ``round_plan`` is the optimizer plan of one baseline round; UNIFORM trains
    for ``t_max`` repetitions of it.  ``final_plan`` applies to RL only.
    """

    case: str
    sampler: str = "rl"
    seed: int = 0
    lr: float = 1e-3
    n_r0: int = 5000
    pretrain_iters: int = 5000
    t_max: int = 5
    s0: int = 1000
    s: int = 200
    n_b: int = 400
    round_plan: list = field(default_factory=lambda: _adam(5000))
    final_plan: list = field(default_factory=lambda: _adam(25000))
    rl: dict = field(default_factory=dict)
    lambda_r: float = 1.0
    lambda_b: float = 1.0
    hidden: list = field(default_factory=lambda: list(PINN_HIDDEN))
    dtype: str = "float64"
    test_grid: int = 201
    test_random: int = 10_000
    history_every: int = 100
    out_dir: str | None = None

    def validate(self) -> "RunConfig":
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; valid: {', '.join(CASES)}")
        if self.sampler not in SAMPLERS:
            raise ConfigError(f"unknown sampler {self.sampler!r}; valid: {', '.join(SAMPLERS)}")
        for name in ("n_r0", "pretrain_iters", "t_max", "s0", "s", "n_b", "test_grid", "test_random", "history_every"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v <= 0:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if self.s > self.s0:
            raise ConfigError("s cannot exceed s0")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError("dtype must be float32 or float64")
        if not self.hidden or any(int(h) <= 0 for h in self.hidden):
            raise ConfigError("hidden must list positive layer widths")
        for name in ("round_plan", "final_plan"):
            plan = getattr(self, name)
            if not plan:
                raise ConfigError(f"{name} is empty")
            for phase in plan:
                if len(phase) != 2 or phase[0] not in ("adam", "lbfgs") or int(phase[1]) <= 0:
                    raise ConfigError(f"bad {name} phase {phase!r}")
        try:
            LossWeights(self.lambda_r, self.lambda_b)
            self.rl_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def rl_config(self) -> RLConfig:
        return RLConfig(**{"q_hidden": QNET_HIDDEN, **self.rl})

    def net(self, spec: ProblemSpec) -> MLPSpec:
        return MLPSpec(spec.dimension, tuple(self.hidden))

    def train_config(self, plan, seed_offset=0) -> TrainConfig:
        return TrainConfig(
            [(k, int(n)) for k, n in plan], lr=self.lr,
            weights=LossWeights(self.lambda_r, self.lambda_b),
            seed=self.seed + SEED_TRAIN + seed_offset, dtype=self.dtype,
            history_every=self.history_every,
        )

    @property
    def tag(self) -> str:
        return f"{self.case}_{self.sampler}_{self.seed}"


@dataclass
class RunRecord:
    case: str
    sampler: str
    seed: int
    points_added: int
    sampling_time_s: float
    training_time_s: float
    rel_l2: float
    episodes_used: int | None = None
    points: np.ndarray | None = field(default=None, repr=False)
    scores: np.ndarray | None = field(default=None, repr=False)
    reports: list = field(default_factory=list, repr=False)

    def row(self) -> list:
        return [
            self.case, self.sampler, self.seed, self.points_added,
            f"{self.sampling_time_s:.6f}", f"{self.training_time_s:.6f}",
            repr(float(self.rel_l2)), "" if self.episodes_used is None else self.episodes_used,
        ]


def _canonical_case(case: str) -> str:
    return CASE_ALIASES.get(case, case)


def default_config(case: str, **overrides) -> RunConfig:
    case = _canonical_case(case)
    if case not in CASES:
        raise ConfigError(f"unknown case {case!r}; valid: {', '.join(CASES)}")
    base = json.loads(json.dumps(CASES[case]))
    return _merge(RunConfig(case=case, **base), overrides).validate()


def _merge(cfg: RunConfig, values: dict) -> RunConfig:
    names = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values = dict(values)
    if "rl" in values:
        values["rl"] = {**cfg.rl, **values["rl"]}
    return dataclasses.replace(cfg, **values)


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Case table defaults, then the JSON file, then ``overrides``.

    ``None`` values in ``overrides`` are ignored so CLI flags can pass through.
    """
    file_values: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                file_values = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        if not isinstance(file_values, dict):
            raise ConfigError("config file must contain a JSON object")
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    case = overrides.get("case", file_values.get("case"))
    if case is None:
        raise ConfigError("no case given")
    case = _canonical_case(case)
    file_values = {k: v for k, v in file_values.items() if k != "case"}
    overrides = {k: v for k, v in overrides.items() if k != "case"}
    cfg = default_config(case)
    return _merge(_merge(cfg, file_values), overrides).validate()


def tune_allocator() -> bool:
    """Keep freed heap memory mapped (glibc only).

    Large numpy temporaries otherwise go through mmap/munmap on every
    iteration, which costs about a quarter of the training time here.
    """
    try:
        libc = ctypes.CDLL("libc.so.6")
        libc.mallopt(-1, 1 << 30)  # M_TRIM_THRESHOLD
        libc.mallopt(-3, 1 << 30)  # M_MMAP_THRESHOLD
        libc.mallopt(-2, 256 << 20)  # M_TOP_PAD
        return True
    except (OSError, AttributeError):
        return False


@dataclass
class _Pretrained:
    spec: ProblemSpec
    net: MLPSpec
    params: ParamVector
    points: np.ndarray
    batches: list
    report: TrainReport


def _pretrain_key(cfg: RunConfig):
    return (cfg.case, cfg.seed, cfg.lr, cfg.n_r0, cfg.pretrain_iters, cfg.n_b, tuple(cfg.hidden),
            cfg.dtype, cfg.lambda_r, cfg.lambda_b)


def pretrain(cfg: RunConfig) -> _Pretrained:
    """Phase 1: train from scratch on N_r0 uniform points."""
    spec = make_problem(cfg.case)
    net = cfg.net(spec)
    params = init_params(net, cfg.seed + SEED_INIT)
    points = uniform_sample(spec.lower, spec.upper, cfg.n_r0, cfg.seed + SEED_PRETRAIN_POINTS).points
    batches = sample_boundary(spec, cfg.n_b, cfg.seed + SEED_BOUNDARY)
    params, report = train(spec, net, params, points, batches,
                           cfg.train_config([("adam", cfg.pretrain_iters)], seed_offset=100))
    return _Pretrained(spec, net, params, points, batches, report)


def _failure_marker(cfg: RunConfig, exc: BaseException, partial: dict):
    if cfg.out_dir is None:
        return
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {"status": "failed", "tag": cfg.tag, "error": f"{type(exc).__name__}: {exc}", **partial}
    tmp = out / f"failed_{cfg.tag}.json.tmp"
    tmp.write_text(json.dumps(payload, indent=2, default=float))
    tmp.replace(out / f"failed_{cfg.tag}.json")


def run_pipeline(cfg: RunConfig, pretrained: _Pretrained | None = None, test_set=None) -> RunRecord:
    """Pretrain, sample with ``cfg.sampler``, train, evaluate.

    ``pretrained`` lets several samplers share one deterministic phase 1;
    its wall time is still charged to every record.
    """
    cfg.validate()
    partial: dict = {"phase": "pretrain"}
    try:
        pre = pretrained or pretrain(cfg)
        spec, net = pre.spec, pre.net
        training_time = pre.report.wall_time
        reports = [pre.report]
        sampler_seed = cfg.seed + SEED_SAMPLER
        episodes = None
        partial.update(phase="sampling", training_time_s=training_time)

        if cfg.sampler == "rl":
            frozen = pre.params.copy()
            result = rl_run(spec.lower, spec.upper, lambda x: forward_scalar(net, frozen, x),
                            cfg.rl_config(), seed=sampler_seed)
            episodes = result.diagnostics["episodes"]
            final_plan = cfg.final_plan
        elif cfg.sampler == "uniform":
            result = uniform_sample(spec.lower, spec.upper, cfg.t_max * cfg.s, sampler_seed)
            final_plan = [list(p) for _ in range(cfg.t_max) for p in cfg.round_plan]
        else:
            rounds = RoundsConfig(cfg.t_max, cfg.s0, cfg.s, cfg.train_config(cfg.round_plan, seed_offset=200))
            run = rar_run if cfg.sampler == "rar" else rad_run
            result = run(spec, net, pre.params, pre.points, pre.batches, rounds, seed=sampler_seed)
            final_plan = None
        partial.update(phase="training", sampling_time_s=result.sampling_time,
                       points_added=len(result.points))

        if final_plan is None:
            params = result.params
            training_time += result.training_time
            reports += result.reports
        else:
            pts = np.concatenate([pre.points, result.points])
            params, rep = train(spec, net, pre.params, pts, pre.batches,
                                cfg.train_config(final_plan, seed_offset=300))
            training_time += rep.wall_time
            reports.append(rep)

        if test_set is None:
            test_set = build_test_set(spec, cfg.test_grid, cfg.test_random, seed=12345)
        err = evaluate_error(spec, net, params, test_set)
    except Exception as exc:
        _failure_marker(cfg, exc, partial)
        raise
    return RunRecord(cfg.case, cfg.sampler, cfg.seed, len(result.points), result.sampling_time,
                     training_time, err, episodes, result.points, result.scores, reports)


def run_sweep(base: RunConfig, samplers: Sequence[str], seeds: Sequence[int], log=None) -> list[RunRecord]:
    """All (sampler, seed) pairs; phase 1 is computed once per seed."""
    records = []
    test_set = None
    for seed in seeds:
        pre = None
        for sampler in samplers:
            cfg = dataclasses.replace(base, sampler=sampler, seed=int(seed)).validate()
            if pre is None:
                pre = pretrain(cfg)
            if test_set is None:
                test_set = build_test_set(pre.spec, cfg.test_grid, cfg.test_random, seed=12345)
            rec = run_pipeline(cfg, pre, test_set)
            records.append(rec)
            if log:
                log(f"{rec.case} {rec.sampler} seed={rec.seed} rel_l2={rec.rel_l2:.4g} "
                    f"points={rec.points_added} sampling={rec.sampling_time_s:.2f}s "
                    f"training={rec.training_time_s:.1f}s")
    return records


def _sort_key(r: RunRecord):
    return (r.case, SAMPLERS.index(r.sampler) if r.sampler in SAMPLERS else len(SAMPLERS), r.sampler, r.seed)


def _atomic_csv(path: Path, header, rows):
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    tmp.replace(path)


def emit_results(records: Sequence[RunRecord], out_dir) -> list[Path]:
    """Write results.csv plus per-run point clouds and loss histories."""
    if not records:
        raise ValueError("no records to write")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=_sort_key)
    written = [out / "results.csv"]
    _atomic_csv(written[0], RESULT_COLUMNS, [r.row() for r in ordered])
    for r in ordered:
        tag = f"{r.case}_{r.sampler}_{r.seed}"
        if r.points is not None:
            spec = make_problem(r.case)
            score_name = {"rl": "delta_u", "rar": "residual", "rad": "residual"}.get(r.sampler, "score")
            scores = None if r.sampler == "uniform" else r.scores
            names = _coordinate_names(spec)
            written.append(write_point_cloud(out / f"points_{tag}.csv", r.points, scores, names, score_name))
        if r.reports:
            merged = TrainReport()
            offset = 0
            for rep in r.reports:
                merged.history += [(it + offset, *rest) for it, *rest in rep.history]
                offset += rep.iterations
            written.append(write_loss_history(merged, out / f"loss_{tag}.csv"))
    return written


def _coordinate_names(spec: ProblemSpec):
    if spec.time_axis is not None:
        return ["x", "t"]
    if spec.dimension == 2:
        return ["x", "y"]
    return [f"x{i + 1}" for i in range(spec.dimension)]


def read_results(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def compare(records: Sequence[RunRecord | dict]) -> dict[str, dict]:
    """Per-case median relative L2 per sampler and RL's improvement over each baseline.

    Improvement is ``(base - rl) / base``.
    """
    by_case: dict[str, dict[str, list[float]]] = {}
    for r in records:
        get = r.get if isinstance(r, dict) else lambda k: getattr(r, k)
        by_case.setdefault(get("case"), {}).setdefault(get("sampler"), []).append(float(get("rel_l2")))
    summary = {}
    for case, groups in by_case.items():
        if len(groups) < 2:
            raise ValueError(f"case {case!r} has only one sampler; nothing to compare")
        medians = {s: statistics.median(v) for s, v in groups.items()}
        ranking = sorted(medians, key=lambda s: (medians[s], s))
        improvement = {}
        if "rl" in medians:
            for s, m in medians.items():
                if s != "rl":
                    improvement[s] = (m - medians["rl"]) / m if m else 0.0
        summary[case] = {"median": medians, "ranking": ranking, "improvement": improvement,
                         "n": {s: len(v) for s, v in groups.items()}}
    return summary


def format_summary(summary: dict) -> str:
    lines = []
    for case, info in summary.items():
        lines.append(f"{case}:")
        for s in info["ranking"]:
            extra = ""
            if s in info["improvement"]:
                extra = f"  (rl better by {100 * info['improvement'][s]:.1f}%)"
            lines.append(f"  {s:<8} median rel_l2 {info['median'][s]:.4g}  n={info['n'][s]}{extra}")
    return "\n".join(lines)
