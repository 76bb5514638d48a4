"""Residual-driven samplers side by side on a frozen surrogate.

The surrogate is a sharp bump at (0.5, 0.5).  RAR keeps the top candidates,
RAD draws from a residual-weighted mass, and the DQN agent walks the domain
and keeps states where the surrogate changes by at least epsilon per step.
"""

import json
from pathlib import Path

import numpy as np

from rlpinns.samplers import RLConfig, rad_density, rad_draw, rar_select, rl_run


def bump(x):
    return np.exp(-500 * np.sum((np.asarray(x) - 0.5) ** 2, axis=-1))


def near(points, radius=0.15):
    return np.mean(np.linalg.norm(points - 0.5, axis=1) <= radius)


rng = np.random.default_rng(0)
cand = rng.uniform(-1, 1, size=(2000, 2))
score = bump(cand)

rar = cand[rar_select(score, 100)]
rad = cand[rad_draw(rad_density(score), 100, rng)]
print(f"RAR: 100 points, {near(rar):.0%} within 0.15 of the peak")
print(f"RAD: 100 points, {near(rad):.0%} within 0.15 of the peak")

cfg = RLConfig(**json.loads((Path(__file__).parent / "configs" / "bump_rl.json").read_text()))
res = rl_run(np.array([-1.0, -1.0]), np.array([1.0, 1.0]), bump, cfg, seed=0)
d = res.diagnostics
print(f"RL : {len(res.points)} points, {near(res.points):.0%} within 0.15 of the peak, "
      f"{d['episodes']} episodes, early stop={d['terminated_early']}")
