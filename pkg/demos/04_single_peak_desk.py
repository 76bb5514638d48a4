"""Uniform vs RL sampling on the single-peak problem at desk scale.

Both runs share one pretraining phase and then train on the same total
number of iterations.  Expect a few minutes per seed on one core.
Usage: python demos/04_single_peak_desk.py [seed]
"""

import dataclasses
import sys
from pathlib import Path

from rlpinns.harness import load_config, pretrain, run_pipeline, tune_allocator

tune_allocator()
seed = int(sys.argv[1]) if len(sys.argv) > 1 else 0
base = load_config(Path(__file__).parent / "configs" / "single_peak_desk.json", {"seed": seed})
pre = pretrain(base)
print(f"pretrained on {len(pre.points)} points in {pre.report.wall_time:.1f}s")
for sampler in ("uniform", "rl"):
    rec = run_pipeline(dataclasses.replace(base, sampler=sampler), pre)
    share = rec.sampling_time_s / (rec.sampling_time_s + rec.training_time_s)
    print(f"{sampler:8s} added={rec.points_added:4d} rel_l2={rec.rel_l2:.4g} "
          f"sampling={rec.sampling_time_s:.2f}s ({share:.2%}) training={rec.training_time_s:.0f}s")
