"""The six benchmark problems and their manufactured solutions.

For each case we evaluate the PDE residual of the exact solution at random
interior points (it should vanish to rounding level) and show the boundary
split.  The Burgers case uses a quadrature reference instead of a closed form.
"""

import numpy as np

from rlpinns.problems import PROBLEMS, burgers_reference, exact_residual, make_problem, sample_boundary

rng = np.random.default_rng(0)
for name in sorted(PROBLEMS):
    spec = make_problem(name)
    pts = rng.uniform(spec.lower, spec.upper, size=(100, spec.dimension))
    if spec.time_axis is not None:
        pts[:, spec.time_axis] = np.maximum(pts[:, spec.time_axis], 1e-3)
    worst = np.max(np.abs(exact_residual(spec, pts)))
    terms = [len(b.points) for b in sample_boundary(spec, 400, seed=0)]
    print(f"{name:15s} dim={spec.dimension:2d} max|residual(exact)|={worst:.1e} boundary points per batch={terms}")

x = np.linspace(-1, 1, 5)
for t in (0.0, 0.25, 1.0):
    print(f"burgers u(x, {t}) =", np.round(burgers_reference(x, np.full_like(x, t)), 5))
