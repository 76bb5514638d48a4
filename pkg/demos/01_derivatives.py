"""Spatial derivatives of a network via truncated Taylor jets.

We build a small tanh net u(x, y), push a jet through it and read off the
Laplacian and a mixed fourth derivative, then compare with finite differences.
"""

import numpy as np

from rlpinns.checks import fd_partial
from rlpinns.jets import DerivativeBasis, seed_coordinates
from rlpinns.network import MLPSpec, forward_jet, forward_scalar, init_params

net = MLPSpec(2, (16, 16))
params = init_params(net, seed=0)
point = np.array([0.3, -0.2])

# A basis holds exactly the multi-indices we ask for (plus what Leibniz needs).
basis = DerivativeBasis.full(2, 4)
u = forward_jet(net, params, seed_coordinates(point, basis))


def f(p):
    return forward_scalar(net, params, p)


print(f"u(x)            = {float(u[(0, 0)]): .8f}")
for alpha, h in [((2, 0), 2e-2), ((0, 2), 2e-2), ((2, 2), 3e-2), ((1, 3), 3e-2)]:
    print(f"d^{alpha} u  jet = {float(u[alpha]): .8f}   finite diff = {fd_partial(f, point, alpha, h): .8f}")

lap = float(u[(2, 0)] + u[(0, 2)])
print(f"Laplacian        = {lap: .8f}")
