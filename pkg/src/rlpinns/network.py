"""Fully connected networks: the PINN surrogate and the Q-network.

Parameters live in one flat vector.  Layer ``k`` stores a ``(fan_in, fan_out)``
weight block followed by its bias, so a forward pass computes ``h @ W + b``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tape as T
from .jets import Jet, JetError, jet_elem

__all__ = [
    "MLPSpec",
    "LayerLayout",
    "ParamVector",
    "init_params",
    "forward",
    "forward_scalar",
    "forward_jet",
    "param_gradient",
    "save_params",
    "load_params",
    "PINN_HIDDEN",
    "QNET_HIDDEN",
]

PINN_HIDDEN = (64, 128, 256, 512, 256, 128, 64)
QNET_HIDDEN = (128, 64)

SNAPSHOT_FORMAT = "rlpinns-params"
SNAPSHOT_VERSION = 1


@dataclass(frozen=True)
class LayerLayout:
    rows: int  # fan_in
    cols: int  # fan_out
    weight_offset: int
    bias_offset: int


@dataclass(frozen=True)
class MLPSpec:
    input_dim: int
    hidden_sizes: tuple[int, ...]
    output_dim: int = 1
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be positive")
        if not self.hidden_sizes or any(h < 1 for h in self.hidden_sizes):
            raise ValueError("hidden_sizes must be a nonempty list of positive integers")
        if self.activation not in ("tanh", "relu"):
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_sizes, self.output_dim)

    @property
    def layout(self) -> tuple[LayerLayout, ...]:
        out, offset = [], 0
        w = self.widths
        for fan_in, fan_out in zip(w[:-1], w[1:]):
            out.append(LayerLayout(fan_in, fan_out, offset, offset + fan_in * fan_out))
            offset += fan_in * fan_out + fan_out
        return tuple(out)

    @property
    def n_params(self) -> int:
        last = self.layout[-1]
        return last.bias_offset + last.cols


@dataclass
class ParamVector:
    values: np.ndarray
    layout: tuple[LayerLayout, ...] = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = sum(l.rows * l.cols + l.cols for l in self.layout)
        if self.values.shape != (expected,):
            raise ValueError(f"parameter vector has {self.values.size} entries, layout needs {expected}")

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def with_values(self, values) -> "ParamVector":
        return ParamVector(np.asarray(values, dtype=float), self.layout)

    def __len__(self):
        return self.values.size


def init_params(spec: MLPSpec, seed: int) -> ParamVector:
    """Glorot-uniform weights and zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    values = np.zeros(spec.n_params)
    for lay in spec.layout:
        bound = np.sqrt(6.0 / (lay.rows + lay.cols))
        n = lay.rows * lay.cols
        values[lay.weight_offset:lay.weight_offset + n] = rng.uniform(-bound, bound, size=n)
    return ParamVector(values, spec.layout)


def _raw(params):
    if isinstance(params, ParamVector):
        return params.values
    return params


def _unpack(spec: MLPSpec, params):
    """Per-layer (W, b); slices of a recorded Var stay on its tape."""
    flat = _raw(params)
    size = flat.shape[0] if isinstance(flat, T.Var) else np.shape(flat)[0]
    if size != spec.n_params:
        raise ValueError(f"parameter vector has {size} entries, spec needs {spec.n_params}")
    if not isinstance(flat, T.Var) and not np.all(np.isfinite(flat)):
        raise ValueError("non-finite parameter")
    layers = []
    for lay in spec.layout:
        w_end = lay.bias_offset
        if isinstance(flat, T.Var):
            W = T.reshape(T.take(flat, slice(lay.weight_offset, w_end)), (lay.rows, lay.cols))
            b = T.take(flat, slice(lay.bias_offset, lay.bias_offset + lay.cols))
        else:
            W = flat[lay.weight_offset:w_end].reshape(lay.rows, lay.cols)
            b = flat[lay.bias_offset:lay.bias_offset + lay.cols]
        layers.append((W, b))
    return layers


def forward(spec: MLPSpec, params, x):
    """Batched forward pass; records on the tape when ``params`` is a Var.

    ``x`` has shape (n, input_dim); the result has shape (n, output_dim).
    """
    layers = _unpack(spec, params)
    act = T.relu if spec.activation == "relu" else (lambda z: T.elementary("tanh", z, 0))
    h = x
    for k, (W, b) in enumerate(layers):
        z = T.add(T.matmul(h, W), b)
        h = act(z) if k < len(layers) - 1 else z
    return h


def forward_scalar(spec: MLPSpec, params, point):
    """Plain evaluation at one point (or a batch of points).

    Returns a float for a single point and scalar output, a vector of
    ``output_dim`` values for a single point of a multi-output net, and an
    array with a leading batch axis for batched input.
    """
    x = np.asarray(point, dtype=float)
    single = x.ndim == 1
    if x.shape[-1] != spec.input_dim:
        raise ValueError(f"point dimension {x.shape[-1]} != input_dim {spec.input_dim}")
    out = np.asarray(forward(spec, _raw(params), np.atleast_2d(x)))
    if spec.output_dim == 1:
        out = out[:, 0]
    if single:
        return float(out[0]) if spec.output_dim == 1 else out[0]
    return out


def _stack_inputs(jets: Sequence[Jet]):
    basis = jets[0].basis
    stacked = []
    for idx in range(len(basis)):
        cs = [j.coeffs[idx] for j in jets]
        if all(c is None for c in cs):
            stacked.append(None)
            continue
        if any(isinstance(c, T.Var) for c in cs):
            raise JetError("input jets must be constant in the parameters")
        dtype = np.result_type(*(c for c in cs if c is not None))
        arrs = [np.asarray(0.0 if c is None else c, dtype=dtype) for c in cs]
        shape = np.broadcast_shapes(*(a.shape for a in arrs))
        stacked.append(np.stack([np.broadcast_to(a, shape) for a in arrs], axis=-1))
    return stacked


def forward_jet(spec: MLPSpec, params, jets: Sequence[Jet]):
    """Propagate coordinate jets through a tanh network.

    Returns one Jet for a scalar-output network, else a list of Jets.  When
    ``params`` is a Var the computation is recorded on its tape.
    """
    if spec.activation != "tanh":
        raise JetError("jet mode requires a smooth (tanh) activation")
    if len(jets) != spec.input_dim:
        raise JetError(f"expected {spec.input_dim} input jets, got {len(jets)}")
    basis = jets[0].basis
    if any(j.basis != basis for j in jets):
        raise JetError("input jets do not share one basis")
    layers = _unpack(spec, params)
    h = _stack_inputs(jets)
    for k, (W, b) in enumerate(layers):
        z = [None if c is None else T.matmul(c, W) for c in h]
        z[0] = T.add(z[0], b) if z[0] is not None else b
        if k < len(layers) - 1:
            h = list(jet_elem("tanh", Jet(basis, tuple(z))).coeffs)
        else:
            h = z
    outs = []
    for i in range(spec.output_dim):
        outs.append(Jet(basis, tuple(None if c is None else T.take(c, (Ellipsis, i)) for c in h)))
    return outs[0] if spec.output_dim == 1 else outs


def param_gradient(spec: MLPSpec, params, loss_fn: Callable[[T.Var], T.Var]):
    """Record ``loss_fn(theta)`` on a fresh tape; return (loss, gradient)."""
    flat = _raw(params)
    if np.shape(flat) != (spec.n_params,):
        raise ValueError("parameter vector does not match spec")
    tape = T.Tape()
    theta = tape.parameter(flat)
    loss = loss_fn(theta)
    if not isinstance(loss, T.Var):
        return float(loss), np.zeros(spec.n_params)
    return float(loss.value), tape.backward(loss)


def save_params(path, spec: MLPSpec, params: ParamVector) -> None:
    """Text snapshot: one JSON header line, then one value per line."""
    header = {
        "format": SNAPSHOT_FORMAT,
        "version": SNAPSHOT_VERSION,
        "input_dim": spec.input_dim,
        "hidden_sizes": list(spec.hidden_sizes),
        "output_dim": spec.output_dim,
        "activation": spec.activation,
        "layout": [[l.rows, l.cols, l.weight_offset, l.bias_offset] for l in spec.layout],
    }
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for v in params.values:
            fh.write(repr(float(v)) + "\n")
    tmp.replace(path)


def load_params(path) -> tuple[MLPSpec, ParamVector]:
    with open(path) as fh:
        header = json.loads(fh.readline())
        if header.get("format") != SNAPSHOT_FORMAT:
            raise ValueError("not a parameter snapshot")
        if header.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {header.get('version')}")
        values = np.array([float(line) for line in fh if line.strip()])
    spec = MLPSpec(header["input_dim"], tuple(header["hidden_sizes"]), header["output_dim"], header["activation"])
    return spec, ParamVector(values, spec.layout)
