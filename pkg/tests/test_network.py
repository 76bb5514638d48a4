import numpy as np
import pytest

from rlpinns import tape as T
from rlpinns.jets import DerivativeBasis, JetError, seed_coordinates
from rlpinns.network import (
    PINN_HIDDEN,
    QNET_HIDDEN,
    MLPSpec,
    ParamVector,
    forward,
    forward_jet,
    forward_scalar,
    init_params,
    load_params,
    param_gradient,
    save_params,
)

from conftest import central_diff


def test_init_deterministic_and_seeded():
    spec = MLPSpec(2, (8, 8))
    a, b, c = init_params(spec, 1), init_params(spec, 1), init_params(spec, 2)
    np.testing.assert_array_equal(a.values, b.values)
    assert np.any(a.values != c.values)


def test_glorot_bound_and_zero_bias():
    spec = MLPSpec(64, (128,))
    p = init_params(spec, 0)
    lay = spec.layout[0]
    w = p.values[lay.weight_offset:lay.bias_offset]
    assert np.abs(w).max() <= np.sqrt(6 / 192)
    assert np.all(p.values[lay.bias_offset:lay.bias_offset + lay.cols] == 0)


def test_layout_size():
    spec = MLPSpec(2, PINN_HIDDEN)
    w = spec.widths
    assert spec.n_params == sum(a * b + b for a, b in zip(w[:-1], w[1:]))


def test_zero_params_give_zero():
    spec = MLPSpec(2, (5, 5))
    zero = ParamVector(np.zeros(spec.n_params), spec.layout)
    assert forward_scalar(spec, zero, [0.3, 0.4]) == 0.0
    jets = seed_coordinates(np.array([0.3, 0.4]), DerivativeBasis.full(2, 2))
    u = forward_jet(spec, zero, jets)
    assert all(float(np.asarray(u[a])) == 0 for a in u.basis.multi_indices)


def test_affine_output():
    spec = MLPSpec(1, (1,))
    # hidden unit: tanh(0*x + 0) = 0, output: 2*0 + 1 = 1; check affine map through the output layer
    vals = np.array([0.0, 0.0, 2.0, 1.0])
    assert forward_scalar(spec, ParamVector(vals, spec.layout), [3.0]) == 1.0
    h = np.tanh(0.5 * 3.0 + 0.1)
    vals = np.array([0.5, 0.1, 2.0, 1.0])
    assert forward_scalar(spec, ParamVector(vals, spec.layout), [3.0]) == pytest.approx(2 * h + 1)


def test_dimension_and_finiteness_errors():
    spec = MLPSpec(2, (4,))
    p = init_params(spec, 0)
    with pytest.raises(ValueError):
        forward_scalar(spec, p, [1.0, 2.0, 3.0])
    bad = p.values.copy()
    bad[0] = np.nan
    with pytest.raises(ValueError):
        forward_scalar(spec, bad, [0.0, 0.0])


def test_qnet_vector_output():
    spec = MLPSpec(2, QNET_HIDDEN, 4, "relu")
    out = forward_scalar(spec, init_params(spec, 0), [0.1, 0.2])
    assert out.shape == (4,)


def test_relu_forbidden_in_jet_mode():
    spec = MLPSpec(1, (4,), activation="relu")
    with pytest.raises(JetError):
        forward_jet(spec, init_params(spec, 0), seed_coordinates(np.zeros(1), DerivativeBasis.full(1, 1)))


def test_jet_basis_mismatch():
    spec = MLPSpec(2, (4,))
    a = seed_coordinates(np.zeros(2), DerivativeBasis.full(2, 1))[0]
    b = seed_coordinates(np.zeros(2), DerivativeBasis.full(2, 2))[1]
    with pytest.raises(JetError):
        forward_jet(spec, init_params(spec, 0), [a, b])


def test_jet_value_equals_plain_forward(rng):
    spec = MLPSpec(2, (16, 16))
    p = init_params(spec, 3)
    x = rng.uniform(-1, 1, size=(7, 2))
    u = forward_jet(spec, p, seed_coordinates(x, DerivativeBasis.full(2, 2)))
    np.testing.assert_array_equal(np.asarray(u.value), forward_scalar(spec, p, x))


def test_first_derivative_1d(rng):
    spec = MLPSpec(1, (12, 12))
    p = init_params(spec, 5)
    x = 0.37
    u = forward_jet(spec, p, seed_coordinates(np.array([x]), DerivativeBasis.full(1, 1)))
    h = 1e-4
    fd = (forward_scalar(spec, p, [x + h]) - forward_scalar(spec, p, [x - h])) / (2 * h)
    assert float(u[(1,)]) == pytest.approx(fd, rel=1e-5)


def test_mixed_fourth_derivative_2d():
    spec = MLPSpec(2, (10, 10))
    p = init_params(spec, 11)
    x0 = np.array([0.2, -0.3])
    u = forward_jet(spec, p, seed_coordinates(x0, DerivativeBasis.closure(2, [(2, 2)])))
    h = 1e-2
    w = np.array([1.0, -2.0, 1.0])
    fd = 0.0
    for i, a in enumerate((-1, 0, 1)):
        for j, b in enumerate((-1, 0, 1)):
            fd += w[i] * w[j] * forward_scalar(spec, p, x0 + h * np.array([a, b]))
    fd /= h**4
    assert float(u[(2, 2)]) == pytest.approx(fd, rel=1e-3)


def test_param_gradient_quadratic():
    spec = MLPSpec(1, (1,))
    theta = np.array([1.0, 2.0, 0.0, 0.0])
    loss, g = param_gradient(spec, theta, lambda th: T.total(T.mul(th, th)))
    assert loss == 5.0
    np.testing.assert_array_equal(g, [2, 4, 0, 0])


def test_param_gradient_constant_loss():
    spec = MLPSpec(1, (2,))
    loss, g = param_gradient(spec, init_params(spec, 0), lambda th: 3.0)
    assert loss == 3.0 and not np.any(g)


@pytest.mark.parametrize("spec", [MLPSpec(2, (6, 6)), MLPSpec(2, QNET_HIDDEN, 4, "relu")])
def test_param_gradient_matches_fd(spec, rng):
    p = init_params(spec, 7).values + rng.normal(scale=0.05, size=spec.n_params)
    x = rng.uniform(-1, 1, size=(8, 2))
    y = rng.normal(size=(8, spec.output_dim))

    def loss_fn(th):
        d = T.sub(forward(spec, th, x), y)
        return T.mean(T.mul(d, d))

    _, g = param_gradient(spec, p, loss_fn)
    for _ in range(8):
        v = rng.normal(size=spec.n_params)
        h = 1e-6
        fd = (float(loss_fn(p + h * v)) - float(loss_fn(p - h * v))) / (2 * h)
        assert g @ v == pytest.approx(fd, rel=1e-5)


def test_full_pinn_gradient_directions(rng):
    spec = MLPSpec(2, PINN_HIDDEN)
    p = init_params(spec, 1).values
    x = rng.uniform(-1, 1, size=(4, 2))
    jets = seed_coordinates(x, DerivativeBasis.axis_orders(2, 2))

    def loss_fn(th):
        u = forward_jet(spec, th, jets)
        lap = T.add(u[(2, 0)], u[(0, 2)])
        return T.mean(T.mul(lap, lap))

    _, g = param_gradient(spec, p, loss_fn)
    for _ in range(4):
        v = rng.normal(size=spec.n_params)
        v /= np.linalg.norm(v)
        h = 1e-5
        fd = (float(loss_fn(p + h * v)) - float(loss_fn(p - h * v))) / (2 * h)
        assert g @ v == pytest.approx(fd, rel=1e-5)


def test_snapshot_roundtrip(tmp_path):
    spec = MLPSpec(3, (4, 5), 2)
    p = init_params(spec, 9)
    path = tmp_path / "net.txt"
    save_params(path, spec, p)
    spec2, p2 = load_params(path)
    assert spec2 == spec
    np.testing.assert_array_equal(p2.values, p.values)
    path.write_text('{"format": "other"}\n')
    with pytest.raises(ValueError):
        load_params(path)
