import numpy as np
import pytest

from rlpinns.jets import seed_coordinates
from rlpinns.problems import (
    PROBLEMS,
    burgers_initial,
    burgers_reference,
    dump_reference_csv,
    exact_residual,
    make_problem,
    sample_boundary,
)

TOL = {"single-peak": 1e-6, "dual-peak": 1e-6, "high-dimension": 1e-6, "wave": 1e-5, "burgers": 1e-5, "biharmonic": 1e-3}


def interior(spec, n, seed=0):
    rng = np.random.default_rng(seed)
    lo, hi = spec.lower, spec.upper
    pts = rng.uniform(lo, hi, size=(n, spec.dimension))
    if spec.time_axis is not None:
        pts[:, spec.time_axis] = np.maximum(pts[:, spec.time_axis], 1e-3)
    return pts


def fd_laplacian(f, x, h=1e-3):
    out = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        out += (f(x + e) - 2 * f(x) + f(x - e)) / h**2
    return out


@pytest.mark.parametrize("name", sorted(PROBLEMS))
def test_manufactured_identity(name):
    spec = make_problem(name)
    r = exact_residual(spec, interior(spec, 100))
    assert np.max(np.abs(r)) < TOL[name]


def test_single_peak_values():
    spec = make_problem("single-peak")
    assert spec.exact_u(np.array([[0.5, 0.5]]))[0] == 1.0
    assert spec.forcing(np.array([[0.5, 0.5]]))[0] == pytest.approx(2000.0)


def test_dual_peak_values():
    spec = make_problem("dual-peak")
    assert spec.exact_u(np.array([[0.5, 0.5]]))[0] == pytest.approx(1.0)
    assert spec.exact_u(np.array([[0.0, 0.0]]))[0] == pytest.approx(2 * np.exp(-250.0), rel=1e-12)


def test_highdim_values():
    spec = make_problem("high-dimension")
    x0 = np.zeros((1, 10))
    assert spec.exact_u(x0)[0] == 1.0
    x1 = np.full((1, 10), np.sqrt(0.1))
    assert spec.exact_u(x1)[0] == pytest.approx(np.exp(-10.0))
    # -Laplace of exp(-10|x|^2) at the origin is 2*a*d = 200
    assert spec.forcing(x0)[0] == pytest.approx(200.0)
    f = lambda x: float(spec.exact_u(x[None, :])[0])
    assert -fd_laplacian(f, np.zeros(10), 1e-3) == pytest.approx(200.0, rel=1e-5)


def test_biharmonic_values():
    spec = make_problem("biharmonic")
    assert spec.forcing(np.zeros((1, 2)))[0] == pytest.approx(3200.0)
    assert spec.extras["boundary_laplacian"](np.zeros((1, 2)))[0] == pytest.approx(-40.0)


@pytest.mark.parametrize("name", ["single-peak", "dual-peak", "high-dimension"])
def test_forcing_matches_fd(name):
    spec = make_problem(name)
    f = lambda x: float(spec.exact_u(x[None, :])[0])
    rng = np.random.default_rng(3)
    for _ in range(5):
        c = 0.5 if name != "high-dimension" else 0.0
        x = c + rng.uniform(-0.05, 0.05, size=spec.dimension)
        fd = -fd_laplacian(f, x, 2e-5)
        assert spec.forcing(x[None, :])[0] == pytest.approx(fd, rel=1e-5)


def test_biharmonic_forcing_matches_fd():
    spec = make_problem("biharmonic")
    h = 1e-2
    f = lambda x, y: float(spec.exact_u(np.array([[x, y]]))[0])

    def lap(x, y):
        return (f(x + h, y) + f(x - h, y) + f(x, y + h) + f(x, y - h) - 4 * f(x, y)) / h**2

    for x, y in [(0.1, 0.2), (-0.3, 0.05)]:
        bih = (lap(x + h, y) + lap(x - h, y) + lap(x, y + h) + lap(x, y - h) - 4 * lap(x, y)) / h**2
        assert spec.forcing(np.array([[x, y]]))[0] == pytest.approx(bih, rel=1e-2)


def test_wave_values():
    spec = make_problem("wave")
    assert spec.exact_u(np.array([[0.0, 0.0]]))[0] == pytest.approx(1 - 1 / np.cosh(20), abs=1e-8)


def _wave_dt0(spec, x, h=1e-5):
    up = spec.exact_u(np.stack([x, np.full(x.size, h)], -1))
    dn = spec.exact_u(np.stack([x, np.full(x.size, -h)], -1))
    return (up - dn) / (2 * h)


def test_wave_initial_velocity_vanishes_in_the_interior():
    spec = make_problem("wave")
    x = np.random.default_rng(0).uniform(-2, 2, 20)
    np.testing.assert_allclose(_wave_dt0(spec, x), 0, atol=1e-6)


def test_wave_initial_velocity_near_walls_is_small_but_nonzero():
    # the two mirror packets move in the same direction, so their
    # t-derivatives add up near x = +-5 instead of cancelling
    spec = make_problem("wave")
    x = np.linspace(-5, 5, 201)
    v = np.abs(_wave_dt0(spec, x))
    analytic = 2 * np.sqrt(3) * np.exp(-10)  # from the packet entering at x = +-5
    assert v.max() == pytest.approx(analytic, rel=0.05)


def test_burgers_initial_and_symmetry():
    assert burgers_initial(0.5) == pytest.approx(-1.0)
    x = np.linspace(-1, 1, 101)
    np.testing.assert_allclose(burgers_reference(x, np.zeros_like(x)), -np.sin(np.pi * x), atol=1e-6)
    t = np.linspace(0.01, 1, 7)
    np.testing.assert_allclose(burgers_reference(np.zeros_like(t), t), 0, atol=1e-12)
    rng = np.random.default_rng(2)
    xs, ts = rng.uniform(-1, 1, 50), rng.uniform(0, 1, 50)
    np.testing.assert_allclose(burgers_reference(-xs, ts), -burgers_reference(xs, ts), atol=1e-10)


def test_burgers_quadrature_refinement():
    a = burgers_reference(-0.5, 0.1)
    b = burgers_reference(-0.5, 0.1, nodes=256)
    assert abs(a - b) < 1e-4


def test_burgers_jet_consistent_with_values():
    spec = make_problem("burgers")
    pts = interior(spec, 5)
    u = spec.exact_jet(seed_coordinates(pts, spec.basis))
    np.testing.assert_allclose(np.asarray(u.value), spec.exact_u(pts), rtol=1e-10)


def test_boundary_single_peak_split():
    spec = make_problem("single-peak")
    (batch,) = sample_boundary(spec, 400, seed=0)
    assert len(batch.points) == 400
    for axis in (0, 1):
        for side, bound in ((0, -1.0), (1, 1.0)):
            assert np.count_nonzero(batch.points[:, axis] == bound) >= 100
    np.testing.assert_array_equal(batch.targets, spec.exact_u(batch.points))
    on_face = np.any(np.abs(batch.points) == 1.0, axis=1)
    assert np.all(on_face)


def test_boundary_burgers_allocation():
    spec = make_problem("burgers")
    (batch,) = sample_boundary(spec, 400, seed=1)
    t0 = batch.points[:, 1] == 0.0
    assert np.count_nonzero(t0) == 200
    np.testing.assert_allclose(batch.targets[t0], -np.sin(np.pi * batch.points[t0, 0]))
    for bound in (-1.0, 1.0):
        side = batch.points[:, 0] == bound
        assert np.count_nonzero(side & ~t0) == 100
    assert np.all(batch.targets[~t0] == 0)


def test_boundary_deterministic_and_biharmonic_terms():
    spec = make_problem("biharmonic")
    a = sample_boundary(spec, 400, seed=5)
    b = sample_boundary(spec, 400, seed=5)
    assert [x.operator for x in a] == ["value", "laplacian"]
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.points, y.points)
    np.testing.assert_array_equal(a[0].points, a[1].points)


def test_wave_boundary_operators():
    spec = make_problem("wave")
    ops = {b.operator: len(b.points) for b in sample_boundary(spec, 400, seed=0)}
    assert ops == {"value": 400, "dt": 200}


def test_unknown_case():
    with pytest.raises(ValueError):
        make_problem("heat")


def test_reference_dump(tmp_path):
    spec = make_problem("burgers")
    pts = np.array([[0.0, 0.5], [0.5, 0.0]])
    path = dump_reference_csv(spec, pts, tmp_path / "ref.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x,t,u"
    assert float(lines[2].split(",")[2]) == pytest.approx(-1.0)
