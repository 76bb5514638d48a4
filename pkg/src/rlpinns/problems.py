"""The six benchmark PDEs.

Every problem treats time (when present) as an ordinary coordinate placed
last, so Burgers and the wave equation live on boxes over ``(x, t)``.
Forcings for the Poisson-type problems are manufactured from the exact
solutions; the biharmonic forcing and boundary Laplacian use the closed forms
printed with the benchmark.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tape as T
from .jets import DerivativeBasis, Jet, jet_arith, jet_elem, seed_coordinates

__all__ = [
    "BoundaryTerm",
    "BoundaryBatch",
    "ProblemSpec",
    "make_single_peak",
    "make_dual_peak",
    "make_burgers",
    "make_wave",
    "make_highdim",
    "make_biharmonic",
    "make_problem",
    "PROBLEMS",
    "burgers_reference",
    "burgers_reference_jet",
    "sample_boundary",
    "operator_basis",
    "apply_operator",
    "dump_reference_csv",
    "BURGERS_NU",
]

BURGERS_NU = 0.01 / np.pi
WAVE_SPEED_SQ = 3.0


@dataclass(frozen=True)
class BoundaryTerm:
    """One boundary/initial constraint: ``operator[u] = target`` on ``faces``.

    A face is ``(axis, side)`` with side 0 for the lower bound, 1 for the upper.
    """

    operator: str
    faces: tuple[tuple[int, int], ...]
    target: Callable[[np.ndarray], np.ndarray]


@dataclass
class BoundaryBatch:
    points: np.ndarray
    operator: str
    targets: np.ndarray

    def __post_init__(self):
        if len(self.points) != len(self.targets):
            raise ValueError("points and targets differ in length")


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    dimension: int
    lower: np.ndarray
    upper: np.ndarray
    basis: DerivativeBasis
    residual: Callable[[Jet, np.ndarray], object]
    boundary_terms: tuple[BoundaryTerm, ...]
    exact_u: Callable[[np.ndarray], np.ndarray]
    exact_jet: Callable[[list], Jet] | None = None
    forcing: Callable[[np.ndarray], np.ndarray] | None = None
    time_axis: int | None = None
    extras: dict = field(default_factory=dict)

    def contains(self, points, atol=0.0) -> np.ndarray:
        p = np.asarray(points)
        return np.all((p >= self.lower - atol) & (p <= self.upper + atol), axis=-1)

    def faces(self) -> list[tuple[int, int]]:
        seen = []
        for term in self.boundary_terms:
            for f in term.faces:
                if f not in seen:
                    seen.append(f)
        return seen


# --- shared pieces ----------------------------------------------------------

def _as(x, like):
    return np.asarray(x, dtype=np.asarray(like).dtype if np.asarray(like).dtype.kind == "f" else float)


def _sq_dist_jet(jets, center):
    acc = None
    for j, c in zip(jets, center):
        d = jet_arith("sub", j, float(c)) if c else j
        sq = jet_arith("mul", d, d)
        acc = sq if acc is None else jet_arith("add", acc, sq)
    return acc


def _gaussian(points, center, a):
    r2 = np.sum((np.asarray(points, dtype=float) - np.asarray(center)) ** 2, axis=-1)
    return np.exp(-a * r2), r2


def _laplacian(u: Jet, axes):
    acc = None
    for i in axes:
        c = u[u.basis.unit(i, 2)]
        acc = c if acc is None else T.add(acc, c)
    return acc


def _poisson_residual(axes, forcing):
    def residual(u: Jet, x):
        return T.sub(T.neg(_laplacian(u, axes)), _as(forcing(x), x))
    return residual


def _all_faces(dim):
    return tuple((i, s) for i in range(dim) for s in (0, 1))


# --- the benchmarks ---------------------------------------------------------

def make_single_peak(a: float = 500.0, center=(0.5, 0.5)) -> ProblemSpec:
    """-Laplace u = f on [-1,1]^2 with a sharp Gaussian exact solution."""
    center = np.asarray(center, dtype=float)

    def exact_u(x):
        return _gaussian(x, center, a)[0]

    def forcing(x):
        u, r2 = _gaussian(x, center, a)
        return (4 * a - 4 * a * a * r2) * u

    def exact_jet(jets):
        return jet_elem("exp", jet_arith("scale", _sq_dist_jet(jets, center), -a))

    return ProblemSpec(
        name="single-peak",
        dimension=2,
        lower=np.array([-1.0, -1.0]),
        upper=np.array([1.0, 1.0]),
        basis=DerivativeBasis.axis_orders(2, 2),
        residual=_poisson_residual((0, 1), forcing),
        boundary_terms=(BoundaryTerm("value", _all_faces(2), exact_u),),
        exact_u=exact_u,
        exact_jet=exact_jet,
        forcing=forcing,
    )


def make_dual_peak(a: float = 500.0) -> ProblemSpec:
    """Two Gaussian peaks at (-0.5,-0.5) and (0.5,0.5), summed."""
    centers = (np.array([-0.5, -0.5]), np.array([0.5, 0.5]))

    def exact_u(x):
        return sum(_gaussian(x, c, a)[0] for c in centers)

    def forcing(x):
        out = 0.0
        for c in centers:
            u, r2 = _gaussian(x, c, a)
            out = out + (4 * a - 4 * a * a * r2) * u
        return out

    def exact_jet(jets):
        parts = [jet_elem("exp", jet_arith("scale", _sq_dist_jet(jets, c), -a)) for c in centers]
        return jet_arith("add", parts[0], parts[1])

    return ProblemSpec(
        name="dual-peak",
        dimension=2,
        lower=np.array([-1.0, -1.0]),
        upper=np.array([1.0, 1.0]),
        basis=DerivativeBasis.axis_orders(2, 2),
        residual=_poisson_residual((0, 1), forcing),
        boundary_terms=(BoundaryTerm("value", _all_faces(2), exact_u),),
        exact_u=exact_u,
        exact_jet=exact_jet,
        forcing=forcing,
    )


def make_highdim(dim: int = 10, a: float = 10.0) -> ProblemSpec:
    """-Laplace u = f on [-1,1]^dim, u = exp(-a |x|^2)."""
    center = np.zeros(dim)

    def exact_u(x):
        return _gaussian(x, center, a)[0]

    def forcing(x):
        u, r2 = _gaussian(x, center, a)
        return (2 * a * dim - 4 * a * a * r2) * u

    def exact_jet(jets):
        return jet_elem("exp", jet_arith("scale", _sq_dist_jet(jets, center), -a))

    return ProblemSpec(
        name="high-dimension",
        dimension=dim,
        lower=-np.ones(dim),
        upper=np.ones(dim),
        basis=DerivativeBasis.axis_orders(dim, 2),
        residual=_poisson_residual(tuple(range(dim)), forcing),
        boundary_terms=(BoundaryTerm("value", _all_faces(dim), exact_u),),
        exact_u=exact_u,
        exact_jet=exact_jet,
        forcing=forcing,
    )


def make_biharmonic(a: float = 10.0) -> ProblemSpec:
    """Laplace^2 u = f on [-1,1]^2 with u and Laplace u prescribed on the boundary."""
    center = np.zeros(2)

    def exact_u(x):
        return _gaussian(x, center, a)[0]

    def forcing(x):
        u, r2 = _gaussian(x, center, a)
        return (160000.0 * r2**2 - 64000.0 * r2 + 3200.0) * u

    def boundary_laplacian(x):
        u, r2 = _gaussian(x, center, a)
        return (400.0 * r2 - 40.0) * u

    def residual(u: Jet, x):
        bih = T.add(T.add(u[(4, 0)], T.mul(u[(2, 2)], 2.0)), u[(0, 4)])
        return T.sub(bih, _as(forcing(x), x))

    def exact_jet(jets):
        return jet_elem("exp", jet_arith("scale", _sq_dist_jet(jets, center), -a))

    faces = _all_faces(2)
    return ProblemSpec(
        name="biharmonic",
        dimension=2,
        lower=np.array([-1.0, -1.0]),
        upper=np.array([1.0, 1.0]),
        basis=DerivativeBasis.axis_orders(2, 4, mixed=[(2, 2)]),
        residual=residual,
        boundary_terms=(
            BoundaryTerm("value", faces, exact_u),
            BoundaryTerm("laplacian", faces, boundary_laplacian),
        ),
        exact_u=exact_u,
        exact_jet=exact_jet,
        forcing=forcing,
        extras={"boundary_laplacian": boundary_laplacian},
    )


def burgers_initial(x):
    return -np.sin(np.pi * np.asarray(x))


def make_burgers() -> ProblemSpec:
    """u_t + u u_x - (0.01/pi) u_xx = 0 on (x, t) in [-1,1] x [0,1]."""
    nu = BURGERS_NU

    def residual(u: Jet, x):
        ut, ux, uxx = u[(0, 1)], u[(1, 0)], u[(2, 0)]
        return T.sub(T.add(ut, T.mul(u.value, ux)), T.mul(uxx, nu))

    def exact_u(points):
        p = np.asarray(points, dtype=float)
        return burgers_reference(p[..., 0], p[..., 1])

    def initial(points):
        return burgers_initial(np.asarray(points)[..., 0])

    def zero(points):
        return np.zeros(len(points))

    return ProblemSpec(
        name="burgers",
        dimension=2,
        lower=np.array([-1.0, 0.0]),
        upper=np.array([1.0, 1.0]),
        basis=DerivativeBasis.closure(2, [(2, 0), (0, 1)]),
        residual=residual,
        boundary_terms=(
            BoundaryTerm("value", ((1, 0),), initial),
            BoundaryTerm("value", ((0, 0), (0, 1)), zero),
        ),
        exact_u=exact_u,
        exact_jet=lambda jets: burgers_reference_jet(jets[0], jets[1]),
        time_axis=1,
    )


def _wave_exact(x, t):
    s = np.sqrt(3.0) * t
    sech = lambda z: 1.0 / np.cosh(z)
    return 0.5 * (sech(2 * (x - s)) - sech(2 * (x - 10 + s)) + sech(2 * (x + s)) - sech(2 * (x + 10 - s)))


def wave_initial(x):
    x = np.asarray(x, dtype=float)
    return 1.0 / np.cosh(2 * x) - 0.5 / np.cosh(2 * (x - 10)) - 0.5 / np.cosh(2 * (x + 10))


def make_wave() -> ProblemSpec:
    """u_tt - 3 u_xx = 0 on (x, t) in [-5,5] x [0,6]; four sech packets."""

    def residual(u: Jet, x):
        return T.sub(u[(0, 2)], T.mul(u[(2, 0)], WAVE_SPEED_SQ))

    def exact_u(points):
        p = np.asarray(points, dtype=float)
        return _wave_exact(p[..., 0], p[..., 1])

    def exact_jet(jets):
        x, t = jets
        st = jet_arith("scale", t, float(np.sqrt(3.0)))
        out = None
        for sign, shift, tsign in ((1, 0.0, -1), (-1, -10.0, 1), (1, 0.0, 1), (-1, 10.0, -1)):
            arg = jet_arith("add", x, jet_arith("scale", st, float(tsign)))
            if shift:
                arg = jet_arith("add", arg, shift)
            term = jet_arith("scale", jet_elem("cosh_reciprocal", jet_arith("scale", arg, 2.0)), 0.5 * sign)
            out = term if out is None else jet_arith("add", out, term)
        return out

    def initial(points):
        return wave_initial(np.asarray(points)[..., 0])

    def zero(points):
        return np.zeros(len(points))

    return ProblemSpec(
        name="wave",
        dimension=2,
        lower=np.array([-5.0, 0.0]),
        upper=np.array([5.0, 6.0]),
        basis=DerivativeBasis.axis_orders(2, 2),
        residual=residual,
        boundary_terms=(
            BoundaryTerm("value", ((1, 0),), initial),
            BoundaryTerm("dt", ((1, 0),), zero),
            BoundaryTerm("value", ((0, 0), (0, 1)), zero),
        ),
        exact_u=exact_u,
        exact_jet=exact_jet,
        time_axis=1,
    )


PROBLEMS: dict[str, Callable[[], ProblemSpec]] = {
    "single-peak": make_single_peak,
    "dual-peak": make_dual_peak,
    "burgers": make_burgers,
    "wave": make_wave,
    "high-dimension": make_highdim,
    "biharmonic": make_biharmonic,
}


def make_problem(name: str) -> ProblemSpec:
    try:
        return PROBLEMS[name]()
    except KeyError:
        raise ValueError(f"unknown case {name!r}; expected one of {sorted(PROBLEMS)}") from None


# --- Burgers reference (Cole-Hopf) -----------------------------------------

def _hermgauss(n):
    z, w = np.polynomial.hermite.hermgauss(n)
    return z, w


def burgers_reference(x, t, nodes: int = 64, nu: float = BURGERS_NU):
    """Cole-Hopf solution of the viscous Burgers benchmark.

    ``u = -int sin(pi(x-eta)) F(x-eta) G dEta / int F(x-eta) G dEta`` with
    ``F(y) = exp(-cos(pi y) / (2 pi nu))`` and a heat kernel ``G``, evaluated by
    Gauss-Hermite quadrature.  At ``t == 0`` the initial condition is returned.
    """
    x, t = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(t, dtype=float))
    shape = x.shape
    x, t = x.ravel(), t.ravel()
    out = burgers_initial(x).astype(float)
    pos = t > 0
    if np.any(pos):
        z, w = _hermgauss(nodes)
        y = x[pos][:, None] - np.sqrt(4 * nu * t[pos])[:, None] * z
        e = -np.cos(np.pi * y) / (2 * np.pi * nu)
        e -= e.max(axis=1, keepdims=True)
        F = w * np.exp(e)
        out[pos] = -(np.sin(np.pi * y) * F).sum(axis=1) / F.sum(axis=1)
    return out.reshape(shape) if shape else float(out[0])


def burgers_reference_jet(x: Jet, t: Jet, nodes: int = 64, nu: float = BURGERS_NU) -> Jet:
    """The quadrature formula evaluated in jet arithmetic (requires t > 0)."""
    tv = np.asarray(T.value_of(t.value))
    if np.any(tv <= 0):
        raise ValueError("reference jets need t > 0")
    z, w = _hermgauss(nodes)
    scale = jet_elem("sqrt", jet_arith("scale", t, 4 * nu))
    xv = np.asarray(T.value_of(x.value))
    # per-point exponent shift keeps exp() in range; it cancels in the ratio
    shift = np.max(-np.cos(np.pi * (xv[..., None] - np.sqrt(4 * nu * tv)[..., None] * z)), axis=-1) / (2 * np.pi * nu)
    num = den = None
    for zi, wi in zip(z, w):
        y = jet_arith("sub", x, jet_arith("scale", scale, float(zi)))
        py = jet_arith("scale", y, np.pi)
        expo = jet_arith("sub", jet_arith("scale", jet_elem("cos", py), -1.0 / (2 * np.pi * nu)), shift)
        F = jet_arith("scale", jet_elem("exp", expo), float(wi))
        sF = jet_arith("mul", jet_elem("sin", py), F)
        num = sF if num is None else jet_arith("add", num, sF)
        den = F if den is None else jet_arith("add", den, F)
    return jet_arith("scale", jet_arith("div", num, den), -1.0)


# --- boundary handling ------------------------------------------------------

def operator_basis(op: str, dimension: int, time_axis: int | None = None) -> DerivativeBasis:
    if op == "value":
        return DerivativeBasis.closure(dimension)
    if op == "dt":
        if time_axis is None:
            raise ValueError("time derivative on a problem without time axis")
        e = [0] * dimension
        e[time_axis] = 1
        return DerivativeBasis.closure(dimension, [e])
    if op == "laplacian":
        return DerivativeBasis.axis_orders(dimension, 2)
    raise ValueError(f"unknown boundary operator {op!r}")


def apply_operator(op: str, u: Jet, time_axis: int | None = None):
    if op == "value":
        return u.value
    if op == "dt":
        return u[u.basis.unit(time_axis)]
    if op == "laplacian":
        return _laplacian(u, range(u.basis.dimension))
    raise ValueError(f"unknown boundary operator {op!r}")


def _face_counts(spec: ProblemSpec, count: int) -> dict:
    faces = spec.faces()
    counts = {}
    if spec.time_axis is not None:
        initial = (spec.time_axis, 0)
        spatial = [f for f in faces if f != initial]
        n0 = count // 2
        counts[initial] = n0
        rest = count - n0
    else:
        spatial = faces
        rest = count
    per, extra = divmod(rest, len(spatial))
    for k, f in enumerate(spatial):
        counts[f] = per + (1 if k < extra else 0)
    return counts


def sample_boundary(spec: ProblemSpec, count: int, seed: int, dtype=float) -> list[BoundaryBatch]:
    """Uniform boundary/initial points, one batch per boundary term.

    Faces share the budget evenly; time-dependent problems give half of it to
    the initial face.  Terms on the same face reuse the same points.
    """
    if count <= 0:
        raise ValueError("boundary count must be positive")
    rng = np.random.default_rng(seed)
    face_points = {}
    for (axis, side), n in _face_counts(spec, count).items():
        pts = rng.uniform(spec.lower, spec.upper, size=(n, spec.dimension))
        pts[:, axis] = spec.upper[axis] if side else spec.lower[axis]
        face_points[(axis, side)] = pts
    merged: dict[str, list] = {}
    order = []
    for term in spec.boundary_terms:
        pts = np.concatenate([face_points[f] for f in term.faces])
        tgt = np.asarray(term.target(pts), dtype=float)
        if term.operator not in merged:
            merged[term.operator] = [[], []]
            order.append(term.operator)
        merged[term.operator][0].append(pts)
        merged[term.operator][1].append(tgt)
    out = []
    for op in order:
        pts, tgt = merged[op]
        out.append(BoundaryBatch(np.concatenate(pts).astype(dtype), op, np.concatenate(tgt).astype(dtype)))
    return out


def dump_reference_csv(spec: ProblemSpec, points, path) -> Path:
    """Write coordinates and exact/reference values, one row per point."""
    points = np.asarray(points, dtype=float)
    values = spec.exact_u(points)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    names = _coord_names(spec)
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([*names, "u"])
        for p, v in zip(points, values):
            w.writerow([*(repr(float(c)) for c in p), repr(float(v))])
    tmp.replace(path)
    return path


def _coord_names(spec: ProblemSpec) -> list[str]:
    if spec.time_axis is not None:
        return ["x", "t"]
    if spec.dimension == 2:
        return ["x", "y"]
    return [f"x{i}" for i in range(spec.dimension)]


def exact_residual(spec: ProblemSpec, points) -> np.ndarray:
    """Residual of the exact (or reference) solution at ``points``."""
    if spec.exact_jet is None:
        raise ValueError(f"{spec.name} has no exact jet")
    jets = seed_coordinates(np.asarray(points, dtype=float), spec.basis)
    return np.asarray(T.value_of(spec.residual(spec.exact_jet(jets), np.asarray(points, dtype=float))))
