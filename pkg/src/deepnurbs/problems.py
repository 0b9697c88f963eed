"""Benchmark geometries, admissible fields and reference solutions.

Four problems are addressable by name: ``unit_square`` (smoke test),
``slit_square``, ``quarter_annulus`` and ``square_with_hole``.  Smooth
problems carry a manufactured solution ``u*`` with ``f = -lap(u*)``; the
slit square uses ``f = 1`` and a five-point finite-difference reference.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import RegularGridInterpolator

from .admissible import AdmissibleScalarField, build_admissible_scalar, edge_points
from .errors import ConsistencyCheckFailed, OracleError
from .nurbs import ControlNet, KnotVector, affine_net, eval_geometry, make_open_knot_vector
from .sampler import sample_parametric

ALL_EDGES = ("xi1_0", "xi1_1", "xi2_0", "xi2_1")
SQRT1_2 = np.sqrt(0.5)

Field = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ManufacturedReference:
    u_star: Field
    laplacian: Field

    kind = "manufactured"

    def values(self, x: np.ndarray) -> np.ndarray:
        return self.u_star(x)


@dataclass(frozen=True)
class FDSolution:
    """Nodal finite-difference solution on a uniform tensor grid."""

    x1: np.ndarray
    x2: np.ndarray
    values: np.ndarray  # values[i, j] at (x1[i], x2[j])
    h: float
    residual: float

    def interpolator(self):
        return RegularGridInterpolator((self.x1, self.x2), self.values, method="linear")


@dataclass(frozen=True)
class FDReference:
    solution: FDSolution

    kind = "fd_oracle"

    def values(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.solution.x1[0], self.solution.x1[-1]
        return self.solution.interpolator()(np.clip(x, lo, hi))


@dataclass(frozen=True)
class ProblemSpec:
    name: str
    geometry: ControlNet
    phi: AdmissibleScalarField
    source: Field
    reference: ManufacturedReference | FDReference | None
    dirichlet_edges: tuple[str, ...]
    contains: Callable[[np.ndarray, float], np.ndarray] | None = None
    area: float | None = None
    seam_axis: int | None = None
    extras: dict = field(default_factory=dict)

    def reference_values(self, x: np.ndarray) -> np.ndarray:
        if self.reference is None:
            raise ValueError(f"problem {self.name!r} has no reference solution")
        return self.reference.values(x)


def numerical_laplacian(u: Field, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Second-difference Laplacian of ``u`` at points ``x`` (shape ``(m, 2)``)."""
    out = np.zeros(len(x))
    for j in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[j] = h
        out += (u(x + e) - 2.0 * u(x) + u(x - e)) / h**2
    return out


def manufactured_pair(
    u_star: Field,
    laplacian: Field,
    check_points: np.ndarray | None = None,
    rtol: float = 1e-4,
    h: float = 1e-3,
) -> tuple[Field, Field]:
    """Return ``(u*, f)`` with ``f = -laplacian``.

    When ``check_points`` are given, the closed-form Laplacian is compared
    with a second-difference Laplacian there; disagreement beyond ``rtol``
    (relative to the largest Laplacian magnitude) raises.
    """

    def f(x):
        return -laplacian(x)

    if check_points is not None:
        exact = laplacian(check_points)
        approx = numerical_laplacian(u_star, check_points, h)
        scale = max(float(np.max(np.abs(exact))), 1e-300)
        err = float(np.max(np.abs(exact - approx))) / scale
        if not err <= rtol:
            raise ConsistencyCheckFailed(f"closed-form Laplacian off by {err:.2e} (relative)")
    return u_star, f


def _interior_check_points(geometry: ControlNet, n: int = 100, seed: int = 12345) -> np.ndarray:
    xi = 0.05 + 0.9 * sample_parametric(n, seed)
    return eval_geometry(geometry, xi)


# --------------------------------------------------------------------------
# unit square


def _sin_sin(x):
    return np.sin(np.pi * x[:, 0]) * np.sin(np.pi * x[:, 1])


def _sin_sin_lap(x):
    return -2.0 * np.pi**2 * _sin_sin(x)


def unit_square_problem(degree: int = 2, num_basis: int = 4, interior_fill=1.0, seed=None) -> ProblemSpec:
    geometry = affine_net([0.0, 0.0], [1.0, 1.0], degree, num_basis)
    phi = build_admissible_scalar(geometry, ALL_EDGES, interior_fill, seed)
    u, f = manufactured_pair(_sin_sin, _sin_sin_lap, _interior_check_points(geometry))

    def contains(x, tol=1e-9):
        return np.all((x >= -tol) & (x <= 1.0 + tol), axis=-1)

    return ProblemSpec("unit_square", geometry, phi, f, ManufacturedReference(u, _sin_sin_lap),
                       ALL_EDGES, contains, 1.0)


# --------------------------------------------------------------------------
# slit square  (-1,1)^2 minus [0,1) x {0}

# corners of the outer square in counter-clockwise order, starting and ending
# at (1, 0) where the slit meets the boundary
_SLIT_POLYGON = [(1, 0), (1, 1), (-1, 1), (-1, -1), (1, -1), (1, 0)]


def slit_square_net(radial_basis: int = 6) -> ControlNet:
    """Star-shaped net around the slit tip.

    ``xi1`` runs once around the outer square (quadratic pieces joined with
    C0 at the corners), ``xi2`` runs from the origin (collapsed edge) to the
    boundary.  Both ``xi1`` ends map onto the slit, one per face.

    Radial control rows sit at the blossoms of ``t^2``, so the distance to
    the tip grows like ``xi2^2``.  Uniform draws then cluster at the tip and
    fields on this net behave like ``sqrt(r)`` there, matching the corner
    singularity of the solution.
    """
    poly = np.asarray(_SLIT_POLYGON, dtype=float)
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    breaks = np.cumsum(seg)[:-1] / seg.sum()
    knots = [0.0, 0.0, 0.0] + [b for b in breaks for _ in range(2)] + [1.0, 1.0, 1.0]
    angular = KnotVector(2, tuple(knots))
    ring = [poly[0]]
    for a, b in zip(poly[:-1], poly[1:]):
        ring += [0.5 * (a + b), b]
    ring = np.asarray(ring)
    radial = make_open_knot_vector(2, radial_basis)
    U = radial.array
    s = U[1:-2] * U[2:-1]  # quadratic B-spline coefficients of t^2
    pts = ring[:, None, :] * s[None, :, None]
    return ControlNet((angular, radial), pts)


def _slit_contains(x, tol=1e-9):
    inside = np.all(np.abs(x) <= 1.0 + tol, axis=-1)
    # angular test: samples close to the tip may sit within tol of x2 = 0
    # on either face without lying on the slit itself
    on_slit = (np.abs(x[:, 1]) < tol * np.abs(x[:, 0])) & (x[:, 0] > 0.0) & (x[:, 0] < 1.0 - tol)
    return inside & ~on_slit


def fd_poisson_oracle(h: float = 1.0 / 128, source=1.0, tol: float = 1e-10) -> FDSolution:
    """Five-point finite differences for ``-lap u = source`` on the slit square.

    ``source`` is a constant or a callable ``f(x1, x2)`` on node arrays.
    Nodes on ``x2 = 0`` with ``0 <= x1 <= 1`` are Dirichlet nodes (u = 0),
    as is the outer boundary.  The system is solved directly; the scaled
    residual ``max |h^2 (A u - b)|`` must stay below ``tol``.
    """
    n_cells = 2.0 / h
    if abs(n_cells - round(n_cells)) > 1e-9 or round(n_cells) % 2:
        raise ValueError(f"h={h} must divide 1 evenly so the slit lies on grid lines")
    n = int(round(n_cells)) + 1
    x = np.linspace(-1.0, 1.0, n)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    mid = n // 2
    fixed = np.zeros((n, n), dtype=bool)
    fixed[0, :] = fixed[-1, :] = fixed[:, 0] = fixed[:, -1] = True
    fixed[mid:, mid] = True  # slit: x2 = 0, x1 >= 0
    unknown = ~fixed
    index = -np.ones((n, n), dtype=np.int64)
    index[unknown] = np.arange(int(unknown.sum()))
    I, J = np.nonzero(unknown)
    rows, cols, vals = [index[I, J]], [index[I, J]], [np.full(I.size, 4.0)]
    for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        nb = index[I + di, J + dj]
        keep = nb >= 0
        rows.append(index[I, J][keep])
        cols.append(nb[keep])
        vals.append(np.full(int(keep.sum()), -1.0))
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(I.size, I.size))
    f = source(X1, X2) if callable(source) else np.full((n, n), float(source))
    b = h * h * f[unknown]
    sol = spla.spsolve(A.tocsc(), b)
    residual = float(np.max(np.abs(A @ sol - b)))
    if not residual < tol:
        raise OracleError(f"finite-difference solve residual {residual:.3e} exceeds {tol:.1e}")
    U = np.zeros((n, n))
    U[unknown] = sol
    return FDSolution(x, x, U, h, residual)


@functools.lru_cache(maxsize=4)
def _cached_fd(h: float) -> FDSolution:
    return fd_poisson_oracle(h)


def slit_square_problem(radial_basis: int = 6, interior_fill=1.0, seed=None, fd_h: float = 1.0 / 128) -> ProblemSpec:
    geometry = slit_square_net(radial_basis)
    phi = build_admissible_scalar(geometry, ALL_EDGES, interior_fill, seed)

    def source(x):
        return np.ones(len(x))

    return ProblemSpec("slit_square", geometry, phi, source, FDReference(_cached_fd(fd_h)),
                       ALL_EDGES, _slit_contains, 4.0)


# --------------------------------------------------------------------------
# quarter annulus  r in [0.2, 2], angle in [0, pi/2]

R_INNER, R_OUTER = 0.2, 2.0
_ANNULUS_SCALE = 1.0 / (((R_OUTER - R_INNER) / 2.0) ** 2)


def quarter_annulus_net(r1: float = R_INNER, r2: float = R_OUTER, radial_basis: int = 4) -> ControlNet:
    """Exact quarter annulus: rational quadratic arcs in ``xi1``, radius linear in ``xi2``."""
    angular = make_open_knot_vector(2, 3)
    radial = make_open_knot_vector(2, radial_basis)
    radii = r1 + (r2 - r1) * radial.greville()
    arc = np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    pts = arc[:, None, :] * radii[None, :, None]
    w = np.outer([1.0, SQRT1_2, 1.0], np.ones(radial_basis))
    return ControlNet((angular, radial), pts, w)


def _annulus_u(x, a=R_INNER, b=R_OUTER):
    r2 = np.sum(x * x, axis=-1)
    r = np.sqrt(r2)
    return _ANNULUS_SCALE * (r - a) * (b - r) * 2.0 * x[:, 0] * x[:, 1] / r2


def _annulus_lap(x, a=R_INNER, b=R_OUTER):
    # u = c g(r) sin(2t):  lap u = c sin(2t) (g'' + g'/r - 4 g / r^2)
    r2 = np.sum(x * x, axis=-1)
    r = np.sqrt(r2)
    s = 2.0 * x[:, 0] * x[:, 1] / r2
    g = (r - a) * (b - r)
    dg = a + b - 2.0 * r
    return _ANNULUS_SCALE * s * (-2.0 + dg / r - 4.0 * g / r2)


def annulus_problem(radial_basis: int = 4, interior_fill=1.0, seed=None) -> ProblemSpec:
    geometry = quarter_annulus_net(radial_basis=radial_basis)
    phi = build_admissible_scalar(geometry, ALL_EDGES, interior_fill, seed)
    u, f = manufactured_pair(_annulus_u, _annulus_lap, _interior_check_points(geometry))

    def contains(x, tol=1e-9):
        r = np.linalg.norm(x, axis=-1)
        return (r >= R_INNER - tol) & (r <= R_OUTER + tol) & np.all(x >= -tol, axis=-1)

    area = np.pi * (R_OUTER**2 - R_INNER**2) / 4.0
    return ProblemSpec("quarter_annulus", geometry, phi, f, ManufacturedReference(u, _annulus_lap),
                       ALL_EDGES, contains, area)


# --------------------------------------------------------------------------
# square [-4, 4]^2 with the unit disk removed

HALF_WIDTH = 4.0
_HOLE_SCALE = 1.0 / 1103.3702110759677  # max of the unscaled product on the domain


def square_with_hole_net(half_width: float = HALF_WIDTH, radial_basis: int = 4) -> ControlNet:
    """Single closed patch from the unit circle (``xi2 = 0``) to the square (``xi2 = 1``).

    ``xi1`` goes once around, starting on the lower-right diagonal; its two
    ends meet on a seam that is interior to the domain.  The circle is four
    rational quadratic arcs centred on the axes; the square's corners sit on
    the C0 knots, and rows in between blend homogeneous coordinates linearly.
    """
    knots = (0, 0, 0, 0.25, 0.25, 0.5, 0.5, 0.75, 0.75, 1, 1, 1)
    angular = KnotVector(2, knots)
    corner = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], dtype=float)
    mids = np.array([[1, 0], [0, 1], [-1, 0], [0, -1]], dtype=float)
    inner, outer, w_inner = [], [], []
    for k in range(4):
        inner += [corner[k] * SQRT1_2, mids[k] * np.sqrt(2.0)]
        outer += [corner[k] * half_width, mids[k] * half_width]
        w_inner += [1.0, SQRT1_2]
    inner.append(inner[0])
    outer.append(outer[0])
    w_inner.append(1.0)
    inner, outer, w_inner = np.asarray(inner), np.asarray(outer), np.asarray(w_inner)
    radial = make_open_knot_vector(2, radial_basis)
    g = radial.greville()[None, :]
    w = (1.0 - g) * w_inner[:, None] + g
    homog = (1.0 - g)[..., None] * (w_inner[:, None, None] * inner[:, None, :]) + g[..., None] * outer[:, None, :]
    return ControlNet((angular, radial), homog / w[..., None], w)


def _hole_u(x, c=HALF_WIDTH**2):
    x1, x2 = x[:, 0], x[:, 1]
    return _HOLE_SCALE * (x1**2 + x2**2 - 1.0) * (c - x1**2) * (c - x2**2)


def _hole_lap(x, c=HALF_WIDTH**2):
    x1, x2 = x[:, 0], x[:, 1]
    a, b, d = x1**2 + x2**2 - 1.0, c - x1**2, c - x2**2
    return _HOLE_SCALE * (4.0 * b * d - 2.0 * a * d - 2.0 * a * b - 8.0 * x1**2 * d - 8.0 * x2**2 * b)


def square_with_hole_problem(radial_basis: int = 4, interior_fill=1.0, seed=None) -> ProblemSpec:
    geometry = square_with_hole_net(radial_basis=radial_basis)
    edges = ("xi2_0", "xi2_1")
    phi = build_admissible_scalar(geometry, edges, interior_fill, seed, seam_axis=0)
    u, f = manufactured_pair(_hole_u, _hole_lap, _interior_check_points(geometry))

    def contains(x, tol=1e-9):
        r2 = np.sum(x * x, axis=-1)
        return np.all(np.abs(x) <= HALF_WIDTH + tol, axis=-1) & (r2 >= 1.0 - tol)

    return ProblemSpec("square_with_hole", geometry, phi, f, ManufacturedReference(u, _hole_lap),
                       edges, contains, (2 * HALF_WIDTH) ** 2 - np.pi, seam_axis=0)


def custom_problem(geometry: ControlNet, dirichlet_edges=ALL_EDGES, source: float = 1.0,
                   coefficients: np.ndarray | None = None, interior_fill=1.0, seed=None,
                   seam_axis: int | None = None) -> ProblemSpec:
    """Constant-source problem on a user-supplied net, without a reference solution.

    Given ``coefficients`` are used as the admissible field as-is (and
    must then vanish on the Dirichlet edges); otherwise one is built.
    """
    edges = tuple(dirichlet_edges)
    if coefficients is None:
        phi = build_admissible_scalar(geometry, edges, interior_fill, seed, seam_axis=seam_axis)
    else:
        phi = AdmissibleScalarField(geometry, coefficients, edges)
    value = float(source)

    def f(x):
        return np.full(len(x), value)

    return ProblemSpec("custom", geometry, phi, f, None, edges, seam_axis=seam_axis)


PROBLEMS: dict[str, Callable[..., ProblemSpec]] = {
    "unit_square": unit_square_problem,
    "slit_square": slit_square_problem,
    "quarter_annulus": annulus_problem,
    "square_with_hole": square_with_hole_problem,
}


def get_problem(name: str, **kwargs) -> ProblemSpec:
    try:
        factory = PROBLEMS[name]
    except KeyError:
        raise ValueError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None
    return factory(**kwargs)


def boundary_parametric_points(problem: ProblemSpec, n: int, seed=0) -> np.ndarray:
    """``n`` random parametric points spread over the Dirichlet edges."""
    rng = np.random.default_rng(seed)
    edges = problem.dirichlet_edges
    which = rng.integers(0, len(edges), size=n)
    t = rng.random(n)
    xi = np.empty((n, 2))
    for k, e in enumerate(edges):
        xi[which == k] = edge_points(e, t[which == k])
    return xi
