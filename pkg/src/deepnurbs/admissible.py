"""NURBS fields that vanish on (or interpolate data along) Dirichlet edges.

A field shares the knot vectors and weights of its geometry and carries its
own coefficient grid.  Parametric edges are named ``xi1_0``, ``xi1_1``,
``xi2_0`` and ``xi2_1`` (coordinate index and the side it is pinned to).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import SingularJacobian
from .nurbs import ControlNet, _check_unit, as_points, rational_eval

EDGES = ("xi1_0", "xi1_1", "xi2_0", "xi2_1")
DET_EPSILON = 1e-12


def parse_edge(name: str) -> tuple[int, int]:
    """``'xi2_1'`` -> ``(axis=1, side=1)``."""
    if name not in EDGES:
        raise ValueError(f"unknown edge {name!r}; expected one of {EDGES}")
    return int(name[2]) - 1, int(name[4])


def edge_points(edge: str, t: np.ndarray) -> np.ndarray:
    """Parametric points on ``edge`` at running coordinate ``t``."""
    axis, side = parse_edge(edge)
    t = np.asarray(t, dtype=float)
    pts = np.empty((t.size, 2))
    pts[:, axis] = float(side)
    pts[:, 1 - axis] = t
    return pts


def _edge_slab(shape: tuple[int, ...], edge: str) -> tuple:
    axis, side = parse_edge(edge)
    index = [slice(None)] * len(shape)
    index[axis] = -1 if side else 0
    return tuple(index)


def _normalize_edges(edges: Iterable[str]) -> tuple[str, ...]:
    edges = tuple(dict.fromkeys(edges))
    for e in edges:
        parse_edge(e)
    return edges


@dataclass(frozen=True)
class AdmissibleScalarField:
    geometry: ControlNet
    coefficients: np.ndarray
    dirichlet_edges: tuple[str, ...]

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.shape != self.geometry.shape:
            raise ValueError(f"coefficient grid {c.shape} does not match geometry {self.geometry.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "dirichlet_edges", _normalize_edges(self.dirichlet_edges))


@dataclass(frozen=True)
class AdmissibleVectorField:
    geometry: ControlNet
    coefficients: np.ndarray
    dirichlet_edges: tuple[str, ...]

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=float)
        if c.shape[:-1] != self.geometry.shape:
            raise ValueError(f"coefficient grid {c.shape} does not match geometry {self.geometry.shape}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "dirichlet_edges", _normalize_edges(self.dirichlet_edges))


def eval_phi(field: AdmissibleScalarField, xi):
    """Scalar field value(s); exactly 0 on every Dirichlet edge."""
    pts, single = as_points(xi, field.geometry.dim)
    _check_unit(pts)
    val, _ = rational_eval(field.geometry, field.coefficients, pts, with_grad=False)
    return float(val[0]) if single else val


def eval_zeta(field: AdmissibleVectorField, xi):
    """Vector field value(s), componentwise the same expansion as :func:`eval_phi`."""
    pts, single = as_points(xi, field.geometry.dim)
    _check_unit(pts)
    val, _ = rational_eval(field.geometry, field.coefficients, pts, with_grad=False)
    return val[0] if single else val


def pullback(jac: np.ndarray, grad_xi: np.ndarray) -> np.ndarray:
    """Solve ``(dx/dxi)^T g_x = g_xi`` for the physical gradient, batched.

    ``grad_xi`` is ``(m, dim)`` for scalars or ``(m, c, dim)`` for vectors.
    """
    jt = np.swapaxes(jac, -1, -2)
    if grad_xi.ndim == 2:
        return np.linalg.solve(jt, grad_xi[..., None])[..., 0]
    # each row of a vector field pulls back independently
    return np.swapaxes(np.linalg.solve(jt, np.swapaxes(grad_xi, -1, -2)), -1, -2)


def phi_with_gradient(field, xi: np.ndarray, geometry: ControlNet | None = None):
    """Value, physical gradient, |det J| and singular mask on an ``(m, 2)`` batch.

    Samples with ``|det J| <= DET_EPSILON`` get a zero gradient and are
    flagged in the returned mask instead of raising.  Works for scalar and
    vector fields.
    """
    geometry = field.geometry if geometry is None else geometry
    pts, _ = as_points(xi, geometry.dim)
    _, jac = rational_eval(geometry, geometry.points, pts, with_grad=True)
    det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
    singular = np.abs(det) <= DET_EPSILON
    val, gxi = rational_eval(field.geometry, field.coefficients, pts, with_grad=True)
    out = np.zeros_like(gxi)
    ok = ~singular
    if np.any(ok):
        out[ok] = pullback(jac[ok], gxi[ok])
    return val, out, np.abs(det), singular


def grad_phi_physical(field: AdmissibleScalarField, geometry: ControlNet, xi) -> np.ndarray:
    """Physical gradient ``(dx/dxi)^{-T} grad_xi phi``.

    Raises :class:`SingularJacobian` if any requested point sits where the
    geometry map degenerates.
    """
    pts, single = as_points(xi, geometry.dim)
    _, g, det, singular = phi_with_gradient(field, pts, geometry)
    if np.any(singular):
        k = int(np.argmax(singular))
        raise SingularJacobian(f"|det J| = {det[k]:.3e} at xi = {pts[k].tolist()}")
    return g[0] if single else g


def grad_zeta_physical(field: AdmissibleVectorField, geometry: ControlNet, xi) -> np.ndarray:
    """Physical gradient of a vector field; row ``c`` is the gradient of component ``c``."""
    pts, single = as_points(xi, geometry.dim)
    _, g, det, singular = phi_with_gradient(field, pts, geometry)
    if np.any(singular):
        k = int(np.argmax(singular))
        raise SingularJacobian(f"|det J| = {det[k]:.3e} at xi = {pts[k].tolist()}")
    return g[0] if single else g


def build_admissible_scalar(
    geometry: ControlNet,
    dirichlet_edges: Iterable[str],
    interior_fill: float | str = 1.0,
    seed: int | None = None,
    seam_axis: int | None = None,
) -> AdmissibleScalarField:
    """Coefficient grid with one zeroed boundary row/column per Dirichlet edge.

    ``interior_fill`` is a constant or ``"random"`` (uniform in (0, 1],
    reproducible through ``seed``).  For closed parametrizations whose two
    ``seam_axis`` ends map onto the same physical curve, the first and last
    slabs are tied so the field stays continuous across the seam.
    """
    if geometry.dim != 2:
        raise ValueError("admissible fields are built on 2D geometries")
    edges = _normalize_edges(dirichlet_edges)
    shape = geometry.shape
    if interior_fill == "random":
        rng = np.random.default_rng(seed)
        coeffs = 1.0 - rng.random(shape)
    else:
        coeffs = np.full(shape, float(interior_fill))
    if seam_axis is not None:
        first = [slice(None)] * 2
        last = [slice(None)] * 2
        first[seam_axis], last[seam_axis] = 0, -1
        coeffs[tuple(last)] = coeffs[tuple(first)]
    for e in edges:
        coeffs[_edge_slab(shape, e)] = 0.0
    if not np.any(coeffs != 0.0):
        raise ValueError(f"grid {shape} has no interior coefficient once edges {edges} are zeroed")
    return AdmissibleScalarField(geometry, coeffs, edges)


def build_admissible_vector(
    geometry: ControlNet,
    dirichlet_edges: Iterable[str],
    boundary_value: Callable[[np.ndarray], np.ndarray],
) -> AdmissibleVectorField:
    """Lift of Dirichlet data by direct assignment at boundary control points.

    Boundary coefficients take ``boundary_value`` evaluated at the matching
    control point, interior coefficients are 0.  This is exact at parametric
    corners (which open knots interpolate) and only approximate in between.
    """
    edges = _normalize_edges(dirichlet_edges)
    sample = np.asarray(boundary_value(geometry.points.reshape(-1, geometry.phys_dim)[:1]))
    ncomp = sample.shape[-1] if sample.ndim > 1 else 1
    coeffs = np.zeros(geometry.shape + (ncomp,))
    for e in edges:
        slab = _edge_slab(geometry.shape, e)
        pts = geometry.points[slab]
        vals = np.asarray(boundary_value(pts.reshape(-1, geometry.phys_dim)), dtype=float)
        coeffs[slab] = vals.reshape(pts.shape[:-1] + (ncomp,))
    return AdmissibleVectorField(geometry, coeffs, edges)


@dataclass(frozen=True)
class AdmissibilityReport:
    max_boundary_abs: float
    passed: bool


def validate_admissibility(
    field: AdmissibleScalarField, samples_per_edge: int = 1000, tol: float = 1e-12
) -> AdmissibilityReport:
    """Check ``|phi|`` on uniformly spaced points of every Dirichlet edge."""
    if samples_per_edge < 2:
        raise ValueError("samples_per_edge must be at least 2")
    t = np.linspace(0.0, 1.0, samples_per_edge)
    worst = 0.0
    for e in field.dirichlet_edges:
        worst = max(worst, float(np.max(np.abs(eval_phi(field, edge_points(e, t))))))
    return AdmissibilityReport(worst, worst < tol)
