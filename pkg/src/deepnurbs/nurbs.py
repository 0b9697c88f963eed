"""Tensor-product B-spline / NURBS evaluation.

All evaluators are vectorized over batches of parametric points: a point is
an array of shape ``(dim,)`` and a batch has shape ``(m, dim)``.  Curves
(``dim == 1``) also accept bare scalars or 1D arrays of parameters.

Conventions
-----------
* The last non-empty knot span is closed on the right, so ``N_n(1) == 1``.
* Any Cox-de Boor quotient with a zero denominator evaluates to 0.
* Rational forms use per-point weights ``w``: ``x = sum(N w p) / sum(N w)``.
  With ``w == 1`` this is the plain polynomial map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParametricDomainError

_AXES = "ijk"


@dataclass(frozen=True)
class KnotVector:
    """Open (clamped) knot vector of a given degree."""

    degree: int
    knots: tuple[float, ...]

    def __post_init__(self):
        p = self.degree
        U = np.asarray(self.knots, dtype=float)
        object.__setattr__(self, "knots", tuple(float(u) for u in U))
        if p < 0:
            raise ValueError(f"degree must be non-negative, got {p}")
        if U.ndim != 1 or U.size < 2 * p + 2:
            raise ValueError(f"need at least {2 * p + 2} knots for degree {p}, got {U.size}")
        if np.any(np.diff(U) < 0):
            raise ValueError("knots must be non-decreasing")
        if np.any(U[: p + 1] != U[0]) or np.any(U[-p - 1 :] != U[-1]):
            raise ValueError("knot vector is not open: end knots need multiplicity p+1")
        if U[0] != 0.0 or U[-1] != 1.0:
            raise ValueError("knot vector must span [0, 1]")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.knots)

    @property
    def num_basis(self) -> int:
        return len(self.knots) - self.degree - 1

    def greville(self) -> np.ndarray:
        """Greville abscissae; control values placed here reproduce linear functions."""
        U, p = self.array, self.degree
        if p == 0:
            return 0.5 * (U[:-1] + U[1:])
        return np.array([U[i + 1 : i + p + 1].mean() for i in range(self.num_basis)])


def make_open_knot_vector(degree: int, num_basis: int) -> KnotVector:
    """Clamped knot vector with uniformly spaced interior knots.

    >>> make_open_knot_vector(2, 4).knots
    (0.0, 0.0, 0.0, 0.5, 1.0, 1.0, 1.0)
    """
    if degree < 0:
        raise ValueError(f"degree must be non-negative, got {degree}")
    if num_basis < degree + 1:
        raise ValueError(
            f"num_basis={num_basis} is too small for a clamped degree-{degree} knot vector"
        )
    n_interior = num_basis - degree - 1
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    knots = np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])
    return KnotVector(degree, tuple(knots))


def _check_unit(xi: np.ndarray) -> None:
    if not np.all((xi >= 0.0) & (xi <= 1.0)):
        bad = xi[~((xi >= 0.0) & (xi <= 1.0))]
        raise ParametricDomainError(f"parametric coordinate outside [0, 1]: {bad.flat[0]!r}")


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros(np.broadcast(num, den).shape)
    np.divide(num, den, out=out, where=den != 0)
    return out


def _degree_tables(kv: KnotVector, xi: np.ndarray) -> list[np.ndarray]:
    """Cox-de Boor tables ``N_{i,q}(xi)`` for q = 0..p, each of shape (m, len(U)-q-1)."""
    U = kv.array
    x = xi[:, None]
    N = ((U[:-1] <= x) & (x < U[1:])).astype(float)
    spans = np.nonzero(U[:-1] < U[1:])[0]
    N[xi == U[-1], spans[-1]] = 1.0
    tables = [N]
    for q in range(1, kv.degree + 1):
        nq = len(U) - q - 1
        i = np.arange(nq)
        left = _safe_ratio(x - U[i], U[i + q] - U[i])
        right = _safe_ratio(U[i + q + 1] - x, U[i + q + 1] - U[i + 1])
        prev = tables[-1]
        tables.append(left * prev[:, :nq] + right * prev[:, 1 : nq + 1])
    return tables


def _derivative(kv: KnotVector, tables: list[np.ndarray], q: int, k: int) -> np.ndarray:
    # d^k N_{i,q} = q * (d^{k-1} N_{i,q-1} / (u_{i+q} - u_i) - d^{k-1} N_{i+1,q-1} / (u_{i+q+1} - u_{i+1}))
    if k == 0:
        return tables[q]
    m = tables[0].shape[0]
    nq = len(kv.knots) - q - 1
    if k > q:
        return np.zeros((m, nq))
    U = kv.array
    i = np.arange(nq)
    lower = _derivative(kv, tables, q - 1, k - 1)
    a = _safe_ratio(np.full(nq, float(q)), U[i + q] - U[i])
    b = _safe_ratio(np.full(nq, float(q)), U[i + q + 1] - U[i + 1])
    return a * lower[:, :nq] - b * lower[:, 1 : nq + 1]


def basis_with_derivatives(kv: KnotVector, xi, max_order: int = 0) -> list[np.ndarray]:
    """Dense basis values and derivatives up to ``max_order``.

    Returns a list whose k-th entry has shape ``(m, n+1)`` holding the k-th
    derivatives of all basis functions at the ``m`` parameters.
    """
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    _check_unit(xi)
    tables = _degree_tables(kv, xi)
    return [_derivative(kv, tables, kv.degree, k) for k in range(max_order + 1)]


def eval_basis(kv: KnotVector, xi) -> np.ndarray:
    """All basis values ``N_{i,p}(xi)``; shape ``(n+1,)`` for scalar input, else ``(m, n+1)``."""
    scalar = np.ndim(xi) == 0
    out = basis_with_derivatives(kv, xi, 0)[0]
    return out[0] if scalar else out


def eval_basis_derivative(kv: KnotVector, xi, order: int = 1) -> np.ndarray:
    """Derivatives of order 1 or 2 of all basis functions (zeros when order > degree)."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    scalar = np.ndim(xi) == 0
    out = basis_with_derivatives(kv, xi, order)[order]
    return out[0] if scalar else out


def contract(grid: np.ndarray, mats: Sequence[np.ndarray]) -> np.ndarray:
    """Contract a coefficient grid ``(*n, ...)`` with per-direction matrices ``(m, n_j)``."""
    axes = _AXES[: len(mats)]
    subs = ",".join(f"a{c}" for c in axes) + f",{axes}...->a..."
    return np.einsum(subs, *mats, grid)


@dataclass(frozen=True)
class ControlNet:
    """Tensor grid of control points and positive weights over open knot vectors.

    ``points`` has shape ``(n_1+1, ..., n_dim+1, phys_dim)`` and ``weights``
    the same shape without the trailing axis.
    """

    knot_vectors: tuple[KnotVector, ...]
    points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        kvs = tuple(self.knot_vectors)
        if not 1 <= len(kvs) <= 3:
            raise ValueError(f"parametric dimension must be 1, 2 or 3, got {len(kvs)}")
        pts = np.array(self.points, dtype=float)
        shape = tuple(kv.num_basis for kv in kvs)
        if pts.ndim == len(kvs):
            pts = pts[..., None]
        if pts.shape[:-1] != shape:
            raise ValueError(f"control grid has shape {pts.shape[:-1]}, knot vectors need {shape}")
        w = np.ones(shape) if self.weights is None else np.array(self.weights, dtype=float)
        if w.shape != shape:
            raise ValueError(f"weight grid has shape {w.shape}, expected {shape}")
        if not np.all(w > 0):
            raise ValueError("all weights must be strictly positive")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "knot_vectors", kvs)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return len(self.knot_vectors)

    @property
    def phys_dim(self) -> int:
        return self.points.shape[-1]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.points.shape[:-1]


@dataclass(frozen=True)
class JacobianSample:
    """``matrix[..., a, b] = dx_a / dxi_b`` and its determinant (NaN if not square)."""

    matrix: np.ndarray
    det: np.ndarray


def as_points(xi, dim: int) -> tuple[np.ndarray, bool]:
    """Normalize parametric input to a ``(m, dim)`` batch; flag single-point input."""
    xi = np.asarray(xi, dtype=float)
    if dim == 1 and xi.ndim <= 1 and not (xi.ndim == 1 and xi.shape == (1,)):
        single = xi.ndim == 0
        xi = xi.reshape(-1, 1)
        return xi, single
    single = xi.ndim == 1
    xi = np.atleast_2d(xi)
    if xi.shape[-1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got shape {xi.shape}")
    return xi, single


def rational_eval(net: ControlNet, coeffs: np.ndarray, xi: np.ndarray, with_grad: bool = True):
    """Evaluate ``sum(R_I c_I)`` with NURBS basis ``R = N w / W``.

    ``xi`` must already be an ``(m, dim)`` batch.  Returns ``(value, grad)``
    where ``value`` has shape ``(m, *extra)`` and ``grad`` has shape
    ``(m, *extra, dim)`` (``None`` when ``with_grad`` is false).
    """
    order = 1 if with_grad else 0
    per_dir = [basis_with_derivatives(kv, xi[:, j], order) for j, kv in enumerate(net.knot_vectors)]
    w = net.weights
    extra = coeffs.shape[net.dim :]
    cw = coeffs * w.reshape(w.shape + (1,) * len(extra))
    vals = [b[0] for b in per_dir]
    A = contract(cw, vals)
    W = contract(w, vals)
    Wb = W.reshape(W.shape + (1,) * len(extra))
    F = A / Wb
    if not with_grad:
        return F, None
    grads = []
    for j in range(net.dim):
        mats = [per_dir[k][1] if k == j else vals[k] for k in range(net.dim)]
        dA = contract(cw, mats)
        dW = contract(w, mats).reshape(Wb.shape)
        grads.append((dA - F * dW) / Wb)
    return F, np.stack(grads, axis=-1)


def eval_weight(net: ControlNet, xi) -> np.ndarray | float:
    """Weight function ``W(xi) = sum(N w)``."""
    pts, single = as_points(xi, net.dim)
    _check_unit(pts)
    vals = [basis_with_derivatives(kv, pts[:, j], 0)[0] for j, kv in enumerate(net.knot_vectors)]
    W = contract(net.weights, vals)
    return float(W[0]) if single else W


def eval_geometry(net: ControlNet, xi) -> np.ndarray:
    """Physical point(s) ``x = chi(xi)``."""
    pts, single = as_points(xi, net.dim)
    x, _ = rational_eval(net, net.points, pts, with_grad=False)
    return x[0] if single else x


def _det(mat: np.ndarray) -> np.ndarray:
    d = mat.shape[-1]
    if mat.shape[-2] != d:
        return np.full(mat.shape[:-2], np.nan)
    if d == 1:
        return mat[..., 0, 0].copy()
    if d == 2:
        return mat[..., 0, 0] * mat[..., 1, 1] - mat[..., 0, 1] * mat[..., 1, 0]
    a = mat
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )


def jacobian(net: ControlNet, xi) -> JacobianSample:
    """Jacobian ``dx/dxi`` of the geometry map via the rational quotient rule.

    A zero determinant is legal output (collapsed control edges).
    """
    pts, single = as_points(xi, net.dim)
    _, J = rational_eval(net, net.points, pts, with_grad=True)
    det = _det(J)
    if single:
        return JacobianSample(J[0], det[0])
    return JacobianSample(J, det)


def affine_net(
    lower: Sequence[float],
    upper: Sequence[float],
    degrees: Sequence[int] | int = 1,
    num_basis: Sequence[int] | int | None = None,
) -> ControlNet:
    """Net mapping the unit box affinely onto ``[lower, upper]``.

    Control points sit at the Greville abscissae, so any degree/refinement
    reproduces the affine map exactly.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = lower.size
    degrees = [degrees] * dim if np.ndim(degrees) == 0 else list(degrees)
    if num_basis is None:
        num_basis = [p + 1 for p in degrees]
    elif np.ndim(num_basis) == 0:
        num_basis = [num_basis] * dim
    kvs = tuple(make_open_knot_vector(p, n) for p, n in zip(degrees, num_basis))
    grids = np.meshgrid(*[kv.greville() for kv in kvs], indexing="ij")
    pts = np.stack([lower[j] + (upper[j] - lower[j]) * g for j, g in enumerate(grids)], axis=-1)
    return ControlNet(kvs, pts)
