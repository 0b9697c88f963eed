"""Parametric Monte Carlo sampling and change-of-variables weights.

Points are drawn uniformly in the unit square and pushed through the
geometry map.  A physical integral is then estimated as
``(1/n) * sum(g(x_i) * |det J(xi_i)|)``, which clusters quadrature points
wherever the control net is dense (importance sampling for free).

Random numbers come from NumPy's PCG64 bit generator seeded through
``numpy.random.default_rng``; PCG64 streams are reproducible across
platforms.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .admissible import DET_EPSILON, edge_points, parse_edge
from .errors import EmptyBatch, SingularJacobian
from .nurbs import ControlNet, as_points, rational_eval


@dataclass(frozen=True)
class SampleBatch:
    xi: np.ndarray
    x: np.ndarray
    det_abs: np.ndarray
    skipped: np.ndarray
    jac: np.ndarray
    seed: int | None = None

    @property
    def n(self) -> int:
        return self.xi.shape[0]

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weights ``|det J| / n``, zero on skipped samples."""
        return np.where(self.skipped, 0.0, self.det_abs) / self.n


def sample_parametric(n: int, seed, dim: int = 2) -> np.ndarray:
    """``n`` i.i.d. uniform points in ``[0, 1]^dim``."""
    if n < 1:
        raise ValueError(f"batch size must be positive, got {n}")
    return np.random.default_rng(seed).random((n, dim))


def push_forward(geometry: ControlNet, xi, seed=None) -> SampleBatch:
    """Map parametric samples to the physical domain with their |det J|."""
    pts, _ = as_points(xi, geometry.dim)
    x, jac = rational_eval(geometry, geometry.points, pts, with_grad=True)
    det = np.abs(jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0])
    return SampleBatch(pts, x, det, det <= DET_EPSILON, jac, seed)


def draw_batch(geometry: ControlNet, n: int, seed) -> SampleBatch:
    return push_forward(geometry, sample_parametric(n, seed, geometry.dim), seed)


def density_at(geometry: ControlNet, xi) -> np.ndarray | float:
    """Physical sampling density ``1 / |det J|`` induced by uniform parametric draws."""
    pts, single = as_points(xi, geometry.dim)
    batch = push_forward(geometry, pts)
    if np.any(batch.skipped):
        k = int(np.argmax(batch.skipped))
        raise SingularJacobian(f"|det J| = {batch.det_abs[k]:.3e} at xi = {pts[k].tolist()}")
    rho = 1.0 / batch.det_abs
    return float(rho[0]) if single else rho


def integrate(integrand: Callable[[np.ndarray, np.ndarray], np.ndarray], batch: SampleBatch) -> float:
    """Monte Carlo estimate of the physical integral of ``integrand(x, xi)``.

    Skipped samples contribute 0 but still count towards ``n``.
    """
    keep = ~batch.skipped
    if not np.any(keep):
        raise EmptyBatch("every sample in the batch sits on a degenerate point")
    g = np.broadcast_to(np.asarray(integrand(batch.x, batch.xi), dtype=float), (batch.n,))
    return float(np.sum(g[keep] * batch.det_abs[keep]) / batch.n)


def integrate_standard_error(integrand, batch: SampleBatch) -> float:
    """Sample standard error of :func:`integrate` (same skipping rules)."""
    g = np.broadcast_to(np.asarray(integrand(batch.x, batch.xi), dtype=float), (batch.n,))
    terms = np.where(batch.skipped, 0.0, g * batch.det_abs)
    return float(np.std(terms, ddof=1) / np.sqrt(batch.n))


@dataclass(frozen=True)
class BoundaryBatch:
    """Samples on parametric edges with arclength quadrature weights.

    ``weights`` already include the factor (number of edges) / n so that
    ``sum(weights * g)`` estimates the boundary integral of ``g``.
    """

    xi: np.ndarray
    x: np.ndarray
    edge: np.ndarray
    speed: np.ndarray
    weights: np.ndarray

    @property
    def n(self) -> int:
        return self.xi.shape[0]


def sample_boundary(geometry: ControlNet, edges, n: int, seed) -> BoundaryBatch:
    """Uniform samples over the union of the given parametric edges."""
    edges = tuple(edges)
    if n < 1 or not edges:
        raise ValueError("need at least one edge and one sample")
    rng = np.random.default_rng(seed)
    which = rng.integers(0, len(edges), size=n)
    t = rng.random(n)
    xi = np.empty((n, 2))
    speed = np.empty(n)
    for k, e in enumerate(edges):
        sel = which == k
        xi[sel] = edge_points(e, t[sel])
    _, jac = rational_eval(geometry, geometry.points, xi, with_grad=True)
    for k, e in enumerate(edges):
        axis, _ = parse_edge(e)
        sel = which == k
        speed[sel] = np.linalg.norm(jac[sel][:, :, 1 - axis], axis=-1)
    x, _ = rational_eval(geometry, geometry.points, xi, with_grad=False)
    return BoundaryBatch(xi, x, which, speed, speed * len(edges) / n)


def write_batch_csv(batch: SampleBatch, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["xi1", "xi2", "x1", "x2", "det_abs", "skipped"])
        for xi, x, d, s in zip(batch.xi, batch.x, batch.det_abs, batch.skipped):
            w.writerow([repr(float(xi[0])), repr(float(xi[1])), repr(float(x[0])),
                        repr(float(x[1])), repr(float(d)), int(s)])
