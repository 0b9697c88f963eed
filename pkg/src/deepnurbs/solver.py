"""Deep NURBS training: ``u = phi * net + zeta`` on the Monte Carlo energy.

The energy ``int(0.5 |grad u|^2 - f u) dx`` is estimated on parametric
samples weighted by ``|det J| / n``.  Only the network depends on the
parameters; ``phi``, its gradient and the quadrature weights are constants
of each batch.  The Deep Ritz baseline trains the bare network and adds a
penalty ``lambda * int(u^2) ds`` over the Dirichlet boundary.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .admissible import AdmissibleScalarField, AdmissibleVectorField, phi_with_gradient
from .autodiff import (
    MLPParams,
    Tensor,
    forward_with_input_grad,
    init_params,
    mlp_forward,
    value_and_grad_params,
)
from .errors import ConfigValidationError, EmptyBatch, NonFiniteGradient, ZeroReferenceNorm
from .nurbs import as_points, rational_eval
from .optim import TrainState, adam_step
from .problems import ProblemSpec
from .sampler import BoundaryBatch, SampleBatch, draw_batch, push_forward, sample_boundary

log = logging.getLogger(__name__)

MODES = ("deep_nurbs", "deep_ritz")
INIT_SCHEMES = ("fan_in_uniform", "pretrained_identity")


@dataclass(frozen=True)
class SolverConfig:
    mode: str = "deep_nurbs"
    hidden_layers: int = 1
    neurons: int = 50
    activation: str | None = None  # relu3 for deep_nurbs, tanh for deep_ritz
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    batch_size: int = 1024
    epochs: int = 2000
    seed: int = 0
    init: str = "fan_in_uniform"
    pretrain_steps: int = 2000
    penalty: float = 500.0
    boundary_batch_size: int = 256
    eval_interval: int = 50
    eval_resolution: int = 101

    def __post_init__(self):
        def bad(name, msg):
            raise ConfigValidationError(name, msg)

        if self.mode not in MODES:
            bad("mode", f"must be one of {MODES}, got {self.mode!r}")
        if self.activation is None:
            object.__setattr__(self, "activation", "relu3" if self.mode == "deep_nurbs" else "tanh")
        if self.activation not in ("relu3", "tanh"):
            bad("activation", f"must be relu3 or tanh, got {self.activation!r}")
        if self.init not in INIT_SCHEMES:
            bad("init", f"must be one of {INIT_SCHEMES}, got {self.init!r}")
        if not self.learning_rate > 0:
            bad("learning_rate", "must be positive")
        for name in ("beta1", "beta2"):
            if not 0.0 <= getattr(self, name) < 1.0:
                bad(name, "must lie in [0, 1)")
        if not self.epsilon > 0:
            bad("epsilon", "must be positive")
        for name in ("hidden_layers", "neurons", "batch_size", "epochs", "boundary_batch_size",
                     "eval_interval"):
            if getattr(self, name) < 1:
                bad(name, "must be at least 1")
        if self.eval_resolution < 2:
            bad("eval_resolution", "must be at least 2")
        if self.penalty < 0:
            bad("penalty", "must be non-negative")
        if self.pretrain_steps < 0:
            bad("pretrain_steps", "must be non-negative")

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (2,) + (self.neurons,) * self.hidden_layers + (1,)


@dataclass(frozen=True)
class Metrics:
    mse: float
    rel_l2: float
    l_inf: float

    def as_dict(self) -> dict:
        return {"mse": self.mse, "rel_l2": self.rel_l2, "l_inf": self.l_inf}


def relative_l2(pred: np.ndarray, ref: np.ndarray) -> float:
    norm = float(np.linalg.norm(ref))
    if norm == 0.0:
        raise ZeroReferenceNorm("reference has zero L2 norm")
    return float(np.linalg.norm(pred - ref)) / norm


def compute_metrics(u_eval, reference: np.ndarray, grid: np.ndarray | None = None) -> Metrics:
    """MSE, relative L2 and max error of a prediction against gridded reference values.

    ``u_eval`` is either an array of predictions or a callable applied to
    ``grid``.  A zero reference leaves ``rel_l2`` as NaN.
    """
    pred = np.asarray(u_eval(grid) if callable(u_eval) else u_eval, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if pred.shape != ref.shape:
        raise ValueError(f"prediction shape {pred.shape} != reference shape {ref.shape}")
    err = pred - ref
    try:
        rel = relative_l2(pred, ref)
    except ZeroReferenceNorm:
        rel = math.nan
    return Metrics(float(np.mean(err**2)), rel, float(np.max(np.abs(err))))


# --------------------------------------------------------------------------
# quadrature data


@dataclass(frozen=True)
class Quadrature:
    """Per-sample constants of one batch.

    ``weight`` is ``|det J| / n`` with skipped samples zeroed.
    """

    x: np.ndarray
    weight: np.ndarray
    phi: np.ndarray
    grad_phi: np.ndarray
    source: np.ndarray
    zeta: np.ndarray | None = None
    grad_zeta: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.x.shape[0]


def prepare_quadrature(problem: ProblemSpec, batch: SampleBatch,
                       zeta: AdmissibleVectorField | None = None) -> Quadrature:
    keep = ~batch.skipped
    if not np.any(keep):
        raise EmptyBatch("every sample in the batch was skipped")
    phi, gphi, _, singular = phi_with_gradient(problem.phi, batch.xi)
    skipped = batch.skipped | singular
    weight = np.where(skipped, 0.0, batch.det_abs) / batch.n
    z = gz = None
    if zeta is not None:
        zv, gzv, _, _ = phi_with_gradient(zeta, batch.xi)
        z, gz = zv[:, 0], gzv[:, 0, :]
    return Quadrature(batch.x, weight, phi, gphi, problem.source(batch.x), z, gz)


def compose_from_values(params: MLPParams, x, phi, grad_phi, zeta=None, grad_zeta=None):
    """``u = phi * net + zeta`` and ``grad u = net grad phi + phi grad net (+ grad zeta)``."""
    ubar, dubar = forward_with_input_grad(params, x)
    u = phi * ubar
    grads = [ubar * grad_phi[:, j] + phi * dubar[j] for j in range(len(dubar))]
    if zeta is not None:
        u = u + zeta
        grads = [g + grad_zeta[:, j] for j, g in enumerate(grads)]
    return u, grads


def compose_solution(phi: AdmissibleScalarField, zeta: AdmissibleVectorField | None,
                     params: MLPParams, xi):
    """Evaluate the admissible ansatz and its physical gradient at parametric points.

    Returns ``(u, grad_u)`` as NumPy arrays of shape ``(m,)`` and ``(m, 2)``
    (or a float and a ``(2,)`` array for a single point).  Singular samples
    raise :class:`SingularJacobian` through the field pullback.
    """
    from .admissible import grad_phi_physical, grad_zeta_physical

    pts, single = as_points(xi, 2)
    geometry = phi.geometry
    x, _ = rational_eval(geometry, geometry.points, pts, with_grad=False)
    phv, _ = rational_eval(geometry, phi.coefficients, pts, with_grad=False)
    gph = np.atleast_2d(grad_phi_physical(phi, geometry, pts))
    zv = gz = None
    if zeta is not None:
        zv = rational_eval(geometry, zeta.coefficients, pts, with_grad=False)[0][:, 0]
        gz = np.asarray(grad_zeta_physical(zeta, geometry, pts)).reshape(len(pts), -1, 2)[:, 0, :]
    u, grads = compose_from_values(params, x, phv, gph, zv, gz)
    g = np.stack([t.value for t in grads], axis=-1)
    if single:
        return float(u.value[0]), g[0]
    return u.value, g


def energy_estimate(u, grads, source, weight):
    """``sum(weight * (0.5 |grad u|^2 - f u))``; works on Tensors and arrays alike."""
    sq = grads[0] * grads[0]
    for g in grads[1:]:
        sq = sq + g * g
    return ((0.5 * sq - source * u) * weight).sum()


def energy_loss(params: MLPParams, quad: Quadrature) -> Tensor:
    u, grads = compose_from_values(params, quad.x, quad.phi, quad.grad_phi, quad.zeta, quad.grad_zeta)
    return energy_estimate(u, grads, quad.source, quad.weight)


def prepare_bare(problem: ProblemSpec, batch: SampleBatch) -> Quadrature:
    """Quadrature for the bare network (no admissible multiplier)."""
    if not np.any(~batch.skipped):
        raise EmptyBatch("every sample in the batch was skipped")
    weight = np.where(batch.skipped, 0.0, batch.det_abs) / batch.n
    m = batch.n
    return Quadrature(batch.x, weight, np.ones(m), np.zeros((m, 2)), problem.source(batch.x))


def deep_ritz_loss(params: MLPParams, quad: Quadrature, boundary: BoundaryBatch, penalty: float) -> Tensor:
    """Bare-network energy plus ``penalty * int(u^2) ds`` estimated on ``boundary``."""
    if boundary.n == 0:
        raise EmptyBatch("empty boundary batch")
    ubar, dubar = forward_with_input_grad(params, quad.x)
    energy = energy_estimate(ubar, dubar, quad.source, quad.weight)
    ub = mlp_forward(params, boundary.x)
    return energy + penalty * (ub * ub * boundary.weights).sum()


# --------------------------------------------------------------------------
# evaluation grid


@dataclass(frozen=True)
class EvalGrid:
    xi: np.ndarray
    x: np.ndarray
    phi: np.ndarray
    reference: np.ndarray | None


def make_eval_grid(problem: ProblemSpec, resolution: int = 101) -> EvalGrid:
    """Tensor grid in parametric space pushed to the physical domain."""
    t = np.linspace(0.0, 1.0, resolution)
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    xi = np.column_stack([T1.ravel(), T2.ravel()])
    geom = problem.geometry
    x, _ = rational_eval(geom, geom.points, xi, with_grad=False)
    phi, _ = rational_eval(geom, problem.phi.coefficients, xi, with_grad=False)
    ref = problem.reference_values(x) if problem.reference is not None else None
    return EvalGrid(xi, x, phi, ref)


def predict(params: MLPParams, grid: EvalGrid, mode: str = "deep_nurbs") -> np.ndarray:
    ubar = mlp_forward(params, grid.x).value
    return grid.phi * ubar if mode == "deep_nurbs" else ubar


# --------------------------------------------------------------------------
# training


@dataclass
class HistoryRow:
    epoch: int
    loss: float
    mse: float = math.nan
    rel_l2: float = math.nan
    l_inf: float = math.nan


@dataclass
class TrainResult:
    state: TrainState
    params: MLPParams
    history: list[HistoryRow] = field(default_factory=list)
    metrics: Metrics | None = None


def initial_params(config: SolverConfig, problem: ProblemSpec) -> MLPParams:
    pts = problem.geometry.points.reshape(-1, 2)
    box = (pts.min(axis=0), pts.max(axis=0))
    return init_params(config.layer_sizes, config.init, config.seed, config.activation,
                       config.pretrain_steps, box)


def make_loss(config: SolverConfig, problem: ProblemSpec, epoch: int) -> Callable[[MLPParams], Tensor]:
    """Loss closure for one epoch; the batch is seeded by ``seed + epoch``."""
    batch = draw_batch(problem.geometry, config.batch_size, config.seed + epoch)
    if config.mode == "deep_nurbs":
        quad = prepare_quadrature(problem, batch)
        return lambda p: energy_loss(p, quad)
    quad = prepare_bare(problem, batch)
    bnd = sample_boundary(problem.geometry, problem.dirichlet_edges, config.boundary_batch_size,
                          [config.seed + epoch, 1])
    return lambda p: deep_ritz_loss(p, quad, bnd, config.penalty)


def train(config: SolverConfig, problem: ProblemSpec, params: MLPParams | None = None,
          callback: Callable[[HistoryRow], None] | None = None) -> TrainResult:
    """Run ``config.epochs`` Adam steps, one fresh batch per epoch.

    Metrics are recorded every ``eval_interval`` epochs and at the last
    epoch when the problem has a reference.  Deterministic given the config.
    """
    params = initial_params(config, problem) if params is None else params
    grid = make_eval_grid(problem, config.eval_resolution) if problem.reference is not None else None
    state = TrainState.start(params.flatten())
    history: list[HistoryRow] = []
    metrics = None
    for epoch in range(1, config.epochs + 1):
        loss_fn = make_loss(config, problem, epoch)
        current = params.with_flat(state.theta)
        loss, g = value_and_grad_params(loss_fn, current)
        if not math.isfinite(loss):
            raise NonFiniteGradient(f"non-finite loss {loss!r} at epoch {epoch}", step=state.step)
        state = adam_step(state, g, config)
        row = HistoryRow(epoch, loss)
        if grid is not None and (epoch % config.eval_interval == 0 or epoch == config.epochs):
            metrics = compute_metrics(predict(params.with_flat(state.theta), grid, config.mode),
                                      grid.reference)
            row.mse, row.rel_l2, row.l_inf = metrics.mse, metrics.rel_l2, metrics.l_inf
            log.debug("epoch %d loss %.6e rel_l2 %.3e", epoch, loss, metrics.rel_l2)
        history.append(row)
        if callback is not None:
            callback(row)
    return TrainResult(state, params.with_flat(state.theta), history, metrics)


def boundary_max_abs(params: MLPParams, problem: ProblemSpec, n: int = 1000, seed: int = 0) -> float:
    """Largest ``|u|`` of the admissible ansatz over ``n`` Dirichlet-edge samples."""
    from .problems import boundary_parametric_points

    xi = boundary_parametric_points(problem, n, seed)
    batch = push_forward(problem.geometry, xi)
    phi, _ = rational_eval(problem.geometry, problem.phi.coefficients, xi, with_grad=False)
    u = phi * mlp_forward(params, batch.x).value
    return float(np.max(np.abs(u)))
