"""Adam with bias-corrected moment estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteGradient


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8


@dataclass(frozen=True)
class TrainState:
    """Flat parameters, moment accumulators and the index of the next update (from 1)."""

    theta: np.ndarray
    m: np.ndarray
    v: np.ndarray
    step: int = 1

    @classmethod
    def start(cls, theta) -> "TrainState":
        theta = np.array(theta, dtype=float)
        return cls(theta, np.zeros_like(theta), np.zeros_like(theta), 1)


def adam_step(state: TrainState, grad, config=AdamConfig()) -> TrainState:
    """One Adam update; ``config`` needs learning_rate, beta1, beta2, epsilon."""
    g = np.asarray(grad, dtype=float)
    if g.shape != state.theta.shape:
        raise ValueError(f"gradient shape {g.shape} != parameter shape {state.theta.shape}")
    bad = ~np.isfinite(g)
    if np.any(bad):
        raise NonFiniteGradient(
            f"{int(bad.sum())} non-finite gradient entries at step {state.step}",
            step=state.step,
            bad_count=int(bad.sum()),
        )
    b1, b2, i = config.beta1, config.beta2, state.step
    m = b1 * state.m + (1.0 - b1) * g
    v = b2 * state.v + (1.0 - b2) * g * g
    m_hat = m / (1.0 - b1**i)
    v_hat = v / (1.0 - b2**i)
    theta = state.theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.epsilon)
    return TrainState(theta, m, v, i + 1)
