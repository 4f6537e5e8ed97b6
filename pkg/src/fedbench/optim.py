"""Client- and server-side optimizers plus the staircase learning-rate schedule.

All steps are functional: they take an ``OptimizerState`` and a parameter
vector and return updated copies, never mutating their inputs. The server
optimizer consumes the aggregated client delta (the pseudo-gradient) and
moves the global model toward it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "OptimizerState",
    "LrSchedule",
    "sgd",
    "adam",
    "fedadam",
    "sgd_step",
    "adam_step",
    "fedadam_step",
    "schedule_lr",
]


@dataclass(frozen=True)
class OptimizerState:
    """Moment buffers and hyperparameters for one optimizer instance.

    ``epsilon`` doubles as the adaptivity floor tau for the server optimizer.
    ``m``/``v`` are lazily allocated on the first step so a state can serve
    as a dimension-free template.
    """

    kind: str  # sgd | adam | fedadam
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    step_count: int = 0

    def fresh(self) -> "OptimizerState":
        """Same hyperparameters, zeroed moments and step count."""
        return replace(self, m=None, v=None, step_count=0)

    def with_lr(self, lr: float) -> "OptimizerState":
        return replace(self, lr=lr)


def sgd(lr: float) -> OptimizerState:
    return OptimizerState(kind="sgd", lr=lr)


def adam(lr: float, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8) -> OptimizerState:
    return OptimizerState(kind="adam", lr=lr, beta1=beta1, beta2=beta2, epsilon=epsilon)


def fedadam(lr: float, beta1: float = 0.9, beta2: float = 0.99, tau: float = 1e-3) -> OptimizerState:
    """Server-side Adam over pseudo-gradients; tau damps tiny deltas."""
    return OptimizerState(kind="fedadam", lr=lr, beta1=beta1, beta2=beta2, epsilon=tau)


def _check_lengths(state: OptimizerState, params: np.ndarray, grad: np.ndarray) -> None:
    if params.shape != grad.shape:
        raise ValueError(f"params shape {params.shape} != gradient shape {grad.shape}")
    if state.m is not None and state.m.shape != params.shape:
        raise ValueError("optimizer moments do not match parameter length")


def _moments(state: OptimizerState, like: np.ndarray):
    m = state.m if state.m is not None else np.zeros_like(like)
    v = state.v if state.v is not None else np.zeros_like(like)
    return m, v


def sgd_step(
    state: OptimizerState, params: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, OptimizerState]:
    """params - lr * grad."""
    _check_lengths(state, params, grad)
    new_params = params - state.lr * grad
    return new_params, replace(state, step_count=state.step_count + 1)


def adam_step(
    state: OptimizerState, params: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, OptimizerState]:
    """Standard Adam with bias correction."""
    if state.kind != "adam":
        raise ValueError(f"adam_step needs an adam state, got {state.kind!r}")
    _check_lengths(state, params, grad)
    m, v = _moments(state, params)
    t = state.step_count + 1
    m = state.beta1 * m + (1.0 - state.beta1) * grad
    v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, m=m, v=v, step_count=t)


def fedadam_step(
    state: OptimizerState, server_params: np.ndarray, pseudo_gradient: np.ndarray
) -> tuple[np.ndarray, OptimizerState]:
    """Adaptive server update along the aggregated client delta.

    The pseudo-gradient is the sample-weighted mean of client deltas; the
    server ascends along it, normalizing each coordinate by the running
    second moment (no bias correction, matching the adaptive federated
    optimization formulation this mirrors).
    """
    if state.kind != "fedadam":
        raise ValueError(f"fedadam_step needs a fedadam state, got {state.kind!r}")
    _check_lengths(state, server_params, pseudo_gradient)
    m, v = _moments(state, server_params)
    m = state.beta1 * m + (1.0 - state.beta1) * pseudo_gradient
    v = state.beta2 * v + (1.0 - state.beta2) * pseudo_gradient * pseudo_gradient
    new_params = server_params + state.lr * m / (np.sqrt(v) + state.epsilon)
    return new_params, replace(state, m=m, v=v, step_count=state.step_count + 1)


def step(
    state: OptimizerState, params: np.ndarray, grad: np.ndarray
) -> tuple[np.ndarray, OptimizerState]:
    """Dispatch on state.kind; grad is a loss gradient (descent direction)."""
    if state.kind == "sgd":
        return sgd_step(state, params, grad)
    if state.kind == "adam":
        return adam_step(state, params, grad)
    raise ValueError(f"unknown client optimizer kind {state.kind!r}")


@dataclass(frozen=True)
class LrSchedule:
    """Staircase decay: lr(epoch) = base * factor^(epoch // every)."""

    base_lr: float
    decay_every: int
    decay_factor: float = 0.1

    def __post_init__(self):
        if self.base_lr <= 0:
            raise ValueError("base_lr must be positive")
        if self.decay_every < 1:
            raise ValueError("decay_every must be a positive epoch count")
        if self.decay_factor <= 0:
            raise ValueError("decay_factor must be positive")


def schedule_lr(schedule: LrSchedule, epoch: int) -> float:
    if epoch < 0:
        raise ValueError("epoch must be non-negative")
    return schedule.base_lr * schedule.decay_factor ** (epoch // schedule.decay_every)
