"""Shared mini-batch training loop used by the centralized benchmarks and by
federated clients, so both paths consume data and RNG streams identically."""

from __future__ import annotations

import hashlib

import numpy as np

from . import nn, optim

__all__ = ["derive_rng", "epoch_batches", "run_epochs", "train_centralized"]


def derive_rng(*parts) -> np.random.Generator:
    """Deterministic generator from an arbitrary tuple of labels/seeds."""
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def epoch_batches(n: int, batch_size: int | None, rng: np.random.Generator):
    """Yield row-index arrays for one epoch.

    Full-batch mode (batch_size None or >= n) yields a single pass in natural
    order and consumes no randomness, which keeps full-batch runs exactly
    reproducible across contexts.
    """
    if batch_size is None or batch_size >= n:
        yield np.arange(n)
        return
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def run_epochs(
    spec: nn.ModelSpec,
    values: np.ndarray,
    train: nn.Batch,
    opt_state: optim.OptimizerState,
    epochs: int,
    batch_size: int | None,
    rng: np.random.Generator,
    lr_schedule: optim.LrSchedule | None = None,
    epoch_offset: int = 0,
) -> tuple[np.ndarray, optim.OptimizerState]:
    """Run `epochs` passes of gradient steps; returns new values and state."""
    values = values.copy()
    lay = nn.layout(spec)
    for e in range(epochs):
        if lr_schedule is not None:
            opt_state = opt_state.with_lr(optim.schedule_lr(lr_schedule, epoch_offset + e))
        for idx in epoch_batches(train.n, batch_size, rng):
            batch = nn.Batch(train.inputs[idx], train.targets[idx])
            dropout_seed = int(rng.integers(2**63))
            grad = nn.gradient(spec, nn.ParamVector(values, lay), batch, train=True, seed=dropout_seed)
            values, opt_state = optim.step(opt_state, values, grad.values)
    return values, opt_state


def train_centralized(
    spec: nn.ModelSpec,
    train: nn.Batch,
    epochs: int,
    optimizer: optim.OptimizerState,
    seed: int,
    batch_size: int | None = None,
    lr_schedule: optim.LrSchedule | None = None,
    init: nn.ParamVector | None = None,
    eval_batch: nn.Batch | None = None,
) -> tuple[nn.ParamVector, list[float]]:
    """Centralized benchmark trainer.

    Builds the model from `seed` (unless `init` given), trains for `epochs`,
    and optionally tracks the evaluation loss once per epoch. Returns the
    final parameters and the per-epoch eval-loss trace.
    """
    params = init.copy() if init is not None else nn.build_model(spec, seed)
    rng = derive_rng(seed, "centralized")
    values = params.values
    state = optimizer.fresh()
    trace: list[float] = []
    for e in range(epochs):
        values, state = run_epochs(
            spec, values, train, state, 1, batch_size, rng,
            lr_schedule=lr_schedule, epoch_offset=e,
        )
        if eval_batch is not None:
            trace.append(nn.loss(spec, nn.ParamVector(values, params.layout), eval_batch))
    return nn.ParamVector(values, params.layout), trace
