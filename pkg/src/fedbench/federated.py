"""Cross-silo federated training: partitioning, round-based local updates,
sample-weighted aggregation and the adaptive server step.

Clients are simulated in-process but the information flow is the real one:
the only values crossing the client boundary are flat parameter vectors
(broadcast down, deltas up). Within a round clients are independent and may
run on a thread pool; aggregation reduces in ascending client-key order so
results do not depend on scheduling.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import nn, optim
from .training import derive_rng, run_epochs

__all__ = [
    "ClientDataset",
    "FederatedPlan",
    "RoundRecord",
    "RoundHistory",
    "RoundError",
    "partition_by_key",
    "local_update",
    "aggregate",
    "run_federated",
]


class RoundError(RuntimeError):
    """Training failure inside a round; carries round index and client key."""

    def __init__(self, message: str, round_idx: int, client_key):
        super().__init__(f"round {round_idx}, client {client_key!r}: {message}")
        self.round_idx = round_idx
        self.client_key = client_key


@dataclass
class ClientDataset:
    """One silo: training batch, a small held-out tracking batch, and a key."""

    key: str
    train: nn.Batch
    eval: nn.Batch | None = None

    @property
    def n_train(self) -> int:
        return self.train.n


@dataclass(frozen=True)
class FederatedPlan:
    """Everything defining one federated run."""

    rounds: int
    local_epochs: int
    client_opt: optim.OptimizerState
    server_opt: optim.OptimizerState
    client_lr_schedule: optim.LrSchedule | None = None
    batch_size: int | None = None  # None = full batch
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        if self.local_epochs < 1:
            raise ValueError("local_epochs must be at least 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise ValueError("batch_size must be positive or None for full batch")


@dataclass
class RoundRecord:
    round_idx: int
    client_lr: float
    server_lr: float
    delta_norm: float
    client_eval_loss: dict[str, float]
    client_eval_metric: dict[str, float] = field(default_factory=dict)


@dataclass
class RoundHistory:
    records: list[RoundRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)


def partition_by_key(
    inputs: np.ndarray,
    targets: np.ndarray,
    keys,
    eval_fraction: float = 0.1,
    seed: int = 0,
) -> list[ClientDataset]:
    """Split rows into one client per distinct key, ascending key order.

    Each client holds out `eval_fraction` of its rows (seed-deterministic)
    for tracking; those rows never train. The key values themselves are not
    part of the feature matrix.
    """
    keys = np.asarray(keys)
    if keys.shape[0] != inputs.shape[0]:
        raise ValueError("keys must align with rows")
    clients = []
    for key in sorted(set(keys.tolist())):
        rows = np.flatnonzero(keys == key)
        rng = derive_rng(seed, "partition", key)
        order = rng.permutation(rows.size)
        n_eval = int(rows.size * eval_fraction)
        n_train = rows.size - n_eval
        if n_train < 1:
            raise ValueError(f"partition {key!r} has no training rows")
        train_rows = rows[order[:n_train]]
        eval_rows = rows[order[n_train:]]
        train = nn.Batch(inputs[train_rows], targets[train_rows])
        ev = nn.Batch(inputs[eval_rows], targets[eval_rows]) if n_eval else None
        clients.append(ClientDataset(key=str(key), train=train, eval=ev))
    return clients


def local_update(
    client: ClientDataset,
    global_params: nn.ParamVector,
    spec: nn.ModelSpec,
    plan: FederatedPlan,
    round_idx: int,
) -> tuple[np.ndarray, int]:
    """Train the broadcast model on one client's data for E local epochs.

    Optimizer moments start fresh each round. Returns the parameter delta
    (local minus broadcast) and the client's training sample count; the
    broadcast vector is left untouched.
    """
    rng = derive_rng(plan.seed, "round", round_idx, client.key)
    state = plan.client_opt.fresh()
    try:
        values, _ = run_epochs(
            spec,
            global_params.values,
            client.train,
            state,
            plan.local_epochs,
            plan.batch_size,
            rng,
            lr_schedule=plan.client_lr_schedule,
            epoch_offset=round_idx * plan.local_epochs,
        )
    except nn.NumericError as err:
        raise RoundError(str(err), round_idx, client.key) from err
    return values - global_params.values, client.n_train


def aggregate(deltas: list[np.ndarray], weights: list[float], keys=None) -> np.ndarray:
    """Sample-weighted mean of client deltas, reduced in ascending key order.

    With `keys` given, the reduction order is tied to the sorted keys, so any
    permutation of the (delta, weight, key) triples gives a bit-identical
    result.
    """
    if len(deltas) != len(weights) or not deltas:
        raise ValueError("need equally many deltas and weights, at least one each")
    length = deltas[0].shape
    for d in deltas:
        if d.shape != length:
            raise ValueError("delta length mismatch")
    if any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    order = range(len(deltas)) if keys is None else sorted(range(len(deltas)), key=lambda i: keys[i])
    total = np.zeros_like(deltas[0])
    total_weight = 0.0
    for i in order:
        total += weights[i] * deltas[i]
        total_weight += weights[i]
    return total / total_weight


def _server_step(
    state: optim.OptimizerState, values: np.ndarray, delta: np.ndarray
) -> tuple[np.ndarray, optim.OptimizerState]:
    # The server ascends along the aggregated delta: plain optimizers see
    # its negation as the gradient, the adaptive server consumes it directly.
    if state.kind == "fedadam":
        return optim.fedadam_step(state, values, delta)
    if state.kind == "sgd":
        return optim.sgd_step(state, values, -delta)
    if state.kind == "adam":
        return optim.adam_step(state, values, -delta)
    raise ValueError(f"unknown server optimizer kind {state.kind!r}")


def run_federated(
    clients: list[ClientDataset],
    spec: nn.ModelSpec,
    plan: FederatedPlan,
    threads: int = 1,
) -> tuple[nn.ParamVector, RoundHistory]:
    """Round loop: broadcast, local updates, aggregate, server step.

    Deterministic for a fixed plan seed, independent of `threads`: client
    work is embarrassingly parallel and the reduction order is fixed by key.
    """
    if not clients:
        raise ValueError("need at least one client")
    keys = [c.key for c in clients]
    if len(set(keys)) != len(keys):
        raise ValueError("client keys must be unique")
    clients = sorted(clients, key=lambda c: c.key)

    params = nn.build_model(spec, plan.seed)
    server_state = plan.server_opt.fresh()
    history = RoundHistory()

    for r in range(plan.rounds):
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futures = [
                    pool.submit(local_update, c, params, spec, plan, r) for c in clients
                ]
                results = [f.result() for f in futures]
        else:
            results = [local_update(c, params, spec, plan, r) for c in clients]

        deltas = [delta for delta, _ in results]
        weights = [float(w) for _, w in results]
        agg = aggregate(deltas, weights, keys=[c.key for c in clients])
        new_values, server_state = _server_step(server_state, params.values, agg)
        params = nn.ParamVector(new_values, params.layout)
        if not np.all(np.isfinite(params.values)):
            raise RoundError("server parameters turned non-finite", r, "<server>")

        client_lr = (
            optim.schedule_lr(plan.client_lr_schedule, r * plan.local_epochs)
            if plan.client_lr_schedule is not None
            else plan.client_opt.lr
        )
        record = RoundRecord(
            round_idx=r,
            client_lr=client_lr,
            server_lr=plan.server_opt.lr,
            delta_norm=float(np.linalg.norm(agg)),
            client_eval_loss={},
        )
        for c in clients:
            if c.eval is None:
                continue
            record.client_eval_loss[c.key] = nn.loss(spec, params, c.eval)
            if spec.output_kind == "classification":
                probs = nn.forward(spec, params, c.eval)
                acc = float(
                    np.mean(probs.argmax(axis=1) == c.eval.targets.argmax(axis=1))
                )
                record.client_eval_metric[c.key] = acc
        history.records.append(record)

    return params, history
