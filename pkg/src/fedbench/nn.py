"""Minimal neural-network engine over a flat parameter vector.

Supports dense, LSTM and dropout layers, forward evaluation, MSE and
cross-entropy losses, and exact reverse-mode gradients. All math is float64
and every operation is a pure function of ``(spec, params, batch, seed)``,
which keeps training reproducible and makes finite-difference checks tight.

Parameter layout (the order of slices inside the flat vector):

* ``Dense(in, out)`` -> ``W`` (in*out, row-major) then ``b`` (out)
* ``Lstm(d, h)``     -> ``W`` (4h*d), ``U`` (4h*h), ``b`` (4h); gate order is
  input, forget, cell, output along the leading 4h axis
* ``Dropout``        -> no parameters
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from numba import njit

__all__ = [
    "Dense",
    "Lstm",
    "Dropout",
    "InputShape",
    "ModelSpec",
    "ParamVector",
    "Batch",
    "SpecError",
    "NumericError",
    "param_count",
    "build_model",
    "forward",
    "loss",
    "gradient",
    "loss_and_gradient",
]


class SpecError(ValueError):
    """Raised for inconsistent architecture descriptors."""


class NumericError(RuntimeError):
    """Raised when an activation or loss turns non-finite.

    Carries the index of the offending layer in ``layer_index`` (-1 when the
    problem is in the loss itself).
    """

    def __init__(self, message: str, layer_index: int):
        super().__init__(f"{message} (layer {layer_index})")
        self.layer_index = layer_index


@dataclass(frozen=True)
class Dense:
    in_dim: int
    out_dim: int
    activation: str = "linear"  # relu | linear | softmax


@dataclass(frozen=True)
class Lstm:
    in_dim: int
    hidden_dim: int
    # "last_state" emits the final hidden state (a flat vector);
    # "sequence" emits the hidden state at every timestep, for stacking.
    return_mode: str = "last_state"


@dataclass(frozen=True)
class Dropout:
    rate: float


Layer = Union[Dense, Lstm, Dropout]


@dataclass(frozen=True)
class InputShape:
    """Input geometry: flat feature vectors or fixed-length sequences."""

    dim: int
    length: int | None = None

    @property
    def is_sequence(self) -> bool:
        return self.length is not None

    @staticmethod
    def flat(dim: int) -> "InputShape":
        return InputShape(dim=dim)

    @staticmethod
    def sequence(length: int, dim: int) -> "InputShape":
        return InputShape(dim=dim, length=length)


@dataclass(frozen=True)
class ModelSpec:
    """Ordered layer list plus input geometry; validated on construction."""

    layers: tuple[Layer, ...]
    input_shape: InputShape

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        _validate(self)

    @property
    def output_kind(self) -> str:
        """"classification" when the head is a softmax, else "regression"."""
        last = self.layers[-1]
        if isinstance(last, Dense) and last.activation == "softmax":
            return "classification"
        return "regression"

    @property
    def output_dim(self) -> int:
        shape = _shape_after(self, len(self.layers))
        return shape[-1]


def _validate(spec: ModelSpec) -> None:
    if not spec.layers:
        raise SpecError("model needs at least one layer")
    if spec.input_shape.dim < 1:
        raise SpecError("input dim must be positive")
    if spec.input_shape.is_sequence and spec.input_shape.length < 1:
        raise SpecError("sequence length must be positive")

    softmax_count = 0
    if spec.input_shape.is_sequence:
        shape = ("seq", spec.input_shape.length, spec.input_shape.dim)
    else:
        shape = ("flat", spec.input_shape.dim)

    for i, layer in enumerate(spec.layers):
        last = i == len(spec.layers) - 1
        if isinstance(layer, Dense):
            if layer.activation not in ("relu", "linear", "softmax"):
                raise SpecError(f"unknown activation {layer.activation!r} (layer {i})")
            if layer.activation == "softmax":
                softmax_count += 1
                if not last:
                    raise SpecError(f"softmax only allowed on the final layer (layer {i})")
            if shape[0] != "flat":
                raise SpecError(f"dense layer {i} needs a flat input, got a sequence")
            if shape[1] != layer.in_dim:
                raise SpecError(
                    f"dense layer {i} expects in_dim={layer.in_dim}, previous dim is {shape[1]}"
                )
            if layer.out_dim < 1:
                raise SpecError(f"dense layer {i} out_dim must be positive")
            shape = ("flat", layer.out_dim)
        elif isinstance(layer, Lstm):
            if layer.return_mode not in ("last_state", "sequence"):
                raise SpecError(f"unknown LSTM return mode {layer.return_mode!r} (layer {i})")
            if shape[0] != "seq":
                raise SpecError(f"lstm layer {i} needs a sequence input")
            if shape[2] != layer.in_dim:
                raise SpecError(
                    f"lstm layer {i} expects in_dim={layer.in_dim}, previous dim is {shape[2]}"
                )
            if layer.hidden_dim < 1:
                raise SpecError(f"lstm layer {i} hidden_dim must be positive")
            if layer.return_mode == "sequence":
                shape = ("seq", shape[1], layer.hidden_dim)
            else:
                shape = ("flat", layer.hidden_dim)
        elif isinstance(layer, Dropout):
            if not 0.0 <= layer.rate < 1.0:
                raise SpecError(f"dropout rate must be in [0, 1), got {layer.rate} (layer {i})")
            if last:
                raise SpecError("dropout cannot be the final layer")
        else:
            raise SpecError(f"unknown layer kind {type(layer).__name__}")
    if softmax_count > 1:
        raise SpecError("at most one softmax layer is allowed")


def _shape_after(spec: ModelSpec, upto: int):
    """Shape tuple after applying the first `upto` layers."""
    if spec.input_shape.is_sequence:
        shape = ("seq", spec.input_shape.length, spec.input_shape.dim)
    else:
        shape = ("flat", spec.input_shape.dim)
    for layer in spec.layers[:upto]:
        if isinstance(layer, Dense):
            shape = ("flat", layer.out_dim)
        elif isinstance(layer, Lstm):
            if layer.return_mode == "sequence":
                shape = ("seq", shape[1], layer.hidden_dim)
            else:
                shape = ("flat", layer.hidden_dim)
    return shape


def _layer_param_count(layer: Layer) -> int:
    if isinstance(layer, Dense):
        return (layer.in_dim + 1) * layer.out_dim
    if isinstance(layer, Lstm):
        return 4 * layer.hidden_dim * (layer.in_dim + layer.hidden_dim + 1)
    return 0


def param_count(spec: ModelSpec) -> int:
    """Analytic number of trainable scalars for the spec."""
    return sum(_layer_param_count(layer) for layer in spec.layers)


def layout(spec: ModelSpec) -> tuple[tuple[int, int], ...]:
    """Per-layer (offset, length) slices into the flat vector."""
    out = []
    offset = 0
    for layer in spec.layers:
        n = _layer_param_count(layer)
        out.append((offset, n))
        offset += n
    return tuple(out)


@dataclass
class ParamVector:
    """Flat, ordered vector of all trainable weights plus its layer layout."""

    values: np.ndarray
    layout: tuple[tuple[int, int], ...]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).ravel()

    def view(self, layer_index: int) -> np.ndarray:
        """Writable slice of the weights belonging to one layer."""
        offset, n = self.layout[layer_index]
        return self.values[offset : offset + n]

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.layout)

    def __len__(self) -> int:
        return self.values.size


@dataclass
class Batch:
    """Inputs of shape (n, d) or (n, T, d) with aligned targets.

    Regression targets are a vector of length n; classification targets are
    a one-hot matrix whose rows sum to 1.
    """

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        if self.inputs.shape[0] < 1:
            raise SpecError("batch needs at least one sample")
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise SpecError("inputs and targets disagree on sample count")

    @property
    def n(self) -> int:
        return self.inputs.shape[0]


def check_batch(spec: ModelSpec, batch: Batch) -> None:
    """Raise SpecError when batch geometry does not match the model."""
    if spec.input_shape.is_sequence:
        want = (spec.input_shape.length, spec.input_shape.dim)
        if batch.inputs.ndim != 3 or batch.inputs.shape[1:] != want:
            raise SpecError(f"expected inputs (n, {want[0]}, {want[1]}), got {batch.inputs.shape}")
    else:
        if batch.inputs.ndim != 2 or batch.inputs.shape[1] != spec.input_shape.dim:
            raise SpecError(
                f"expected inputs (n, {spec.input_shape.dim}), got {batch.inputs.shape}"
            )
    if spec.output_kind == "classification":
        if batch.targets.ndim != 2 or batch.targets.shape[1] != spec.output_dim:
            raise SpecError("classification targets must be one-hot (n, k)")
        if not np.allclose(batch.targets.sum(axis=1), 1.0):
            raise SpecError("one-hot target rows must sum to 1")
    else:
        if batch.targets.ndim != 1:
            raise SpecError("regression targets must be a flat vector")


def build_model(spec: ModelSpec, seed: int) -> ParamVector:
    """Initialize a parameter vector for the spec, deterministically.

    Weights use a uniform fan-based (Glorot-style) range; biases start at
    zero except the LSTM forget gate, which starts at one.
    """
    rng = np.random.default_rng(seed)
    values = np.zeros(param_count(spec), dtype=np.float64)
    params = ParamVector(values, layout(spec))
    for i, layer in enumerate(spec.layers):
        block = params.view(i)
        if isinstance(layer, Dense):
            nw = layer.in_dim * layer.out_dim
            limit = np.sqrt(6.0 / (layer.in_dim + layer.out_dim))
            block[:nw] = rng.uniform(-limit, limit, size=nw)
            # bias slice stays zero
        elif isinstance(layer, Lstm):
            d, h = layer.in_dim, layer.hidden_dim
            nw, nu = 4 * h * d, 4 * h * h
            block[:nw] = rng.uniform(-np.sqrt(6.0 / (4 * h + d)), np.sqrt(6.0 / (4 * h + d)), nw)
            block[nw : nw + nu] = rng.uniform(
                -np.sqrt(6.0 / (4 * h + h)), np.sqrt(6.0 / (4 * h + h)), nu
            )
            bias = block[nw + nu :]
            bias[:] = 0.0
            bias[h : 2 * h] = 1.0  # forget gate opens at init
    return params


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form: stable for any magnitude, one vectorized call
    return 0.5 * np.tanh(0.5 * x) + 0.5


@njit(cache=True, nogil=True)
def _lstm_fwd_kernel(xproj, Ut, hs, cs, gates):
    """Sequential LSTM recurrence. xproj carries x_t @ W.T + b per step;
    hs/cs/gates are written in place."""
    T, n, h4 = xproj.shape
    h = h4 // 4
    for t in range(T):
        z = np.dot(hs[t], Ut)
        for i in range(n):
            for j in range(h):
                zi = z[i, j] + xproj[t, i, j]
                zf = z[i, h + j] + xproj[t, i, h + j]
                zg = z[i, 2 * h + j] + xproj[t, i, 2 * h + j]
                zo = z[i, 3 * h + j] + xproj[t, i, 3 * h + j]
                ig = 0.5 * math.tanh(0.5 * zi) + 0.5
                fg = 0.5 * math.tanh(0.5 * zf) + 0.5
                gg = math.tanh(zg)
                og = 0.5 * math.tanh(0.5 * zo) + 0.5
                c = fg * cs[t, i, j] + ig * gg
                cs[t + 1, i, j] = c
                hs[t + 1, i, j] = og * math.tanh(c)
                gates[t, i, j] = ig
                gates[t, i, h + j] = fg
                gates[t, i, 2 * h + j] = gg
                gates[t, i, 3 * h + j] = og


@njit(cache=True, nogil=True)
def _lstm_bwd_kernel(gates, cs, U, g_ext, g_last, use_seq_grad, dzs):
    """Backpropagation through time; fills dzs (gate pre-activation grads)."""
    T, n, h4 = gates.shape
    h = h4 // 4
    dh_rec = np.zeros((n, h))
    dc_rec = np.zeros((n, h))
    for t in range(T - 1, -1, -1):
        for i in range(n):
            for j in range(h):
                dh = dh_rec[i, j]
                if use_seq_grad:
                    dh += g_ext[t, i, j]
                elif t == T - 1:
                    dh += g_last[i, j]
                ig = gates[t, i, j]
                fg = gates[t, i, h + j]
                gg = gates[t, i, 2 * h + j]
                og = gates[t, i, 3 * h + j]
                tc = math.tanh(cs[t + 1, i, j])
                dc = dh * og * (1.0 - tc * tc) + dc_rec[i, j]
                dzs[t, i, j] = dc * gg * ig * (1.0 - ig)
                dzs[t, i, h + j] = dc * cs[t, i, j] * fg * (1.0 - fg)
                dzs[t, i, 2 * h + j] = dc * ig * (1.0 - gg * gg)
                dzs[t, i, 3 * h + j] = dh * tc * og * (1.0 - og)
                dc_rec[i, j] = dc * fg
        dh_rec = np.dot(dzs[t], U)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    ez = np.exp(shifted)
    return ez / ez.sum(axis=1, keepdims=True)


def _unpack_dense(layer: Dense, block: np.ndarray):
    nw = layer.in_dim * layer.out_dim
    W = block[:nw].reshape(layer.in_dim, layer.out_dim)
    b = block[nw:]
    return W, b


def _unpack_lstm(layer: Lstm, block: np.ndarray):
    d, h = layer.in_dim, layer.hidden_dim
    nw, nu = 4 * h * d, 4 * h * h
    W = block[:nw].reshape(4 * h, d)
    U = block[nw : nw + nu].reshape(4 * h, h)
    b = block[nw + nu :]
    return W, U, b


def _forward(spec: ModelSpec, params: ParamVector, inputs: np.ndarray, train: bool, seed: int):
    """Run the network and keep every intermediate needed for backprop.

    Returns (output, caches) where caches[i] is the record for layer i.
    """
    if len(params) != param_count(spec):
        raise SpecError(
            f"parameter vector length {len(params)} != analytic count {param_count(spec)}"
        )
    rng = np.random.default_rng(seed) if train else None
    x = np.asarray(inputs, dtype=np.float64)
    caches = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            W, b = _unpack_dense(layer, params.view(i))
            z = x @ W + b
            if layer.activation == "relu":
                out = np.maximum(z, 0.0)
            elif layer.activation == "softmax":
                out = _softmax(z)
            else:
                out = z
            caches.append(("dense", x, z))
            x = out
        elif isinstance(layer, Lstm):
            W, U, b = _unpack_lstm(layer, params.view(i))
            h = layer.hidden_dim
            n, T, _ = x.shape
            hs = np.zeros((T + 1, n, h))
            cs = np.zeros((T + 1, n, h))
            gates = np.zeros((T, n, 4 * h))
            # input projections for every timestep in one matmul
            xproj = np.ascontiguousarray(
                ((x.reshape(n * T, -1) @ W.T) + b).reshape(n, T, 4 * h).transpose(1, 0, 2)
            )
            _lstm_fwd_kernel(xproj, np.ascontiguousarray(U.T), hs, cs, gates)
            caches.append(("lstm", x, hs, cs, gates))
            if layer.return_mode == "sequence":
                x = hs[1:].transpose(1, 0, 2)
            else:
                x = hs[-1]
        else:  # Dropout
            if train and layer.rate > 0.0:
                mask = (rng.random(x.shape) >= layer.rate) / (1.0 - layer.rate)
            else:
                mask = None
            caches.append(("dropout", mask))
            x = x if mask is None else x * mask
        if not np.all(np.isfinite(x)):
            raise NumericError("non-finite activation", layer_index=i)
    return x, caches


def forward(
    spec: ModelSpec,
    params: ParamVector,
    batch: Batch | np.ndarray,
    train: bool = False,
    seed: int = 0,
) -> np.ndarray:
    """Evaluate the model on a batch; dropout is active only when training.

    Regression output is (n, 1); classification output is (n, k) with rows
    summing to 1.
    """
    inputs = batch.inputs if isinstance(batch, Batch) else batch
    if isinstance(batch, Batch):
        check_batch(spec, batch)
    out, _ = _forward(spec, params, inputs, train, seed)
    return out


def _loss_from_output(spec: ModelSpec, caches, out: np.ndarray, targets: np.ndarray) -> float:
    n = out.shape[0]
    if spec.output_kind == "classification":
        # cross-entropy from logits (log-sum-exp) for stability
        _, _, z = caches[-1]
        shifted = z - z.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        value = -float((targets * log_probs).sum()) / n
    else:
        value = float(np.mean((out.ravel() - targets.ravel()) ** 2))
    if not np.isfinite(value):
        raise NumericError("non-finite loss", layer_index=-1)
    return value


def loss(
    spec: ModelSpec,
    params: ParamVector,
    batch: Batch,
    train: bool = False,
    seed: int = 0,
) -> float:
    """Mean squared error for regression heads, mean cross-entropy for softmax."""
    check_batch(spec, batch)
    out, caches = _forward(spec, params, batch.inputs, train, seed)
    return _loss_from_output(spec, caches, out, batch.targets)


def loss_and_gradient(
    spec: ModelSpec,
    params: ParamVector,
    batch: Batch,
    train: bool = False,
    seed: int = 0,
) -> tuple[float, ParamVector]:
    """Single reverse-mode pass; the gradient shares the params' layout."""
    check_batch(spec, batch)
    out, caches = _forward(spec, params, batch.inputs, train, seed)
    value = _loss_from_output(spec, caches, out, batch.targets)

    n = out.shape[0]
    grad_values = np.zeros_like(params.values)
    grads = ParamVector(grad_values, params.layout)

    if spec.output_kind == "classification":
        # fused softmax + cross-entropy: d(loss)/d(logits) = (p - y) / n
        g = (out - batch.targets) / n
        g_is_logit_grad = True
    else:
        g = (2.0 / out.size) * (out - batch.targets.reshape(out.shape))
        g_is_logit_grad = False

    for i in range(len(spec.layers) - 1, -1, -1):
        layer = spec.layers[i]
        cache = caches[i]
        if isinstance(layer, Dense):
            _, x, z = cache
            if layer.activation == "relu":
                g = g * (z > 0.0)
            elif layer.activation == "softmax" and not g_is_logit_grad:
                raise NotImplementedError("softmax grads only via the fused CE path")
            # linear and fused-softmax heads pass g through unchanged
            g_is_logit_grad = False
            block = grads.view(i)
            nw = layer.in_dim * layer.out_dim
            block[:nw] += (x.T @ g).ravel()
            block[nw:] += g.sum(axis=0)
            W, _ = _unpack_dense(layer, params.view(i))
            g = g @ W.T
        elif isinstance(layer, Lstm):
            _, x, hs, cs, gates = cache
            W, U, b = _unpack_lstm(layer, params.view(i))
            h = layer.hidden_dim
            nb, T, _ = x.shape
            if layer.return_mode == "sequence":
                g_ext = np.ascontiguousarray(g.transpose(1, 0, 2))
            else:
                g_ext = None
                g_last = g
            dzs = np.zeros((T, nb, 4 * h))
            if g_ext is not None:
                _lstm_bwd_kernel(gates, cs, U, g_ext, np.zeros((nb, h)), True, dzs)
            else:
                _lstm_bwd_kernel(
                    gates, cs, U, np.zeros((1, nb, h)), np.ascontiguousarray(g_last), False, dzs
                )
            # batched weight gradients over all timesteps
            dz_flat = dzs.transpose(1, 0, 2).reshape(nb * T, 4 * h)
            x_flat = x.reshape(nb * T, -1)
            dW = dz_flat.T @ x_flat
            dU = dzs.reshape(T * nb, 4 * h).T @ hs[:T].reshape(T * nb, h)
            db = dz_flat.sum(axis=0)
            dx = (dz_flat @ W).reshape(nb, T, -1)
            block = grads.view(i)
            d = layer.in_dim
            nw, nu = 4 * h * d, 4 * h * h
            block[:nw] += dW.ravel()
            block[nw : nw + nu] += dU.ravel()
            block[nw + nu :] += db
            g = dx
        else:  # Dropout
            mask = cache[1]
            if mask is not None:
                g = g * mask
    return value, grads


def gradient(
    spec: ModelSpec,
    params: ParamVector,
    batch: Batch,
    train: bool = False,
    seed: int = 0,
) -> ParamVector:
    """d(loss)/d(params), same length and layout as ``params``."""
    _, grads = loss_and_gradient(spec, params, batch, train=train, seed=seed)
    return grads
