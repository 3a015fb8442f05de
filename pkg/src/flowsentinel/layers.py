"""Per-sample forward and backward passes for the layer stack.

Layer kinds: Conv1D (cross-correlation, stride 1, no padding), ReLU,
MaxPool1D (non-overlapping, odd remainder dropped), Flatten, Dense, Softmax.
Inputs are single samples shaped (length, channels); batching is the
trainer's job. Convolution and dense forward passes accumulate in ascending
index order (bias first, then ascending (channel, tap) / ascending column),
so they are bit-equal to naive loops.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, InternalError
from .tensor import Tensor, _matvec_arrays, fold_sum


@dataclass
class Conv1DLayer:
    weights: Tensor  # (filters, in_channels, kernel_size)
    bias: Tensor  # (filters,)
    in_channels: int
    filters: int
    kernel_size: int

    def __post_init__(self):
        expected = (self.filters, self.in_channels, self.kernel_size)
        if self.weights.shape != expected:
            raise DimensionError(
                f"conv weights must be {expected}, got {self.weights.shape}"
            )
        if self.bias.shape != (self.filters,):
            raise DimensionError(
                f"conv bias must be ({self.filters},), got {self.bias.shape}"
            )


@dataclass
class DenseLayer:
    weights: Tensor  # (out, in)
    bias: Tensor  # (out,)

    def __post_init__(self):
        if self.weights.rank != 2:
            raise DimensionError(
                f"dense weights must be rank 2, got {self.weights.shape}"
            )
        if self.bias.shape != (self.weights.shape[0],):
            raise DimensionError(
                f"dense bias must be ({self.weights.shape[0]},), "
                f"got {self.bias.shape}"
            )


@dataclass
class LayerGrads:
    d_weights: Tensor
    d_bias: Tensor
    d_input: Tensor


def _check_conv_input(layer: Conv1DLayer, x: Tensor) -> tuple[int, int]:
    if x.rank != 2 or x.shape[1] != layer.in_channels:
        raise DimensionError(
            f"conv input must be (length, {layer.in_channels}), got {x.shape}"
        )
    length = x.shape[0]
    if length < layer.kernel_size:
        raise DimensionError(
            f"input too short for kernel: length {length} < "
            f"kernel_size {layer.kernel_size}"
        )
    return length, length - layer.kernel_size + 1


def conv1d_forward(layer: Conv1DLayer, x: Tensor) -> Tensor:
    """out[t,f] = bias[f] + sum over ascending (c,k) of w[f,c,k]*x[t+k,c]."""
    _, t_out = _check_conv_input(layer, x)
    w = layer.weights.array
    filters, in_ch, k = w.shape
    windows = sliding_window_view(x.array, k, axis=0)  # (t_out, in_ch, k)
    # Stack one addend per (c,k) tap, bias first, then left-fold over axis 0.
    x_ck = windows.transpose(1, 2, 0).reshape(in_ch * k, t_out)
    w_ck = w.transpose(1, 2, 0).reshape(in_ch * k, filters)
    stack = np.empty((in_ch * k + 1, t_out, filters))
    stack[0] = layer.bias.array
    np.multiply(x_ck[:, :, None], w_ck[:, None, :], out=stack[1:])
    return Tensor._wrap(fold_sum(stack))


def conv1d_backward(layer: Conv1DLayer, x: Tensor, grad_out: Tensor) -> LayerGrads:
    length, t_out = _check_conv_input(layer, x)
    w = layer.weights.array
    filters, in_ch, k = w.shape
    if grad_out.shape != (t_out, filters):
        raise DimensionError(
            f"grad_out must be ({t_out}, {filters}), got {grad_out.shape}"
        )
    g = grad_out.array
    windows = sliding_window_view(x.array, k, axis=0)  # (t_out, in_ch, k)
    d_weights = np.einsum("tf,tck->fck", g, windows)
    d_bias = np.add.reduce(g, axis=0)
    d_input = np.zeros((length, in_ch))
    for tap in range(k):
        d_input[tap : tap + t_out] += np.einsum("tf,fc->tc", g, w[:, :, tap])
    return LayerGrads(
        d_weights=Tensor._wrap(d_weights),
        d_bias=Tensor._wrap(d_bias),
        d_input=Tensor._wrap(d_input),
    )


def maxpool1d_forward(x: Tensor, pool: int = 2) -> tuple[Tensor, np.ndarray]:
    """Non-overlapping max pooling; returns (pooled, flat argmax per cell).

    Stride equals the pool size; a trailing remainder shorter than the window
    is dropped. Ties go to the first (lowest) index.
    """
    if x.rank != 2:
        raise DimensionError(f"pool input must be rank 2, got {x.shape}")
    if pool < 1:
        raise DimensionError(f"pool size must be >= 1, got {pool}")
    length, channels = x.shape
    if length < pool:
        raise DimensionError(
            f"input too short to pool: length {length} < pool {pool}"
        )
    t_out = length // pool
    v = x.array[: t_out * pool].reshape(t_out, pool, channels)
    pooled = v.max(axis=1)
    within = v.argmax(axis=1)  # first index on ties
    rows = np.arange(t_out)[:, None] * pool + within
    argmax_indices = rows * channels + np.arange(channels)[None, :]
    return Tensor._wrap(pooled), argmax_indices


def maxpool1d_backward(
    argmax_indices: np.ndarray, grad_out: Tensor, input_shape: tuple[int, int]
) -> Tensor:
    """Route each output gradient to its recorded argmax position."""
    if grad_out.shape != argmax_indices.shape:
        raise DimensionError(
            f"grad_out {grad_out.shape} does not match argmax grid "
            f"{argmax_indices.shape}"
        )
    length, channels = input_shape
    total = length * channels
    idx = argmax_indices.reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= total):
        raise InternalError(
            f"argmax index outside input of shape {tuple(input_shape)}"
        )
    flat = np.zeros(total)
    np.add.at(flat, idx, grad_out.data)
    return Tensor._wrap(flat.reshape(length, channels))


def relu(x: Tensor) -> Tensor:
    return Tensor._wrap(np.maximum(x.array, 0.0))


def relu_backward(x: Tensor, grad_out: Tensor) -> Tensor:
    """Pass gradient where x > 0; the derivative at exactly 0 is 0."""
    if x.shape != grad_out.shape:
        raise DimensionError(
            f"relu grad shape mismatch: {x.shape} vs {grad_out.shape}"
        )
    return Tensor._wrap(np.where(x.array > 0.0, grad_out.array, 0.0))


def dense_forward(layer: DenseLayer, x: Tensor) -> Tensor:
    """y = W x + b, rows summed in ascending column order."""
    if x.rank != 1 or x.shape[0] != layer.weights.shape[1]:
        raise DimensionError(
            f"dense input must be ({layer.weights.shape[1]},), got {x.shape}"
        )
    return Tensor._wrap(_matvec_arrays(layer.weights.array, x.array) + layer.bias.array)


def dense_backward(layer: DenseLayer, x: Tensor, grad_out: Tensor) -> LayerGrads:
    out_dim, in_dim = layer.weights.shape
    if x.shape != (in_dim,):
        raise DimensionError(f"dense input must be ({in_dim},), got {x.shape}")
    if grad_out.shape != (out_dim,):
        raise DimensionError(
            f"dense grad_out must be ({out_dim},), got {grad_out.shape}"
        )
    g = grad_out.array
    return LayerGrads(
        d_weights=Tensor._wrap(np.outer(g, x.array)),
        d_bias=Tensor._wrap(g.copy()),
        d_input=Tensor._wrap(np.einsum("i,ij->j", g, layer.weights.array)),
    )


def softmax(x: Tensor) -> Tensor:
    """Max-subtracted softmax; finite for any finite input."""
    if x.rank != 1 or x.size == 0:
        raise DimensionError(f"softmax expects a non-empty vector, got {x.shape}")
    shifted = x.array - x.array.max()
    e = np.exp(shifted)
    return Tensor._wrap(e / e.sum())


def flatten(x: Tensor) -> Tensor:
    """Row-major flattening; the backward pass is a plain reshape."""
    if x.rank != 2:
        raise DimensionError(f"flatten expects rank 2, got {x.shape}")
    return Tensor._wrap(x.array.reshape(-1))
