"""
Max pooling with argmax routing and an optional per-channel affine.

Ties inside a window resolve to the first position in row-major scan order.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.layers.shapes import pool_output_shape
from src.models.params import LayerParams
from src.models.tensor import Tensor, as_array, batched
from src.schemas import PoolSpec
from src.utils.error_handler import ShapeError


@dataclass(frozen=True)
class PoolCache:
    """Where each pooled maximum came from, in input coordinates"""
    input_shape: Tuple[int, ...]
    rows: np.ndarray
    cols: np.ndarray
    maxima: np.ndarray
    batched: bool


def init_pool_params(spec: PoolSpec, channels: int, dtype=np.float32) -> Optional[LayerParams]:
    """Unit coefficients and zero biases when the affine is trainable, else no parameters"""
    if not spec.trainable_affine:
        return None
    return LayerParams(
        coeff=Tensor.wrap(np.ones(channels, dtype=dtype)),
        biases=Tensor.wrap(np.zeros(channels, dtype=dtype)),
    )


def _check_affine(spec: PoolSpec, params: Optional[LayerParams], channels: int) -> None:
    if not spec.trainable_affine:
        return
    if params is None or params.coeff is None or params.biases is None:
        raise ShapeError("Trainable pooling needs coeff and biases", field="params")
    if tuple(params.coeff.shape) != (channels,) or tuple(params.biases.shape) != (channels,):
        raise ShapeError(f"Pooling coeff and biases must be ({channels},)", field="params")


def maxpool_forward(input: Tensor, spec: PoolSpec,
                    params: Optional[LayerParams] = None) -> Tuple[Tensor, PoolCache]:
    """
    Window maxima per channel, optionally coeff[ch] * max + bias[ch].

    Returns:
        tuple: Pooled tensor and the argmax cache for the backward pass
    """
    x, was_batch = batched(as_array(input), 3)
    n, h, w, c = x.shape
    out_shape = pool_output_shape(h, w, c, spec.extent, spec.stride)
    h2, w2 = out_shape[0], out_shape[1]
    _check_affine(spec, params, c)

    se = spec.extent
    windows = sliding_window_view(x, (se, se), axis=(1, 2))[:, ::spec.stride, ::spec.stride]
    windows = windows[:, :h2, :w2].reshape(n, h2, w2, c, se * se)
    arg = windows.argmax(axis=-1)
    maxima = np.take_along_axis(windows, arg[..., np.newaxis], axis=-1)[..., 0]

    out_rows = np.arange(h2).reshape(1, h2, 1, 1) * spec.stride
    out_cols = np.arange(w2).reshape(1, 1, w2, 1) * spec.stride
    rows = out_rows + arg // se
    cols = out_cols + arg % se

    out = maxima
    if spec.trainable_affine:
        coeff = params.coeff.data.astype(x.dtype, copy=False)
        bias = params.biases.data.astype(x.dtype, copy=False)
        out = maxima * coeff + bias
    cache = PoolCache(input_shape=x.shape, rows=rows, cols=cols, maxima=maxima, batched=was_batch)
    return Tensor.wrap(np.ascontiguousarray(out if was_batch else out[0])), cache


def maxpool_backward(grad_out: Tensor, cache: PoolCache, spec: PoolSpec,
                     params: Optional[LayerParams] = None) -> Tuple[Tensor, Optional[LayerParams]]:
    """
    Route each output gradient to its argmax position; every other position gets zero.

    Returns:
        tuple: Input gradient and, with a trainable affine, the coeff/bias gradients
    """
    g, _ = batched(as_array(grad_out), 3)
    n, h, w, c = cache.input_shape
    if g.shape != cache.maxima.shape:
        raise ShapeError(f"grad_out {g.shape} does not match forward output {cache.maxima.shape}",
                         field="grad_out")
    _check_affine(spec, params, c)

    param_grads = None
    routed = g
    if spec.trainable_affine:
        coeff = params.coeff.data
        param_grads = LayerParams(
            coeff=Tensor.wrap((g * cache.maxima).sum(axis=(0, 1, 2)).astype(coeff.dtype)),
            biases=Tensor.wrap(g.sum(axis=(0, 1, 2)).astype(params.biases.dtype)),
        )
        routed = g * coeff.astype(g.dtype, copy=False)

    dtype = np.result_type(g.dtype, cache.maxima.dtype)
    grad_input = np.zeros((n, h, w, c), dtype=dtype)
    batch_index = np.arange(n).reshape(n, 1, 1, 1)
    channel_index = np.arange(c).reshape(1, 1, 1, c)
    np.add.at(grad_input, (batch_index, cache.rows, cache.cols, channel_index), routed)
    return Tensor.wrap(grad_input if cache.batched else grad_input[0]), param_grads
