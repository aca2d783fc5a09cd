"""
2D convolution over height x width x channels inputs.

Weights are laid out (f, f, in_channels, n_f). The forward pass gathers
every receptive field into a row (im2col) and multiplies by the reshaped
filter bank; the backward pass scatters column gradients back (col2im).
"""
import logging
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.layers.shapes import conv_output_shape
from src.models.params import LayerParams
from src.models.tensor import Tensor, as_array, batched
from src.schemas import Conv2DSpec
from src.utils.error_handler import ShapeError

logger = logging.getLogger(__name__)


def connectivity_mask(spec: Conv2DSpec, dtype=np.float32) -> Optional[np.ndarray]:
    """Mask broadcastable to the weight tensor, or None when fully connected"""
    if spec.connectivity is None:
        return None
    table = np.asarray(spec.connectivity, dtype=dtype)  # (n_f, c)
    return table.T[np.newaxis, np.newaxis, :, :]


def sparse_connectivity(n_f: int, in_channels: int, per_filter: int, seed: int) -> Tuple[Tuple[bool, ...], ...]:
    """
    Seeded random table with exactly per_filter channels linked to each filter.

    Raises:
        ShapeError: If per_filter is outside [1, in_channels]
    """
    if not 1 <= per_filter <= in_channels:
        raise ShapeError(f"Connections per filter must be in [1, {in_channels}], got {per_filter}",
                         field="per_filter")
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n_f):
        linked = set(rng.choice(in_channels, size=per_filter, replace=False).tolist())
        rows.append(tuple(ch in linked for ch in range(in_channels)))
    return tuple(rows)


def init_conv_params(spec: Conv2DSpec, rng: np.random.Generator, dtype=np.float32) -> LayerParams:
    """Zero-mean Gaussian weights with std sqrt(2 / fan_in), zero biases"""
    fan_in = spec.f * spec.f * spec.in_channels
    weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(spec.f, spec.f, spec.in_channels, spec.n_f))
    mask = connectivity_mask(spec, dtype=np.float64)
    if mask is not None:
        weights = np.where(mask > 0, weights, 0.0)
    return LayerParams(
        weights=Tensor.wrap(weights.astype(dtype)),
        biases=Tensor.wrap(np.zeros(spec.n_f, dtype=dtype)),
    )


def _check_params(spec: Conv2DSpec, params: LayerParams) -> None:
    expected = (spec.f, spec.f, spec.in_channels, spec.n_f)
    if params.weights is None or tuple(params.weights.shape) != expected:
        got = None if params.weights is None else tuple(params.weights.shape)
        raise ShapeError(f"Conv weights must be {expected}, got {got}", field="weights")
    if params.biases is None or tuple(params.biases.shape) != (spec.n_f,):
        raise ShapeError(f"Conv biases must be ({spec.n_f},)", field="biases")


def _effective_weights(spec: Conv2DSpec, params: LayerParams, dtype) -> np.ndarray:
    weights = params.weights.data.astype(dtype, copy=False)
    mask = connectivity_mask(spec, dtype=dtype)
    return weights if mask is None else weights * mask


def _im2col(x: np.ndarray, spec: Conv2DSpec) -> Tuple[np.ndarray, int, int]:
    """Rows of flattened (f, f, c) receptive fields for every output position"""
    n, h, w, c = x.shape
    out = conv_output_shape(h, w, c, spec.f, spec.p, spec.s, spec.n_f)
    h2, w2 = out[0], out[1]
    p = spec.p
    padded = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0))) if p else x
    windows = sliding_window_view(padded, (spec.f, spec.f), axis=(1, 2))  # (n, H', W', c, f, f)
    windows = windows[:, ::spec.s, ::spec.s][:, :h2, :w2]
    cols = windows.transpose(0, 1, 2, 4, 5, 3).reshape(n * h2 * w2, spec.f * spec.f * c)
    return cols, h2, w2


def _prepare_input(input: Tensor, spec: Conv2DSpec) -> Tuple[np.ndarray, bool]:
    x, was_batch = batched(as_array(input), 3)
    if x.shape[-1] != spec.in_channels:
        raise ShapeError(f"Input has {x.shape[-1]} channels, layer expects {spec.in_channels}",
                         field="in_channels")
    return x, was_batch


def conv_forward(input: Tensor, spec: Conv2DSpec, params: LayerParams) -> Tensor:
    """
    Each output scalar is bias + the dot product of the filter with its
    zero-padded receptive field. Accepts H x W x C or N x H x W x C.
    """
    _check_params(spec, params)
    x, was_batch = _prepare_input(input, spec)
    dtype = np.result_type(x.dtype, params.weights.dtype)
    cols, h2, w2 = _im2col(x.astype(dtype, copy=False), spec)
    kernel = _effective_weights(spec, params, dtype).reshape(-1, spec.n_f)
    out = cols @ kernel + params.biases.data.astype(dtype, copy=False)
    out = out.reshape(x.shape[0], h2, w2, spec.n_f)
    return Tensor.wrap(out if was_batch else out[0])


def _col2im(dcols: np.ndarray, padded_shape: Tuple[int, ...], spec: Conv2DSpec, h2: int, w2: int) -> np.ndarray:
    n, _, _, c = padded_shape
    grads = np.zeros(padded_shape, dtype=dcols.dtype)
    patches = dcols.reshape(n, h2, w2, spec.f, spec.f, c)
    row_span = spec.s * (h2 - 1) + 1
    col_span = spec.s * (w2 - 1) + 1
    for fi in range(spec.f):
        for fj in range(spec.f):
            grads[:, fi:fi + row_span:spec.s, fj:fj + col_span:spec.s, :] += patches[:, :, :, fi, fj, :]
    return grads


def conv_backward(grad_out: Tensor, cached_input: Tensor, spec: Conv2DSpec,
                  params: LayerParams) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Gradients of a scalar loss with respect to input, weights and biases.

    Weight gradients of channels masked out by the connectivity table are zero.
    """
    _check_params(spec, params)
    x, was_batch = _prepare_input(cached_input, spec)
    g, _ = batched(as_array(grad_out), 3)
    dtype = np.result_type(x.dtype, g.dtype, params.weights.dtype)
    x = x.astype(dtype, copy=False)
    cols, h2, w2 = _im2col(x, spec)
    if g.shape != (x.shape[0], h2, w2, spec.n_f):
        raise ShapeError(f"grad_out {g.shape} does not match forward output {(x.shape[0], h2, w2, spec.n_f)}",
                         field="grad_out")
    g = g.astype(dtype, copy=False).reshape(-1, spec.n_f)

    grad_weights = (cols.T @ g).reshape(spec.f, spec.f, spec.in_channels, spec.n_f)
    mask = connectivity_mask(spec, dtype=dtype)
    if mask is not None:
        grad_weights = np.where(mask > 0, grad_weights, 0.0)
    grad_biases = g.sum(axis=0)

    kernel = _effective_weights(spec, params, dtype).reshape(-1, spec.n_f)
    dcols = g @ kernel.T
    n, h, w, c = x.shape
    p = spec.p
    grad_padded = _col2im(dcols, (n, h + 2 * p, w + 2 * p, c), spec, h2, w2)
    grad_input = grad_padded[:, p:p + h, p:p + w, :]
    if not was_batch:
        grad_input = grad_input[0]
    return (
        Tensor.wrap(np.ascontiguousarray(grad_input)),
        Tensor.wrap(grad_weights.astype(params.weights.dtype, copy=False)),
        Tensor.wrap(grad_biases.astype(params.biases.dtype, copy=False)),
    )
