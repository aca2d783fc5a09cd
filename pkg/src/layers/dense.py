"""
Flatten and fully connected layers.

Dense weights are laid out (out_features, in_features): out = W x + b.
"""
from typing import Sequence, Tuple

import numpy as np

from src.models.params import LayerParams
from src.models.tensor import Shape, Tensor, as_array, batched, matmul
from src.schemas import DenseSpec
from src.utils.error_handler import ShapeError


def flatten(input: Tensor) -> Tensor:
    """Row-major flattening of H x W x C (or of each example in a batch)"""
    x = as_array(input)
    if x.ndim == 4:
        return Tensor.wrap(x.reshape(x.shape[0], -1).copy())
    return Tensor.wrap(x.reshape(-1).copy())


def unflatten(grad: Tensor, input_shape: Sequence[int]) -> Tensor:
    """Backward of flatten: reshape to the cached input shape"""
    return grad.reshape(Shape(input_shape))


def init_dense_params(spec: DenseSpec, rng: np.random.Generator, dtype=np.float32) -> LayerParams:
    """Zero-mean Gaussian weights with std sqrt(2 / in_features), zero biases"""
    weights = rng.normal(0.0, np.sqrt(2.0 / spec.in_features), size=(spec.out_features, spec.in_features))
    return LayerParams(
        weights=Tensor.wrap(weights.astype(dtype)),
        biases=Tensor.wrap(np.zeros(spec.out_features, dtype=dtype)),
    )


def _check(spec: DenseSpec, params: LayerParams, x: np.ndarray) -> None:
    if params.weights is None or tuple(params.weights.shape) != (spec.out_features, spec.in_features):
        raise ShapeError(f"Dense weights must be ({spec.out_features}, {spec.in_features})", field="weights")
    if params.biases is None or tuple(params.biases.shape) != (spec.out_features,):
        raise ShapeError(f"Dense biases must be ({spec.out_features},)", field="biases")
    if x.shape[-1] != spec.in_features:
        raise ShapeError(f"Input length {x.shape[-1]} != in_features {spec.in_features}",
                         field="in_features")


def dense_forward(input: Tensor, spec: DenseSpec, params: LayerParams) -> Tensor:
    """out = W x + b for a vector, or row-wise for an N x in batch"""
    x, was_batch = batched(as_array(input), 1)
    _check(spec, params, x)
    dtype = np.result_type(x.dtype, params.weights.dtype)
    weights_t = Tensor.wrap(params.weights.data.astype(dtype).T.copy())
    out = matmul(Tensor.wrap(x.astype(dtype)), weights_t).data + params.biases.data.astype(dtype, copy=False)
    return Tensor.wrap(out if was_batch else out[0])


def dense_backward(grad_out: Tensor, cached_input: Tensor, spec: DenseSpec,
                   params: LayerParams) -> Tuple[Tensor, Tensor, Tensor]:
    """
    Returns:
        tuple: (grad_input, grad_weights, grad_biases)
    """
    x, was_batch = batched(as_array(cached_input), 1)
    g, _ = batched(as_array(grad_out), 1)
    _check(spec, params, x)
    if g.shape != (x.shape[0], spec.out_features):
        raise ShapeError(f"grad_out {g.shape} does not match forward output {(x.shape[0], spec.out_features)}",
                         field="grad_out")
    dtype = np.result_type(x.dtype, g.dtype, params.weights.dtype)
    x = x.astype(dtype, copy=False)
    g = g.astype(dtype, copy=False)
    grad_weights = g.T @ x
    grad_biases = g.sum(axis=0)
    grad_input = g @ params.weights.data.astype(dtype, copy=False)
    return (
        Tensor.wrap(grad_input if was_batch else grad_input[0]),
        Tensor.wrap(grad_weights.astype(params.weights.dtype, copy=False)),
        Tensor.wrap(grad_biases.astype(params.biases.dtype, copy=False)),
    )
