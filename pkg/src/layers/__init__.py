# Layers Package
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .activations import relu_backward, relu_forward, softmax
from .conv import conv_backward, conv_forward, init_conv_params, sparse_connectivity
from .dense import dense_backward, dense_forward, flatten, init_dense_params, unflatten
from .pooling import init_pool_params, maxpool_backward, maxpool_forward
from .shapes import conv_output_shape, conv_param_count, dense_param_count, pool_output_shape, pool_param_count
from src.models.params import LayerParams
from src.models.tensor import Shape, Tensor
from src.utils.error_handler import ShapeError


class Conv2DKernel:
    """Dispatch adapter for conv2d layers"""

    @staticmethod
    def output_shape(spec, in_shape: Shape) -> Shape:
        if len(in_shape) != 3 or in_shape[2] != spec.in_channels:
            raise ShapeError(f"conv2d expects H x W x {spec.in_channels}, got {tuple(in_shape)}")
        return conv_output_shape(in_shape[0], in_shape[1], in_shape[2], spec.f, spec.p, spec.s, spec.n_f)

    @staticmethod
    def param_count(spec, in_shape: Shape) -> int:
        return conv_param_count(spec)

    @staticmethod
    def init(spec, in_shape: Shape, rng: np.random.Generator) -> Optional[LayerParams]:
        return init_conv_params(spec, rng)

    @staticmethod
    def forward(x: Tensor, spec, params) -> Tuple[Tensor, Any]:
        return conv_forward(x, spec, params), x

    @staticmethod
    def backward(grad: Tensor, cache, spec, params) -> Tuple[Tensor, Optional[LayerParams]]:
        grad_input, grad_weights, grad_biases = conv_backward(grad, cache, spec, params)
        return grad_input, LayerParams(weights=grad_weights, biases=grad_biases)


class PoolKernel:
    """Dispatch adapter for maxpool layers"""

    @staticmethod
    def output_shape(spec, in_shape: Shape) -> Shape:
        if len(in_shape) != 3:
            raise ShapeError(f"maxpool expects H x W x C, got {tuple(in_shape)}")
        return pool_output_shape(in_shape[0], in_shape[1], in_shape[2], spec.extent, spec.stride)

    @staticmethod
    def param_count(spec, in_shape: Shape) -> int:
        return pool_param_count(spec, in_shape[-1])

    @staticmethod
    def init(spec, in_shape: Shape, rng: np.random.Generator) -> Optional[LayerParams]:
        return init_pool_params(spec, in_shape[-1])

    @staticmethod
    def forward(x: Tensor, spec, params) -> Tuple[Tensor, Any]:
        return maxpool_forward(x, spec, params)

    @staticmethod
    def backward(grad: Tensor, cache, spec, params) -> Tuple[Tensor, Optional[LayerParams]]:
        return maxpool_backward(grad, cache, spec, params)


class ReluKernel:
    """Dispatch adapter for relu layers"""

    @staticmethod
    def output_shape(spec, in_shape: Shape) -> Shape:
        return in_shape

    @staticmethod
    def param_count(spec, in_shape: Shape) -> int:
        return 0

    @staticmethod
    def init(spec, in_shape: Shape, rng: np.random.Generator) -> Optional[LayerParams]:
        return None

    @staticmethod
    def forward(x: Tensor, spec, params) -> Tuple[Tensor, Any]:
        return relu_forward(x), x

    @staticmethod
    def backward(grad: Tensor, cache, spec, params) -> Tuple[Tensor, Optional[LayerParams]]:
        return relu_backward(grad, cache), None


class FlattenKernel:
    """Dispatch adapter for flatten layers"""

    @staticmethod
    def output_shape(spec, in_shape: Shape) -> Shape:
        return Shape((in_shape.size,))

    @staticmethod
    def param_count(spec, in_shape: Shape) -> int:
        return 0

    @staticmethod
    def init(spec, in_shape: Shape, rng: np.random.Generator) -> Optional[LayerParams]:
        return None

    @staticmethod
    def forward(x: Tensor, spec, params) -> Tuple[Tensor, Any]:
        return flatten(x), tuple(x.shape)

    @staticmethod
    def backward(grad: Tensor, cache, spec, params) -> Tuple[Tensor, Optional[LayerParams]]:
        return unflatten(grad, cache), None


class DenseKernel:
    """Dispatch adapter for dense layers"""

    @staticmethod
    def output_shape(spec, in_shape: Shape) -> Shape:
        if len(in_shape) != 1 or in_shape[0] != spec.in_features:
            raise ShapeError(f"dense expects a vector of {spec.in_features}, got {tuple(in_shape)}")
        return Shape((spec.out_features,))

    @staticmethod
    def param_count(spec, in_shape: Shape) -> int:
        return dense_param_count(spec, include_bias=True)

    @staticmethod
    def init(spec, in_shape: Shape, rng: np.random.Generator) -> Optional[LayerParams]:
        return init_dense_params(spec, rng)

    @staticmethod
    def forward(x: Tensor, spec, params) -> Tuple[Tensor, Any]:
        return dense_forward(x, spec, params), x

    @staticmethod
    def backward(grad: Tensor, cache, spec, params) -> Tuple[Tensor, Optional[LayerParams]]:
        grad_input, grad_weights, grad_biases = dense_backward(grad, cache, spec, params)
        return grad_input, LayerParams(weights=grad_weights, biases=grad_biases)


class SoftmaxKernel:
    """Dispatch adapter for the softmax output layer"""

    @staticmethod
    def output_shape(spec, in_shape: Shape) -> Shape:
        if len(in_shape) != 1:
            raise ShapeError(f"softmax expects a vector, got {tuple(in_shape)}")
        return in_shape

    @staticmethod
    def param_count(spec, in_shape: Shape) -> int:
        return 0

    @staticmethod
    def init(spec, in_shape: Shape, rng: np.random.Generator) -> Optional[LayerParams]:
        return None

    @staticmethod
    def forward(x: Tensor, spec, params) -> Tuple[Tensor, Any]:
        probs = softmax(x)
        return probs, probs

    @staticmethod
    def backward(grad: Tensor, cache, spec, params) -> Tuple[Tensor, Optional[LayerParams]]:
        # Jacobian-vector product: p * (g - sum(g * p))
        p = cache.data
        g = grad.data
        return Tensor.wrap(p * (g - (g * p).sum(axis=-1, keepdims=True))), None


LAYER_KERNELS: Dict[str, Any] = {
    'conv2d': Conv2DKernel,
    'maxpool': PoolKernel,
    'relu': ReluKernel,
    'flatten': FlattenKernel,
    'dense': DenseKernel,
    'softmax': SoftmaxKernel,
}


def kernel_for(spec) -> Any:
    return LAYER_KERNELS[spec.kind]


__all__ = [
    'LAYER_KERNELS',
    'kernel_for',
    'conv_output_shape',
    'conv_param_count',
    'dense_param_count',
    'pool_output_shape',
    'pool_param_count',
    'conv_forward',
    'conv_backward',
    'sparse_connectivity',
    'relu_forward',
    'relu_backward',
    'maxpool_forward',
    'maxpool_backward',
    'flatten',
    'unflatten',
    'dense_forward',
    'dense_backward',
    'softmax',
]
