# Domain Models Package
from .tensor import Shape, Tensor, tensor_new, matmul, map_elementwise, identity
from .params import LayerParams

__all__ = ['Shape', 'Tensor', 'tensor_new', 'matmul', 'map_elementwise', 'identity', 'LayerParams']
