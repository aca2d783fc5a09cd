import numpy as np

from src.models.tensor import Tensor, as_array, map_elementwise
from src.utils.error_handler import ShapeError


def relu_forward(input: Tensor) -> Tensor:
    """Elementwise max(0, x)"""
    return map_elementwise(input, _relu, vectorized=True)


def relu_backward(grad_out: Tensor, cached_input: Tensor) -> Tensor:
    """Gradient passes where the cached input is positive, zero elsewhere"""
    g = as_array(grad_out)
    x = as_array(cached_input)
    if g.shape != x.shape:
        raise ShapeError(f"grad_out {g.shape} does not match input {x.shape}", field="grad_out")
    return Tensor.wrap(np.where(x > 0, g, np.zeros_like(g)))


def softmax(logits: Tensor) -> Tensor:
    """
    Probabilities from logits, one distribution per row for rank-2 input.

    Max-subtraction keeps exp from overflowing.
    """
    z = as_array(logits)
    if z.ndim not in (1, 2):
        raise ShapeError(f"softmax expects rank 1 or 2, got shape {z.shape}", field="logits")
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return Tensor.wrap(e / e.sum(axis=-1, keepdims=True))


def _relu(values: np.ndarray) -> np.ndarray:
    return np.maximum(values, 0)
