"""
Output-volume and parameter-count formulas.

Both the convolution and the pooling formulas floor: trailing rows and
columns that do not fit a whole window are dropped.
"""
from src.models.tensor import Shape
from src.schemas import Conv2DSpec, DenseSpec, PoolSpec
from src.utils.error_handler import ShapeError


def conv_output_shape(h: int, w: int, c: int, f: int, p: int, s: int, n_f: int) -> Shape:
    """
    h2 = floor((h - f + 2p) / s) + 1, likewise for w; depth becomes n_f.

    Raises:
        ShapeError: If the kernel is larger than the padded input
    """
    if s < 1:
        raise ShapeError(f"Stride must be >= 1, got {s}", field="s")
    if p < 0:
        raise ShapeError(f"Padding must be >= 0, got {p}", field="p")
    if h + 2 * p < f or w + 2 * p < f:
        raise ShapeError(
            f"Kernel {f}x{f} larger than padded input {h + 2 * p}x{w + 2 * p}",
            field="f",
        )
    return Shape(((h - f + 2 * p) // s + 1, (w - f + 2 * p) // s + 1, n_f))


def pool_output_shape(W1: int, H1: int, D1: int, SE: int, SD: int) -> Shape:
    """
    W2 = (W1 - SE) / SD + 1, H2 = (H1 - SE) / SD + 1, D2 = D1 (floored).

    The result is ordered (W2, H2, D2), matching the argument order.
    """
    if SE < 1 or SD < 1:
        raise ShapeError(f"Extent and stride must be >= 1, got {SE} and {SD}", field="extent")
    if W1 < SE or H1 < SE:
        raise ShapeError(f"Pool extent {SE} exceeds input {W1}x{H1}", field="extent")
    return Shape(((W1 - SE) // SD + 1, (H1 - SE) // SD + 1, D1))


def conv_param_count(spec: Conv2DSpec) -> int:
    """(f*f*c + 1) * n_f; with a connectivity table each filter counts only its channels"""
    if spec.connectivity is None:
        return (spec.f * spec.f * spec.in_channels + 1) * spec.n_f
    connected = sum(sum(1 for linked in row if linked) for row in spec.connectivity)
    return spec.f * spec.f * connected + spec.n_f


def dense_param_count(spec: DenseSpec, include_bias: bool = True) -> int:
    """in*out weights, plus out biases when include_bias"""
    weights = spec.in_features * spec.out_features
    return weights + spec.out_features if include_bias else weights


def pool_param_count(spec: PoolSpec, channels: int) -> int:
    """Zero for plain max pooling; coefficient and bias per channel otherwise"""
    return 2 * channels if spec.trainable_affine else 0
