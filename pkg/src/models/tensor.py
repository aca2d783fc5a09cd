"""
Dense tensor type and the shape algebra every layer builds on.

Tensors are immutable: the wrapped array is marked read-only once an
operation returns it. Layout is row-major, images are height x width x
channels and batches prepend a batch dimension.
"""
from typing import Callable, Iterable, Sequence, Tuple, Union

import numpy as np

from src.utils.error_handler import ArgumentError, ShapeError, SizeError

MAX_RANK = 4
INDEX_LIMIT = np.iinfo(np.intp).max

Scalar = Union[int, float]


class Shape(tuple):
    """Validated tuple of 1-4 positive dimensions"""

    def __new__(cls, dims: Iterable[int]) -> "Shape":
        dims = tuple(int(d) for d in dims)
        if not 1 <= len(dims) <= MAX_RANK:
            raise ShapeError(f"Rank must be between 1 and {MAX_RANK}, got {len(dims)}", field="shape")
        if any(d < 1 for d in dims):
            raise ShapeError(f"Every dimension must be >= 1, got {dims}", field="shape")
        count = 1
        for d in dims:
            count *= d
        if count > INDEX_LIMIT:
            raise SizeError(f"Element count {count} overflows the index type", field="shape")
        return super().__new__(cls, dims)

    @property
    def rank(self) -> int:
        return len(self)

    @property
    def size(self) -> int:
        count = 1
        for d in self:
            count *= d
        return count

    def flat_index(self, index: Sequence[int]) -> int:
        """Row-major offset of a multi-index (last dimension varies fastest)"""
        if len(index) != len(self):
            raise ShapeError(f"Index {tuple(index)} does not match rank {len(self)}", field="index")
        offset = 0
        for i, d in zip(index, self):
            if not 0 <= i < d:
                raise ShapeError(f"Index {tuple(index)} out of bounds for {tuple(self)}", field="index")
            offset = offset * d + i
        return offset

    def __repr__(self) -> str:
        return f"Shape{tuple(self)}"


def _float_dtype(dtype) -> np.dtype:
    """64-bit stays 64-bit, everything else computes in 32-bit"""
    return np.dtype(np.float64) if np.dtype(dtype) == np.float64 else np.dtype(np.float32)


class Tensor:
    """Immutable dense tensor of 32-bit (default) or 64-bit floats"""

    __slots__ = ("_array",)

    def __init__(self, data, dtype=None):
        source = np.asarray(data)
        target = _float_dtype(dtype if dtype is not None else source.dtype)
        array = np.array(source, dtype=target, copy=True)
        if array.ndim == 0:
            array = array.reshape(1)
        Shape(array.shape)
        array.setflags(write=False)
        self._array = array

    @classmethod
    def wrap(cls, array: np.ndarray) -> "Tensor":
        """Adopt a freshly computed array without copying it"""
        if array.dtype != _float_dtype(array.dtype):
            array = array.astype(_float_dtype(array.dtype))
        if array.ndim == 0:
            array = array.reshape(1)
        Shape(array.shape)
        tensor = cls.__new__(cls)
        array.setflags(write=False)
        tensor._array = array
        return tensor

    @property
    def shape(self) -> Shape:
        return Shape(self._array.shape)

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the underlying array"""
        return self._array

    @property
    def dtype(self) -> np.dtype:
        return self._array.dtype

    @property
    def precision(self) -> int:
        return 64 if self._array.dtype == np.float64 else 32

    @property
    def size(self) -> int:
        return int(self._array.size)

    def flat(self) -> np.ndarray:
        return self._array.reshape(-1)

    def reshape(self, dims: Sequence[int]) -> "Tensor":
        shape = Shape(dims)
        if shape.size != self.size:
            raise ShapeError(f"Cannot reshape {tuple(self.shape)} to {tuple(shape)}", field="shape")
        return Tensor.wrap(self._array.reshape(shape).copy())

    def astype(self, dtype) -> "Tensor":
        return Tensor(self._array, dtype=dtype)

    def to_float64(self) -> "Tensor":
        return self.astype(np.float64)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self._array).all())

    def __getitem__(self, index):
        return self._array[index]

    def __len__(self) -> int:
        return self._array.shape[0]

    def __repr__(self) -> str:
        return f"Tensor(shape={tuple(self.shape)}, precision={self.precision})"


def tensor_new(shape: Sequence[int], fill: Scalar = 0.0, dtype=np.float32) -> Tensor:
    """Tensor of the given shape with every entry equal to fill"""
    dims = Shape(shape)
    if not np.isfinite(fill):
        raise ArgumentError(f"Fill value must be finite, got {fill}", field="fill")
    return Tensor.wrap(np.full(dims, fill, dtype=_float_dtype(dtype)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of an m x k and a k x n tensor"""
    if a.shape.rank != 2 or b.shape.rank != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {tuple(a.shape)} and {tuple(b.shape)}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"Inner dimensions differ: {tuple(a.shape)} x {tuple(b.shape)}")
    return Tensor.wrap(np.matmul(a.data, b.data))


def map_elementwise(t: Tensor, f: Callable, vectorized: bool = False) -> Tensor:
    """
    Apply a scalar function to every entry; shape is preserved.

    With vectorized=True, f receives the whole array and must return one of the same shape.
    """
    if vectorized or (isinstance(f, np.ufunc) and f.nin == 1):
        mapped = np.asarray(f(t.data), dtype=t.dtype)
        if mapped.shape != t.data.shape:
            raise ShapeError(f"Mapped shape {mapped.shape} differs from {t.data.shape}", field="f")
        return Tensor.wrap(mapped)
    mapped = np.fromiter((f(float(x)) for x in t.flat()), dtype=t.dtype, count=t.size)
    return Tensor.wrap(mapped.reshape(t.shape))


def identity(n: int, dtype=np.float32) -> Tensor:
    return Tensor.wrap(np.eye(n, dtype=_float_dtype(dtype)))


def as_array(value: Union[Tensor, np.ndarray]) -> np.ndarray:
    return value.data if isinstance(value, Tensor) else np.asarray(value)


def batched(array: np.ndarray, example_rank: int) -> Tuple[np.ndarray, bool]:
    """Promote a single example to a batch of one; report whether it already was a batch"""
    if array.ndim == example_rank:
        return array[np.newaxis], False
    if array.ndim == example_rank + 1:
        return array, True
    raise ShapeError(f"Expected rank {example_rank} or {example_rank + 1}, got shape {array.shape}")
