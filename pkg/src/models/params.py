from dataclasses import dataclass, fields
from typing import Iterator, Optional, Tuple

import numpy as np

from src.models.tensor import Tensor, tensor_new


@dataclass(frozen=True)
class LayerParams:
    """
    Trainable tensors of one layer.

    Convolution and dense layers use weights and biases. A max pooling layer
    with a trainable affine uses coeff (per channel) and biases (per channel).
    Gradients are carried in the same container.
    """
    weights: Optional[Tensor] = None
    biases: Optional[Tensor] = None
    coeff: Optional[Tensor] = None

    # serialization order: weight-like tensor first, then biases
    ORDER = ('weights', 'coeff', 'biases')

    def named(self) -> Iterator[Tuple[str, Tensor]]:
        for name in self.ORDER:
            value = getattr(self, name)
            if value is not None:
                yield name, value

    def scalar_count(self) -> int:
        return sum(t.size for _, t in self.named())

    def zeros_like(self) -> "LayerParams":
        return LayerParams(**{
            name: tensor_new(t.shape, 0.0, dtype=t.dtype) for name, t in self.named()
        })

    def astype(self, dtype) -> "LayerParams":
        return LayerParams(**{name: t.astype(dtype) for name, t in self.named()})

    def replace(self, **changes: Tensor) -> "LayerParams":
        current = {f.name: getattr(self, f.name) for f in fields(self)}
        current.update(changes)
        return LayerParams(**current)

    def arrays(self) -> Tuple[np.ndarray, ...]:
        return tuple(t.data for _, t in self.named())
