"""
Layered network model: ordered layer specs with their parameters.

Shapes are chain-validated at assembly, so every layer's input shape is the
previous layer's output shape and the last layer emits class_count values.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence, Tuple

import numpy as np

from src.layers import kernel_for
from src.models.params import LayerParams
from src.models.tensor import Shape, Tensor
from src.schemas import ModelProvenance
from src.utils.error_handler import ArgumentError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_INPUT_SHAPE = (32, 32, 1)
DEFAULT_CLASS_COUNT = 36

LAYER_NAMES = {
    'conv2d': 'C',
    'maxpool': 'S',
    'relu': 'ReLU',
    'flatten': 'Flatten',
    'dense': 'FC',
    'softmax': 'Softmax',
}


@dataclass
class LayerEntry:
    """One layer of a model"""
    name: str
    spec: Any
    input_shape: Shape
    output_shape: Shape
    params: Optional[LayerParams] = None

    @property
    def param_count(self) -> int:
        return kernel_for(self.spec).param_count(self.spec, self.input_shape)


@dataclass
class ForwardTrace:
    """Per-layer caches kept for the backward pass"""
    caches: List[Any] = field(default_factory=list)


def layer_names(specs: Sequence[Any]) -> List[str]:
    """C1, S1, C2, S2, FC1, ... numbering per layer family"""
    counters = {}
    names = []
    for spec in specs:
        prefix = LAYER_NAMES[spec.kind]
        counters[prefix] = counters.get(prefix, 0) + 1
        names.append(f"{prefix}{counters[prefix]}")
    return names


def chain_shapes(specs: Sequence[Any], input_shape: Sequence[int]) -> List[Tuple[Shape, Shape]]:
    """
    Input and output shape of every layer.

    Raises:
        ShapeError: If a layer cannot accept its predecessor's output
    """
    current = Shape(input_shape)
    shapes = []
    for index, spec in enumerate(specs):
        try:
            out = kernel_for(spec).output_shape(spec, current)
        except ShapeError as e:
            raise ShapeError(f"Layer {index} ({spec.kind}): {e.message}", field=f"layers[{index}]")
        shapes.append((current, out))
        current = out
    return shapes


class Model:
    """Ordered layers with their trainable parameters"""

    def __init__(self, layers: List[LayerEntry], input_shape: Sequence[int] = DEFAULT_INPUT_SHAPE,
                 class_names: Optional[Sequence[str]] = None, provenance: Optional[ModelProvenance] = None):
        if not layers:
            raise ArgumentError("A model needs at least one layer", field="layers")
        self.layers = layers
        self.input_shape = Shape(input_shape)
        out = layers[-1].output_shape
        if len(out) != 1:
            raise ShapeError(f"Final layer must emit a vector, got {tuple(out)}", field="layers")
        self.class_count = out[0]
        if class_names is not None and len(class_names) != self.class_count:
            raise ArgumentError(
                f"{len(class_names)} class names for {self.class_count} outputs", field="class_names"
            )
        self.class_names = list(class_names) if class_names is not None else [str(i) for i in range(self.class_count)]
        self.provenance = provenance if provenance is not None else ModelProvenance()

    @classmethod
    def assemble(cls, specs: Sequence[Any], input_shape: Sequence[int] = DEFAULT_INPUT_SHAPE,
                 seed: int = 0, class_count: Optional[int] = None,
                 class_names: Optional[Sequence[str]] = None) -> "Model":
        """
        Validate the layer chain and draw initial parameters from a seeded generator.

        Raises:
            ShapeError: If shapes do not chain or the output width is not class_count
        """
        shapes = chain_shapes(specs, input_shape)
        final = shapes[-1][1] if shapes else None
        if class_count is not None and (final is None or tuple(final) != (class_count,)):
            raise ShapeError(f"Final layer emits {None if final is None else tuple(final)}, "
                             f"expected ({class_count},)", field="class_count")
        rng = np.random.default_rng(seed)
        names = layer_names(specs)
        layers = []
        for name, spec, (in_shape, out_shape) in zip(names, specs, shapes):
            params = kernel_for(spec).init(spec, in_shape, rng)
            layers.append(LayerEntry(name=name, spec=spec, input_shape=in_shape,
                                     output_shape=out_shape, params=params))
        model = cls(layers, input_shape=input_shape, class_names=class_names)
        logger.info(f"Assembled model with {len(layers)} layers, {model.parameter_count()} parameters")
        return model

    @property
    def specs(self) -> List[Any]:
        return [layer.spec for layer in self.layers]

    def parameter_count(self) -> int:
        return sum(layer.param_count for layer in self.layers)

    def scalar_count(self) -> int:
        """Scalars held in parameter tensors (masked connections included)"""
        return sum(layer.params.scalar_count() for layer in self.layers if layer.params is not None)

    def ends_with_softmax(self) -> bool:
        return self.layers[-1].spec.kind == 'softmax'

    def _check_batch(self, batch: Tensor) -> None:
        if tuple(batch.shape[1:]) != tuple(self.input_shape):
            raise ShapeError(f"Batch examples are {tuple(batch.shape[1:])}, model expects "
                             f"{tuple(self.input_shape)}", field="input_shape")

    def forward(self, batch: Tensor, keep_trace: bool = False,
                stop_before_softmax: bool = False) -> Tuple[Tensor, Optional[ForwardTrace]]:
        """
        Run a batch (N x input_shape) through the layers.

        Returns:
            tuple: Output tensor and, when keep_trace, the caches for backward
        """
        self._check_batch(batch)
        trace = ForwardTrace() if keep_trace else None
        x = batch
        for layer in self.layers:
            if stop_before_softmax and layer.spec.kind == 'softmax' and layer is self.layers[-1]:
                break
            x, cache = kernel_for(layer.spec).forward(x, layer.spec, layer.params)
            if trace is not None:
                trace.caches.append(cache)
        return x, trace

    def backward(self, grad: Tensor, trace: ForwardTrace) -> List[Optional[LayerParams]]:
        """
        Propagate a gradient from the last traced layer back to the input.

        Returns:
            list: Parameter gradients per traced layer (None for parameterless layers)
        """
        grads: List[Optional[LayerParams]] = [None] * len(trace.caches)
        for index in range(len(trace.caches) - 1, -1, -1):
            layer = self.layers[index]
            grad, param_grads = kernel_for(layer.spec).backward(grad, trace.caches[index], layer.spec, layer.params)
            grads[index] = param_grads
        return grads

    def with_params(self, params: Sequence[Optional[LayerParams]]) -> "Model":
        """Copy of this model with the given per-layer parameters"""
        if len(params) != len(self.layers):
            raise ArgumentError(f"{len(params)} parameter sets for {len(self.layers)} layers", field="params")
        layers = [
            LayerEntry(name=l.name, spec=l.spec, input_shape=l.input_shape, output_shape=l.output_shape, params=p)
            for l, p in zip(self.layers, params)
        ]
        return Model(layers, input_shape=self.input_shape, class_names=self.class_names, provenance=self.provenance)

    def with_provenance(self, provenance: ModelProvenance) -> "Model":
        """Copy of this model tagged with the data settings it was trained under"""
        return Model(self.layers, input_shape=self.input_shape, class_names=self.class_names, provenance=provenance)

    def __repr__(self) -> str:
        return f"<Model(layers={len(self.layers)}, classes={self.class_count}, params={self.parameter_count()})>"
