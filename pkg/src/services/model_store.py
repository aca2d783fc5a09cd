"""
Binary model file.

Layout (all integers little-endian):
    magic    4 bytes  b"DCNN"
    version  uint32
    hlen     uint32   length of the header in bytes
    header   hlen bytes of UTF-8 JSON: layers, class_names, input_shape, parameter_count
    payload  float32 little-endian parameters in layer order; within a layer the
             weight-like tensor first, then biases, row-major. Convolution weights
             cut by a connectivity table are not stored.
"""
import json
import logging
import struct
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from pydantic import ValidationError, parse_obj_as

from config import settings
from src.models.network import LayerEntry, Model, chain_shapes, layer_names
from src.models.params import LayerParams
from src.models.tensor import Tensor
from src.schemas import LayerSpec, ModelProvenance
from src.layers import kernel_for
from src.layers.conv import connectivity_mask
from src.utils.error_handler import ArgumentError, FormatError, ShapeError, SizeError

logger = logging.getLogger(__name__)

MAGIC = b'DCNN'
PREAMBLE = struct.Struct('<4sII')
PAYLOAD_DTYPE = np.dtype('<f4')


def _stored_mask(spec, name: str, tensor: Tensor) -> Optional[np.ndarray]:
    """Boolean selection of stored entries for masked convolution weights"""
    if spec.kind != 'conv2d' or name != 'weights' or spec.connectivity is None:
        return None
    return np.broadcast_to(connectivity_mask(spec, dtype=bool), tensor.data.shape)


def _param_template(spec, in_shape) -> Optional[LayerParams]:
    """Freshly initialized parameters, used only for the shapes a layer owns"""
    return kernel_for(spec).init(spec, in_shape, np.random.default_rng(0))


def build_header(model: Model) -> dict:
    header = {
        'layers': [layer.spec.dict() for layer in model.layers],
        'class_names': list(model.class_names),
        'input_shape': list(model.input_shape),
        'parameter_count': model.parameter_count(),
    }
    provenance = model.provenance.dict(exclude_none=True)
    if provenance:
        header['provenance'] = provenance
    return header


def pack_parameters(model: Model) -> bytes:
    chunks = []
    for layer in model.layers:
        if layer.params is None:
            continue
        for name, tensor in layer.params.named():
            values = tensor.data
            mask = _stored_mask(layer.spec, name, tensor)
            values = values[mask] if mask is not None else values.reshape(-1)
            chunks.append(values.astype(PAYLOAD_DTYPE).tobytes())
    return b''.join(chunks)


class ModelStore:
    """Service class for model file persistence"""

    @staticmethod
    def save_model(model: Model, path: Union[str, Path]) -> None:
        """
        Write a model file

        Args:
            model (Model): Model to persist
            path: Destination file
        """
        header = json.dumps(build_header(model), sort_keys=True, separators=(',', ':')).encode('utf-8')
        payload = pack_parameters(model)
        if len(payload) != 4 * model.parameter_count():
            raise FormatError(f"Payload {len(payload)} bytes for {model.parameter_count()} parameters",
                              field="payload")
        data = PREAMBLE.pack(MAGIC, settings.model_format_version, len(header)) + header + payload
        Path(path).write_bytes(data)
        logger.info(f"Saved model ({model.parameter_count()} parameters) to {path}")

    @staticmethod
    def load_model(path: Union[str, Path]) -> Model:
        """
        Read and validate a model file; nothing is returned unless every check passes

        Raises:
            FormatError: If the magic, version, header, shapes or payload length are wrong
        """
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise FormatError(f"Cannot read model file {path}: {e}", field="path")
        return ModelStore.decode_model(data)

    @staticmethod
    def decode_model(data: bytes) -> Model:
        if len(data) < PREAMBLE.size:
            raise FormatError("File shorter than the model preamble", field="magic")
        magic, version, header_length = PREAMBLE.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}", field="magic")
        if version != settings.model_format_version:
            raise FormatError(f"Unsupported format version {version}", field="version")
        header_end = PREAMBLE.size + header_length
        if header_end > len(data):
            raise FormatError(f"Header length {header_length} exceeds file size", field="header_length")
        try:
            header = json.loads(data[PREAMBLE.size:header_end].decode('utf-8'))
            specs: List = parse_obj_as(List[LayerSpec], header['layers'])
            class_names = [str(name) for name in header['class_names']]
            input_shape = tuple(int(d) for d in header['input_shape'])
            declared = int(header['parameter_count'])
        except ValidationError as e:
            raise FormatError(f"Invalid layer specs in header: {e}", field="header.layers")
        except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise FormatError(f"Invalid header: {e}", field="header")
        try:
            provenance = ModelProvenance.parse_obj(header.get('provenance', {}))
        except ValidationError as e:
            raise FormatError(f"Invalid provenance in header: {e}", field="header.provenance")

        try:
            shapes = chain_shapes(specs, input_shape)
        except (ShapeError, SizeError) as e:
            raise FormatError(f"Header shapes do not chain: {e.message}", field="header.layers")

        if (len(data) - header_end) != 4 * declared:
            raise FormatError(f"Payload has {len(data) - header_end} bytes, header declares "
                              f"{declared} parameters ({4 * declared} bytes)", field="payload_length")
        payload = np.frombuffer(data, dtype=PAYLOAD_DTYPE, offset=header_end, count=declared)

        layers: List[LayerEntry] = []
        offset = 0
        for name, spec, (in_shape, out_shape) in zip(layer_names(specs), specs, shapes):
            template = _param_template(spec, in_shape)
            params = None
            if template is not None:
                restored = {}
                for param_name, tensor in template.named():
                    mask = _stored_mask(spec, param_name, tensor)
                    count = int(mask.sum()) if mask is not None else tensor.size
                    if offset + count > payload.size:
                        raise FormatError("Payload ends inside layer parameters", field="payload_length")
                    values = payload[offset:offset + count].astype(np.float32)
                    offset += count
                    if mask is not None:
                        full = np.zeros(tensor.data.shape, dtype=np.float32)
                        full[mask] = values
                    else:
                        full = values.reshape(tensor.data.shape)
                    restored[param_name] = Tensor.wrap(full)
                params = LayerParams(**restored)
            layers.append(LayerEntry(name=name, spec=spec, input_shape=in_shape,
                                     output_shape=out_shape, params=params))
        if offset != payload.size:
            raise FormatError(f"Header declares {declared} parameters but layers own {offset}",
                              field="parameter_count")
        try:
            model = Model(layers, input_shape=input_shape, class_names=class_names, provenance=provenance)
        except (ArgumentError, ShapeError) as e:
            raise FormatError(f"Inconsistent header: {e.message}", field="header.class_names")
        logger.info(f"Loaded model with {len(layers)} layers, {model.parameter_count()} parameters")
        return model


save_model = ModelStore.save_model
load_model = ModelStore.load_model
