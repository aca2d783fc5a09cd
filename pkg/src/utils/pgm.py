"""
Netpbm and PNG image codecs.

Binary PGM (P5) and PPM (P6) with maxval 255 are built in. PNG decoding goes
through a registered decoder hook backed by pypng.
"""
import logging
import zlib
from pathlib import Path
from typing import Callable, Dict, Tuple, Union

import numpy as np

from src.models.image import RawImage
from src.utils.error_handler import FormatError

logger = logging.getLogger(__name__)

MAGIC_CHANNELS = {b'P5': 1, b'P6': 3}
WHITESPACE = b' \t\r\n\x0b\x0c'

Decoder = Callable[[bytes], RawImage]
_decoders: Dict[str, Decoder] = {}


def _read_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Next whitespace-separated header token, skipping # comments"""
    length = len(data)
    while pos < length:
        if data[pos] in WHITESPACE:
            pos += 1
        elif data[pos:pos + 1] == b'#':
            while pos < length and data[pos:pos + 1] not in (b'\n', b'\r'):
                pos += 1
        else:
            break
    start = pos
    while pos < length and data[pos] not in WHITESPACE and data[pos:pos + 1] != b'#':
        pos += 1
    if start == pos:
        raise FormatError("Truncated Netpbm header", field="header")
    return data[start:pos], pos


def decode_pnm(data: bytes) -> RawImage:
    """
    Decode a binary PGM/PPM image

    Args:
        data (bytes): File contents

    Returns:
        RawImage: Decoded image

    Raises:
        FormatError: If the magic, header or pixel payload is invalid
    """
    magic = data[:2]
    if magic not in MAGIC_CHANNELS:
        raise FormatError(f"Unknown Netpbm magic {magic!r}; expected P5 or P6", field="magic")
    channels = MAGIC_CHANNELS[magic]
    pos = 2
    fields = []
    for _ in range(3):
        token, pos = _read_token(data, pos)
        if not token.isdigit():
            raise FormatError(f"Non-numeric header field {token!r}", field="header")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(f"Invalid size {width}x{height}", field="size")
    if maxval != 255:
        raise FormatError(f"Only maxval 255 is supported, got {maxval}", field="maxval")
    if pos >= len(data) or data[pos] not in WHITESPACE:
        raise FormatError("Missing whitespace after maxval", field="header")
    pos += 1
    expected = width * height * channels
    payload = data[pos:pos + expected]
    if len(payload) != expected:
        raise FormatError(f"Pixel payload has {len(payload)} bytes, expected {expected}", field="payload")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, channels)
    return RawImage(pixels.copy())


def encode_pnm(image: RawImage) -> bytes:
    """Encode as binary PGM (gray) or PPM (RGB)"""
    magic = b'P5' if image.channels == 1 else b'P6'
    header = magic + f"\n{image.width} {image.height}\n255\n".encode('ascii')
    return header + image.pixels.tobytes()


def decode_png(data: bytes) -> RawImage:
    """Decode an 8-bit PNG via pypng; alpha is dropped, palettes are expanded"""
    try:
        import png
    except ImportError:
        raise FormatError("PNG decoding needs the pypng package", field="decoder")
    try:
        width, height, rows, info = png.Reader(bytes=data).asDirect()
        if info.get('bitdepth') != 8:
            raise FormatError(f"Only 8-bit PNG is supported, got {info.get('bitdepth')}", field="bitdepth")
        planes = info['planes']
        # pypng inflates lazily: rows must be drained inside the try
        decoded = [np.asarray(row, dtype=np.uint8) for row in rows]
        pixels = np.vstack(decoded).reshape(height, width, planes)
    except (png.Error, zlib.error, ValueError) as e:
        raise FormatError(f"Invalid PNG: {e}", field="payload")
    if info.get('alpha'):
        pixels = pixels[:, :, :planes - 1]
    return RawImage(pixels)


def register_decoder(suffix: str, decoder: Decoder) -> None:
    """Register a decoder for a file suffix such as '.png'"""
    _decoders[suffix.lower()] = decoder
    logger.debug(f"Registered image decoder for {suffix}")


def supported_suffixes() -> Tuple[str, ...]:
    return tuple(sorted(_decoders))


def read_image(path: Union[str, Path]) -> RawImage:
    """
    Decode an image file using the decoder registered for its suffix

    Raises:
        FormatError: If no decoder handles the suffix or decoding fails
    """
    path = Path(path)
    decoder = _decoders.get(path.suffix.lower())
    if decoder is None:
        raise FormatError(f"No decoder for '{path.suffix}' files", field="suffix")
    return decoder(path.read_bytes())


def write_pgm(path: Union[str, Path], image: RawImage) -> None:
    Path(path).write_bytes(encode_pnm(image))


register_decoder('.pgm', decode_pnm)
register_decoder('.ppm', decode_pnm)
register_decoder('.pnm', decode_pnm)
register_decoder('.png', decode_png)
