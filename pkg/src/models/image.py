from dataclasses import dataclass

import numpy as np

from src.utils.error_handler import FormatError


@dataclass(frozen=True)
class RawImage:
    """Row-major 8-bit image, 1 (gray) or 3 (RGB) channels, stored height x width x channels"""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim == 2:
            pixels = pixels[:, :, np.newaxis]
        if pixels.ndim != 3 or pixels.shape[2] not in (1, 3):
            raise FormatError(f"Unsupported image layout {pixels.shape}; need 1 or 3 channels", field="channels")
        if pixels.dtype != np.uint8:
            if pixels.size and (pixels.min() < 0 or pixels.max() > 255):
                raise FormatError("Pixel values must lie in 0-255", field="pixels")
            pixels = pixels.astype(np.uint8)
        pixels = np.ascontiguousarray(pixels)
        pixels.setflags(write=False)
        object.__setattr__(self, 'pixels', pixels)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    @property
    def gray(self) -> np.ndarray:
        """Height x width view of a single-channel image"""
        if self.channels != 1:
            raise FormatError(f"Expected a gray image, got {self.channels} channels", field="channels")
        return self.pixels[:, :, 0]

    def __repr__(self) -> str:
        return f"<RawImage({self.width}x{self.height}x{self.channels})>"
