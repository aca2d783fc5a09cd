import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from config import settings
from src.models.image import RawImage
from src.models.tensor import Tensor
from src.utils.error_handler import FormatError, ShapeError

logger = logging.getLogger(__name__)

CONTENT_SIZE = 28
PADDED_SIZE = 32
PADDING = (PADDED_SIZE - CONTENT_SIZE) // 2

# luminance weights scaled by 1000 so rounding stays exact
LUMA_WEIGHTS = np.array([299, 587, 114], dtype=np.int64)


@dataclass
class VerifyResult:
    """Violations found in one already-processed image"""
    size_ok: bool = True
    border_violations: int = 0
    background_violations: int = 0
    messages: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.size_ok and not self.border_violations and not self.background_violations


class PreprocessService:
    """Service class for the grayscale / invert / suppress / pad / normalize pipeline"""

    @staticmethod
    def to_grayscale(img: RawImage) -> RawImage:
        """
        Convert RGB to gray with 0.299R + 0.587G + 0.114B, rounded half up

        Args:
            img (RawImage): 1- or 3-channel image

        Returns:
            RawImage: Single-channel image (gray input passes through)
        """
        if img.channels == 1:
            return img
        if img.channels != 3:
            raise FormatError(f"Unsupported channel count {img.channels}", field="channels")
        weighted = img.pixels.astype(np.int64) @ LUMA_WEIGHTS
        return RawImage(((weighted + 500) // 1000).astype(np.uint8))

    @staticmethod
    def invert(img: RawImage) -> RawImage:
        """Each pixel becomes 255 - pixel: dark ink on white turns into bright ink on black"""
        return RawImage(255 - img.gray)

    @staticmethod
    def suppress_background(img: RawImage, threshold: int = None) -> RawImage:
        """Pixels below the threshold become 0; the rest are unchanged"""
        threshold = settings.background_threshold if threshold is None else threshold
        gray = img.gray
        return RawImage(np.where(gray < threshold, 0, gray).astype(np.uint8))

    @staticmethod
    def pad_to_32(img: RawImage) -> RawImage:
        """
        Place 28x28 content at rows/cols 2..29 of a zero 32x32 canvas

        Raises:
            ShapeError: If the input is not 28x28
        """
        gray = img.gray
        if gray.shape != (CONTENT_SIZE, CONTENT_SIZE):
            raise ShapeError(f"pad_to_32 needs a {CONTENT_SIZE}x{CONTENT_SIZE} image, got "
                             f"{img.width}x{img.height}", field="size")
        canvas = np.zeros((PADDED_SIZE, PADDED_SIZE), dtype=np.uint8)
        canvas[PADDING:PADDING + CONTENT_SIZE, PADDING:PADDING + CONTENT_SIZE] = gray
        return RawImage(canvas)

    @staticmethod
    def normalize(img: RawImage) -> Tensor:
        """Scale bytes to [0, 1] as an H x W x 1 tensor"""
        return Tensor.wrap(img.gray.astype(np.float32)[:, :, np.newaxis] / np.float32(255.0))

    @staticmethod
    def preprocess_raw(img: RawImage, already_processed: bool, threshold: int = None) -> RawImage:
        """
        Byte-level pipeline, stopping short of normalization

        Raises:
            ShapeError: If the image is neither 28x28 (raw) nor 32x32 (already processed)
        """
        expected = PADDED_SIZE if already_processed else CONTENT_SIZE
        if (img.width, img.height) != (expected, expected):
            raise ShapeError(
                f"Expected a {expected}x{expected} image for the "
                f"{'already-processed' if already_processed else 'raw'} path "
                f"({CONTENT_SIZE}x{CONTENT_SIZE} raw, {PADDED_SIZE}x{PADDED_SIZE} processed), "
                f"got {img.width}x{img.height}",
                field="size",
            )
        gray = PreprocessService.to_grayscale(img)
        if already_processed:
            return gray
        inverted = PreprocessService.invert(gray)
        suppressed = PreprocessService.suppress_background(inverted, threshold)
        return PreprocessService.pad_to_32(suppressed)

    @staticmethod
    def preprocess(img: RawImage, already_processed: bool, threshold: int = None) -> Tensor:
        """Full pipeline to a 32x32x1 tensor in [0, 1]"""
        return PreprocessService.normalize(PreprocessService.preprocess_raw(img, already_processed, threshold))

    @staticmethod
    def infer_already_processed(img: RawImage) -> bool:
        """32x32 images are taken as already processed, 28x28 as raw content"""
        if (img.width, img.height) == (PADDED_SIZE, PADDED_SIZE):
            return True
        if (img.width, img.height) == (CONTENT_SIZE, CONTENT_SIZE):
            return False
        raise ShapeError(f"Expected {CONTENT_SIZE}x{CONTENT_SIZE} or {PADDED_SIZE}x{PADDED_SIZE}, "
                         f"got {img.width}x{img.height}", field="size")

    @staticmethod
    def verify_processed(img: RawImage, threshold: int = None) -> VerifyResult:
        """
        Check an already-processed image: 32x32, zero 2-pixel border, and no
        background residue (nonzero pixels below the threshold)
        """
        threshold = settings.background_threshold if threshold is None else threshold
        result = VerifyResult()
        if (img.width, img.height) != (PADDED_SIZE, PADDED_SIZE):
            result.size_ok = False
            result.messages.append(f"size {img.width}x{img.height}, expected {PADDED_SIZE}x{PADDED_SIZE}")
            return result
        gray = PreprocessService.to_grayscale(img).gray
        border = np.ones_like(gray, dtype=bool)
        border[PADDING:PADDING + CONTENT_SIZE, PADDING:PADDING + CONTENT_SIZE] = False
        result.border_violations = int(np.count_nonzero(gray[border]))
        result.background_violations = int(np.count_nonzero((gray > 0) & (gray < threshold)))
        if result.border_violations:
            result.messages.append(f"{result.border_violations} nonzero border pixels")
        if result.background_violations:
            result.messages.append(f"{result.background_violations} background pixels in (0, {threshold})")
        return result


to_grayscale = PreprocessService.to_grayscale
invert = PreprocessService.invert
suppress_background = PreprocessService.suppress_background
pad_to_32 = PreprocessService.pad_to_32
normalize = PreprocessService.normalize
preprocess = PreprocessService.preprocess
