"""
Seeded synthetic glyphs: dark strokes on a light, noisy 28x28 page.

Each class owns a fixed set of line strokes; every sample jitters the stroke
endpoints and shifts the whole glyph by a pixel or two. Rendered images go
through the same raw preprocessing path as scanned characters.
"""
from typing import List, Sequence, Tuple

import numpy as np

from src.models.image import RawImage
from src.services.dataset_service import DatasetService, LabeledExample
from src.services.preprocess_service import CONTENT_SIZE, PreprocessService


STROKES_PER_GLYPH = 3
BACKGROUND_RANGE = (230, 256)
INK_RANGE = (0, 40)

_yy, _xx = np.mgrid[0:CONTENT_SIZE, 0:CONTENT_SIZE].astype(np.float64)


def glyph_prototype(class_index: int, seed: int = 0) -> np.ndarray:
    """Stroke endpoints (y0, x0, y1, x1) of one class, inside a 4..23 box"""
    rng = np.random.default_rng([seed, class_index, 7])
    return rng.uniform(4.0, 23.0, size=(STROKES_PER_GLYPH, 4))


def _segment_distance(y0: float, x0: float, y1: float, x1: float) -> np.ndarray:
    dy, dx = y1 - y0, x1 - x0
    length_sq = dy * dy + dx * dx
    if length_sq == 0:
        t = np.zeros_like(_yy)
    else:
        t = np.clip(((_yy - y0) * dy + (_xx - x0) * dx) / length_sq, 0.0, 1.0)
    return np.hypot(_yy - (y0 + t * dy), _xx - (x0 + t * dx))


def render_glyph(strokes: np.ndarray, rng: np.random.Generator, jitter: float = 1.0,
                 shift: int = 1, thickness: float = 1.3) -> RawImage:
    """One jittered sample of a stroke set as a 28x28 gray RawImage"""
    offset = rng.integers(-shift, shift + 1, size=2) if shift else np.zeros(2)
    moved = strokes + rng.normal(0.0, jitter, size=strokes.shape)
    moved[:, [0, 2]] += offset[0]
    moved[:, [1, 3]] += offset[1]
    moved = np.clip(moved, 2.0, CONTENT_SIZE - 3.0)

    ink = np.zeros((CONTENT_SIZE, CONTENT_SIZE), dtype=bool)
    for y0, x0, y1, x1 in moved:
        ink |= _segment_distance(y0, x0, y1, x1) <= thickness

    page = rng.integers(*BACKGROUND_RANGE, size=(CONTENT_SIZE, CONTENT_SIZE))
    strokes_px = rng.integers(*INK_RANGE, size=(CONTENT_SIZE, CONTENT_SIZE))
    return RawImage(np.where(ink, strokes_px, page).astype(np.uint8))


def synthetic_images(class_count: int, per_class: int, seed: int = 0) -> List[Tuple[RawImage, int]]:
    """Raw glyph images with class indices, class-major order"""
    images = []
    for class_index in range(class_count):
        prototype = glyph_prototype(class_index, seed)
        rng = np.random.default_rng([seed, class_index, 11])
        images.extend((render_glyph(prototype, rng), class_index) for _ in range(per_class))
    return images


def synthetic_examples(class_count: int, per_class: int, seed: int = 0,
                       threshold: int = None) -> List[LabeledExample]:
    """Synthetic glyphs run through the raw preprocessing pipeline"""
    return [
        LabeledExample(image=PreprocessService.preprocess(image, already_processed=False, threshold=threshold),
                       class_index=class_index)
        for image, class_index in synthetic_images(class_count, per_class, seed)
    ]


def nearest_centroid_accuracy(train: Sequence[LabeledExample], test: Sequence[LabeledExample]) -> float:
    """Accuracy of assigning each test image to the closest per-class mean training image"""
    train_images, train_labels = DatasetService.stack_examples(train)
    test_images, test_labels = DatasetService.stack_examples(test)
    class_count = int(max(train_labels.max(), test_labels.max())) + 1
    flat_train = train_images.reshape(train_images.shape[0], -1).astype(np.float64)
    centroids = np.zeros((class_count, flat_train.shape[1]))
    for k in range(class_count):
        members = flat_train[train_labels == k]
        if members.size:
            centroids[k] = members.mean(axis=0)
    flat_test = test_images.reshape(test_images.shape[0], -1).astype(np.float64)
    distances = ((flat_test[:, np.newaxis, :] - centroids[np.newaxis, :, :]) ** 2).sum(axis=-1)
    return float((distances.argmin(axis=1) == test_labels).mean())
