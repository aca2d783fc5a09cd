import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from src.models.tensor import Tensor
from src.services.preprocess_service import PreprocessService, VerifyResult
from src.utils.error_handler import ArgumentError, DatasetError, EngineError
from src.utils.pgm import read_image, supported_suffixes, write_pgm

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LabeledExample:
    """A preprocessed 32x32x1 image with its class index"""
    image: Tensor
    class_index: int
    source: Optional[str] = None


@dataclass
class LoadReport:
    """Files skipped during a dataset load, with reasons"""
    loaded: int = 0
    skipped: List[Tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.skipped


@dataclass
class LoadedDataset:
    examples: List[LabeledExample]
    class_names: List[str]
    report: LoadReport


@dataclass
class DatasetSplit:
    train: List[LabeledExample]
    test: List[LabeledExample]
    class_names: List[str]


def _class_directories(root: Path) -> List[Path]:
    if not root.is_dir():
        raise DatasetError(f"Dataset root {root} is not a directory", field="root")
    # byte-order sort keeps class indices stable across filesystems
    return sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name.encode('utf-8'))


def _image_files(class_dir: Path) -> List[Path]:
    suffixes = supported_suffixes()
    return sorted(
        (p for p in class_dir.iterdir() if p.is_file() and p.suffix.lower() in suffixes),
        key=lambda p: p.name.encode('utf-8'),
    )


class DatasetService:
    """Service class for dataset loading, splitting and batching"""

    @staticmethod
    def load_dataset(root_path: Union[str, Path], already_processed: bool, threshold: int = None,
                     workers: int = None) -> LoadedDataset:
        """
        Load a class-per-directory image tree

        Args:
            root_path: Directory holding one sub-directory per class
            already_processed (bool): Images are 32x32 published images rather than 28x28 raw content
            threshold (int): Background threshold for the raw path
            workers (int): Decode threads; results keep sorted-path order

        Returns:
            LoadedDataset: Examples, sorted class names and the skip report

        Raises:
            DatasetError: If the root has no class directory or no decodable image
        """
        root = Path(root_path)
        workers = workers or settings.load_workers
        class_dirs = _class_directories(root)
        if not class_dirs:
            raise DatasetError(f"No class directories under {root}", field="root")
        class_names = [d.name for d in class_dirs]

        jobs = [(index, path) for index, d in enumerate(class_dirs) for path in _image_files(d)]

        def decode(job):
            index, path = job
            try:
                image = PreprocessService.preprocess(read_image(path), already_processed, threshold)
                return LabeledExample(image=image, class_index=index, source=str(path)), None
            except (EngineError, OSError) as e:
                return None, (str(path), str(e))

        with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
            results = list(pool.map(decode, jobs))

        report = LoadReport()
        examples = []
        for example, failure in results:
            if failure is not None:
                report.skipped.append(failure)
                logger.warning(f"Skipped {failure[0]}: {failure[1]}")
            else:
                examples.append(example)
        report.loaded = len(examples)
        if not examples:
            raise DatasetError(f"No decodable images under {root}", field="root")
        logger.info(f"Loaded {len(examples)} images in {len(class_names)} classes from {root} "
                    f"({len(report.skipped)} skipped)")
        return LoadedDataset(examples=examples, class_names=class_names, report=report)

    @staticmethod
    def split_dataset(examples: Sequence[LabeledExample], ratio: float = 0.8, seed: int = 0,
                      stratified: bool = True, class_names: Sequence[str] = None) -> DatasetSplit:
        """
        Seeded train/test split; stratified splits shuffle within each class and
        send the first floor(ratio * n) examples to train

        Raises:
            ArgumentError: If ratio is outside (0, 1) or a class is empty under stratification
        """
        if not 0 < ratio < 1:
            raise ArgumentError(f"Split ratio must be in (0, 1), got {ratio}", field="ratio")
        if class_names is None:
            class_count = max((e.class_index for e in examples), default=-1) + 1
            class_names = [str(i) for i in range(class_count)]
        rng = np.random.default_rng(seed)
        train: List[LabeledExample] = []
        test: List[LabeledExample] = []
        if stratified:
            by_class: List[List[LabeledExample]] = [[] for _ in class_names]
            for example in examples:
                by_class[example.class_index].append(example)
            for index, members in enumerate(by_class):
                if not members:
                    raise ArgumentError(f"Class {class_names[index]!r} has no examples", field="examples")
                order = rng.permutation(len(members))
                cut = math.floor(ratio * len(members))
                train.extend(members[i] for i in order[:cut])
                test.extend(members[i] for i in order[cut:])
        else:
            order = rng.permutation(len(examples))
            cut = math.floor(ratio * len(examples))
            train = [examples[i] for i in order[:cut]]
            test = [examples[i] for i in order[cut:]]
        logger.info(f"Split {len(examples)} examples into {len(train)} train / {len(test)} test (seed {seed})")
        return DatasetSplit(train=train, test=test, class_names=list(class_names))

    @staticmethod
    def batch_indices(n: int, batch_size: int, seed: int, epoch: int, shuffle: bool = True) -> List[np.ndarray]:
        """Index batches for one epoch; the generator is seeded with (seed, epoch)"""
        if batch_size < 1:
            raise ArgumentError(f"Batch size must be >= 1, got {batch_size}", field="batch_size")
        if shuffle:
            order = np.random.default_rng([seed, epoch]).permutation(n)
        else:
            order = np.arange(n)
        return [order[start:start + batch_size] for start in range(0, n, batch_size)]

    @staticmethod
    def batches(examples: Sequence[LabeledExample], batch_size: int, seed: int,
                epoch: int) -> List[List[LabeledExample]]:
        """Shuffled batches of batch_size; the final batch may be smaller"""
        return [
            [examples[i] for i in index_batch]
            for index_batch in DatasetService.batch_indices(len(examples), batch_size, seed, epoch)
        ]

    @staticmethod
    def stack_examples(examples: Sequence[LabeledExample]) -> Tuple[np.ndarray, np.ndarray]:
        """Images as one N x H x W x C array and labels as an int array"""
        if not examples:
            raise ArgumentError("Cannot stack an empty example list", field="examples")
        images = np.stack([e.image.data for e in examples])
        labels = np.fromiter((e.class_index for e in examples), dtype=np.int64, count=len(examples))
        return images, labels

    @staticmethod
    def image_paths(root_path: Union[str, Path]) -> List[Path]:
        """Every decodable image under root, byte-sorted by relative path"""
        root = Path(root_path)
        if not root.is_dir():
            raise DatasetError(f"Input root {root} is not a directory", field="root")
        suffixes = supported_suffixes()
        return sorted(
            (p for p in root.rglob('*') if p.is_file() and p.suffix.lower() in suffixes),
            key=lambda p: p.relative_to(root).as_posix().encode('utf-8'),
        )

    @staticmethod
    def preprocess_tree(in_root: Union[str, Path], out_root: Union[str, Path], already_processed: bool = False,
                        threshold: int = None) -> LoadReport:
        """
        Mirror an image tree as 32x32 PGM files

        Raises:
            DatasetError: If the input tree holds no image
        """
        in_root, out_root = Path(in_root), Path(out_root)
        paths = DatasetService.image_paths(in_root)
        if not paths:
            raise DatasetError(f"No images under {in_root}", field="in")
        report = LoadReport()
        for path in paths:
            target = (out_root / path.relative_to(in_root)).with_suffix('.pgm')
            try:
                processed = PreprocessService.preprocess_raw(read_image(path), already_processed, threshold)
                target.parent.mkdir(parents=True, exist_ok=True)
                write_pgm(target, processed)
                report.loaded += 1
            except (EngineError, OSError) as e:
                report.skipped.append((str(path), str(e)))
                logger.warning(f"Skipped {path}: {e}")
        logger.info(f"Preprocessed {report.loaded} images into {out_root} ({len(report.skipped)} skipped)")
        return report

    @staticmethod
    def verify_tree(root_path: Union[str, Path], threshold: int = None) -> List[Tuple[str, VerifyResult]]:
        """
        Verify every image of an already-processed tree

        Returns:
            list: (path, VerifyResult) pairs; undecodable files get a failed result
        """
        root = Path(root_path)
        paths = DatasetService.image_paths(root)
        if not paths:
            raise DatasetError(f"No images under {root}", field="in")
        results = []
        for path in paths:
            try:
                result = PreprocessService.verify_processed(read_image(path), threshold)
            except (EngineError, OSError) as e:
                result = VerifyResult(size_ok=False, messages=[f"undecodable: {e}"])
            if not result.ok:
                logger.warning(f"{path}: {'; '.join(result.messages)}")
            results.append((str(path), result))
        return results


load_dataset = DatasetService.load_dataset
split_dataset = DatasetService.split_dataset
batches = DatasetService.batches
