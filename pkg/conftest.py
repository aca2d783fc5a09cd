"""
Shared pytest fixtures and markers
"""
import numpy as np
import pytest

from src.models.image import RawImage
from src.models.network import Model
from src.models.params import LayerParams
from src.models.tensor import Tensor
from src.schemas import DenseSpec, FlattenSpec, SoftmaxSpec
from src.services.dataset_service import LabeledExample
from src.services.preprocess_service import PreprocessService
from src.services.training_service import assemble_reference_model
from src.utils.pgm import write_pgm
from src.utils.synthetic import glyph_prototype, render_glyph


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running training suites")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def reference_model():
    return assemble_reference_model(seed=0)


@pytest.fixture
def glyph_tree(tmp_path):
    """
    Factory writing a class-per-directory tree of raw 28x28 glyph PGMs

    Returns the root path; class directories are class_a, class_b, ...
    """
    def build(class_count=2, per_class=2, seed=0, root_name="data"):
        root = tmp_path / root_name
        for class_index in range(class_count):
            class_dir = root / f"class_{chr(ord('a') + class_index)}"
            class_dir.mkdir(parents=True)
            generator = np.random.default_rng([seed, class_index])
            for i in range(per_class):
                image = render_glyph(glyph_prototype(class_index, seed), generator)
                write_pgm(class_dir / f"{i:03d}.pgm", image)
        return root

    return build


@pytest.fixture
def white_page():
    return RawImage(np.full((28, 28), 255, dtype=np.uint8))


CRAFTED_ROW = 10


def crafted_pixels(predicted_class):
    """32x32 byte image lighting the pixel the crafted model reads for predicted_class"""
    pixels = np.zeros((32, 32), dtype=np.uint8)
    pixels[CRAFTED_ROW, 10 + predicted_class] = 255
    return pixels


@pytest.fixture
def crafted_model():
    """
    Flatten -> Dense(1024 -> 3) -> Softmax predicting class k when pixel
    (CRAFTED_ROW, 10 + k) is lit
    """
    specs = [FlattenSpec(), DenseSpec(in_features=1024, out_features=3), SoftmaxSpec()]
    model = Model.assemble(specs, input_shape=(32, 32, 1), seed=0, class_count=3,
                           class_names=["class_a", "class_b", "class_c"])
    weights = np.zeros((3, 1024), dtype=np.float32)
    for k in range(3):
        weights[k, CRAFTED_ROW * 32 + 10 + k] = 10.0
    dense = LayerParams(weights=Tensor(weights), biases=Tensor(np.zeros(3, dtype=np.float32)))
    return model.with_params([None, dense, None])


@pytest.fixture
def crafted_examples():
    """True classes [0, 0, 1, 2], crafted predictions [0, 1, 1, 2]"""
    return [
        LabeledExample(image=PreprocessService.normalize(RawImage(crafted_pixels(predicted))), class_index=true)
        for true, predicted in [(0, 0), (0, 1), (1, 1), (2, 2)]
    ]


@pytest.fixture
def crafted_tree(tmp_path):
    """Already-processed PGM tree matching crafted_examples"""
    root = tmp_path / "crafted"
    layout = {"class_a": [0, 1], "class_b": [1], "class_c": [2]}
    for name, predictions in layout.items():
        (root / name).mkdir(parents=True)
        for i, predicted in enumerate(predictions):
            write_pgm(root / name / f"{i}.pgm", RawImage(crafted_pixels(predicted)))
    return root
