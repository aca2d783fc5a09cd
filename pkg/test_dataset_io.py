"""
Tests for image codecs, dataset loading, splitting, batching and the model file
"""
import io
import json
import struct
import zlib

import numpy as np
import pytest
from hypothesis import given, settings as hypothesis_settings
from hypothesis import strategies as st

from src.models.image import RawImage
from src.models.tensor import Tensor
from src.schemas import ModelProvenance
from src.services.dataset_service import DatasetService, LabeledExample
from src.services.model_store import MAGIC, PREAMBLE, ModelStore
from src.services.training_service import assemble_reference_model, evaluate
from src.utils.error_handler import ArgumentError, DatasetError, FormatError
from src.utils.pgm import decode_png, decode_pnm, encode_pnm, write_pgm
from src.utils.synthetic import synthetic_examples


def labeled(class_sizes):
    """Cheap examples sharing one image tensor, class-major"""
    image = Tensor(np.zeros((1, 1, 1), dtype=np.float32))
    return [LabeledExample(image=image, class_index=k) for k, n in enumerate(class_sizes) for _ in range(n)]


def parameter_bytes(model):
    return [t.data.tobytes() for layer in model.layers if layer.params for _, t in layer.params.named()]


def corrupt_png_bytes(png):
    """A valid 28x28 greyscale PNG whose IDAT stream is garbage under a correct CRC"""

    buffer = io.BytesIO()
    png.Writer(width=28, height=28, greyscale=True, bitdepth=8).write(buffer, [[255] * 28] * 28)
    data = buffer.getvalue()
    start = data.index(b"IDAT")
    length = struct.unpack(">I", data[start - 4:start])[0]
    # zlib header, then a deflate block with the reserved block type
    payload = b"\x78\x9c" + b"\xff" * (length - 2)
    crc = struct.pack(">I", zlib.crc32(b"IDAT" + payload) & 0xFFFFFFFF)
    return data[:start + 4] + payload + crc + data[start + 8 + length:]


class TestPnmCodec:
    def test_decode_with_comment(self):
        data = b"P5\n# scanned\n3 2\n255\n" + bytes(range(6))
        img = decode_pnm(data)
        assert (img.width, img.height, img.channels) == (3, 2, 1)
        assert img.gray.tolist() == [[0, 1, 2], [3, 4, 5]]

    def test_decode_ppm(self):
        img = decode_pnm(b"P6 1 1 255\n" + bytes([255, 0, 0]))
        assert img.channels == 3

    def test_encode_decode(self, rng):
        img = RawImage(rng.integers(0, 256, size=(4, 5), dtype=np.uint8))
        assert np.array_equal(decode_pnm(encode_pnm(img)).pixels, img.pixels)

    @pytest.mark.parametrize("data,field", [
        (b"P2\n1 1\n255\n0", "magic"),
        (b"P5\n1 1\n65535\n\x00\x00", "maxval"),
        (b"P5\n2 2\n255\n\x00", "payload"),
        (b"P5\n2", "header"),
    ])
    def test_malformed(self, data, field):
        with pytest.raises(FormatError) as excinfo:
            decode_pnm(data)
        assert excinfo.value.field == field

    def test_png_hook(self, tmp_path):
        png = pytest.importorskip("png")
        path = tmp_path / "glyph.png"
        rows = [[0, 128, 255], [255, 128, 0]]
        with open(path, "wb") as handle:
            png.Writer(width=3, height=2, greyscale=True, bitdepth=8).write(handle, rows)
        assert decode_png(path.read_bytes()).gray.tolist() == rows

    def test_corrupt_png_stream(self):
        png = pytest.importorskip("png")
        with pytest.raises(FormatError) as excinfo:
            decode_png(corrupt_png_bytes(png))
        assert excinfo.value.field == "payload"


class TestLoadDataset:
    def test_class_per_directory(self, glyph_tree):
        dataset = DatasetService.load_dataset(glyph_tree(class_count=2, per_class=3), already_processed=False)
        assert dataset.class_names == ["class_a", "class_b"]
        assert [e.class_index for e in dataset.examples] == [0, 0, 0, 1, 1, 1]
        assert all(e.image.shape == (32, 32, 1) for e in dataset.examples)
        assert dataset.report.ok

    def test_single_image(self, tmp_path, white_page):
        (tmp_path / "ka").mkdir()
        write_pgm(tmp_path / "ka" / "0.pgm", white_page)
        dataset = DatasetService.load_dataset(tmp_path, already_processed=False)
        assert len(dataset.examples) == 1 and dataset.examples[0].class_index == 0

    def test_byte_order_class_names(self, tmp_path, white_page):
        for name in ["kha", "ka", "Ga"]:
            (tmp_path / name).mkdir()
            write_pgm(tmp_path / name / "0.pgm", white_page)
        assert DatasetService.load_dataset(tmp_path, False).class_names == ["Ga", "ka", "kha"]

    def test_corrupt_file_is_skipped_with_report(self, glyph_tree):
        root = glyph_tree(class_count=1, per_class=2)
        (root / "class_a" / "broken.pgm").write_bytes(b"P5\n28 28\n255\n\x00")
        dataset = DatasetService.load_dataset(root, False)
        assert len(dataset.examples) == 2
        assert len(dataset.report.skipped) == 1
        assert dataset.report.skipped[0][0].endswith("broken.pgm")

    def test_corrupt_png_is_skipped_with_report(self, tmp_path, white_page):
        png = pytest.importorskip("png")
        (tmp_path / "ka").mkdir()
        write_pgm(tmp_path / "ka" / "0.pgm", white_page)
        (tmp_path / "ka" / "1.png").write_bytes(corrupt_png_bytes(png))
        dataset = DatasetService.load_dataset(tmp_path, already_processed=False)
        assert len(dataset.examples) == 1
        assert len(dataset.report.skipped) == 1
        assert dataset.report.skipped[0][0].endswith("1.png")

    def test_wrong_size_is_skipped(self, tmp_path, white_page):
        (tmp_path / "ka").mkdir()
        write_pgm(tmp_path / "ka" / "0.pgm", white_page)
        write_pgm(tmp_path / "ka" / "1.pgm", RawImage(np.zeros((32, 32), dtype=np.uint8)))
        dataset = DatasetService.load_dataset(tmp_path, already_processed=False)
        assert len(dataset.examples) == 1 and len(dataset.report.skipped) == 1

    def test_empty_root(self, tmp_path):
        with pytest.raises(DatasetError):
            DatasetService.load_dataset(tmp_path, False)

    def test_no_decodable_image(self, tmp_path):
        (tmp_path / "ka").mkdir()
        (tmp_path / "ka" / "notes.txt").write_text("not an image")
        with pytest.raises(DatasetError):
            DatasetService.load_dataset(tmp_path, False)

    def test_worker_count_does_not_change_order(self, glyph_tree):
        root = glyph_tree(class_count=3, per_class=4)
        serial = DatasetService.load_dataset(root, False, workers=1)
        parallel = DatasetService.load_dataset(root, False, workers=8)
        assert [e.source for e in serial.examples] == [e.source for e in parallel.examples]
        assert all(np.array_equal(a.image.data, b.image.data) for a, b in zip(serial.examples, parallel.examples))


class TestSplit:
    def test_full_dataset_counts(self):
        examples = labeled([1700] * 36)
        split = DatasetService.split_dataset(examples, 0.8, seed=0)
        assert (len(split.train), len(split.test)) == (48_960, 12_240)
        train_counts = np.bincount([e.class_index for e in split.train], minlength=36)
        test_counts = np.bincount([e.class_index for e in split.test], minlength=36)
        assert set(train_counts.tolist()) == {1360}
        assert set(test_counts.tolist()) == {340}

    def test_single_class(self):
        split = DatasetService.split_dataset(labeled([10]), 0.8, seed=1)
        assert (len(split.train), len(split.test)) == (8, 2)

    def test_disjoint_and_exhaustive(self):
        examples = labeled([7, 5, 9])
        split = DatasetService.split_dataset(examples, 0.8, seed=2)
        train_ids = {id(e) for e in split.train}
        test_ids = {id(e) for e in split.test}
        assert not train_ids & test_ids
        assert train_ids | test_ids == {id(e) for e in examples}

    @hypothesis_settings(max_examples=25, deadline=None)
    @given(st.lists(st.integers(1, 20), min_size=1, max_size=5), st.integers(0, 2 ** 32), st.floats(0.1, 0.9))
    def test_deterministic(self, sizes, seed, ratio):
        examples = labeled(sizes)
        first = DatasetService.split_dataset(examples, ratio, seed)
        second = DatasetService.split_dataset(examples, ratio, seed)
        assert [id(e) for e in first.train] == [id(e) for e in second.train]
        assert [id(e) for e in first.test] == [id(e) for e in second.test]

    @pytest.mark.parametrize("ratio", [0.0, 1.0, -0.5])
    def test_ratio_out_of_range(self, ratio):
        with pytest.raises(ArgumentError):
            DatasetService.split_dataset(labeled([4]), ratio, seed=0)

    def test_empty_class(self):
        with pytest.raises(ArgumentError):
            DatasetService.split_dataset(labeled([4]), 0.8, seed=0, class_names=["ka", "kha"])

    def test_unstratified(self):
        split = DatasetService.split_dataset(labeled([3, 7]), 0.8, seed=0, stratified=False)
        assert (len(split.train), len(split.test)) == (8, 2)


class TestBatches:
    def test_partial_final_batch(self):
        sizes = [len(b) for b in DatasetService.batches(labeled([10]), 4, seed=0, epoch=1)]
        assert sizes == [4, 4, 2]

    def test_single_batch(self):
        assert len(DatasetService.batches(labeled([5]), 64, seed=0, epoch=1)) == 1

    def test_same_seed_and_epoch(self):
        first = DatasetService.batch_indices(50, 8, seed=3, epoch=2)
        second = DatasetService.batch_indices(50, 8, seed=3, epoch=2)
        assert all(np.array_equal(a, b) for a, b in zip(first, second))

    def test_epochs_reshuffle(self):
        first = np.concatenate(DatasetService.batch_indices(50, 8, seed=3, epoch=1))
        second = np.concatenate(DatasetService.batch_indices(50, 8, seed=3, epoch=2))
        assert not np.array_equal(first, second)

    def test_invalid_batch_size(self):
        with pytest.raises(ArgumentError):
            DatasetService.batch_indices(10, 0, seed=0, epoch=1)

    @hypothesis_settings(max_examples=50, deadline=None)
    @given(st.integers(1, 200), st.integers(1, 64), st.integers(0, 1000), st.integers(1, 30))
    def test_partition(self, n, batch_size, seed, epoch):
        order = np.concatenate(DatasetService.batch_indices(n, batch_size, seed, epoch))
        assert sorted(order.tolist()) == list(range(n))


class TestModelFile:
    def test_roundtrip_is_bit_exact(self, tmp_path, reference_model):
        path = tmp_path / "model.dcnn"
        ModelStore.save_model(reference_model, path)
        loaded = ModelStore.load_model(path)
        assert parameter_bytes(loaded) == parameter_bytes(reference_model)
        assert loaded.specs == reference_model.specs
        assert loaded.class_names == reference_model.class_names

    def test_reference_payload_size(self, tmp_path, reference_model):
        path = tmp_path / "model.dcnn"
        ModelStore.save_model(reference_model, path)
        data = path.read_bytes()
        magic, version, header_length = PREAMBLE.unpack_from(data)
        assert magic == MAGIC and version == 1
        header = json.loads(data[PREAMBLE.size:PREAMBLE.size + header_length])
        assert header["parameter_count"] == 58_544
        assert len(data) == PREAMBLE.size + header_length + 4 * 58_544

    def test_evaluate_unchanged_by_roundtrip(self, tmp_path):
        model = assemble_reference_model(seed=1, class_count=3)
        examples = synthetic_examples(class_count=3, per_class=4, seed=1)
        path = tmp_path / "model.dcnn"
        ModelStore.save_model(model, path)
        assert evaluate(ModelStore.load_model(path), examples) == evaluate(model, examples)

    @pytest.mark.parametrize("options", [{"c2_connections": 3}, {"pool_affine": True}])
    def test_variant_roundtrip(self, tmp_path, options):
        model = assemble_reference_model(seed=2, **options)
        path = tmp_path / "variant.dcnn"
        ModelStore.save_model(model, path)
        loaded = ModelStore.load_model(path)
        assert parameter_bytes(loaded) == parameter_bytes(model)
        assert loaded.parameter_count() == model.parameter_count()

    def test_truncated_payload(self, tmp_path, reference_model):
        path = tmp_path / "model.dcnn"
        ModelStore.save_model(reference_model, path)
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(FormatError) as excinfo:
            ModelStore.load_model(path)
        assert excinfo.value.field == "payload_length"

    def test_bad_magic(self, reference_model):
        with pytest.raises(FormatError) as excinfo:
            ModelStore.decode_model(b"XXXX" + b"\x00" * 20)
        assert excinfo.value.field == "magic"

    def test_bad_version(self, tmp_path, reference_model):
        path = tmp_path / "model.dcnn"
        ModelStore.save_model(reference_model, path)
        data = bytearray(path.read_bytes())
        data[4:8] = struct.pack("<I", 99)
        with pytest.raises(FormatError) as excinfo:
            ModelStore.decode_model(bytes(data))
        assert excinfo.value.field == "version"

    def test_header_shapes_must_chain(self):
        header = json.dumps({
            "layers": [{"kind": "dense", "in_features": 5, "out_features": 2}],
            "class_names": ["a", "b"],
            "input_shape": [4],
            "parameter_count": 12,
        }).encode()
        data = PREAMBLE.pack(MAGIC, 1, len(header)) + header + b"\x00" * 48
        with pytest.raises(FormatError) as excinfo:
            ModelStore.decode_model(data)
        assert excinfo.value.field == "header.layers"

    def test_header_shape_overflow(self):
        header = json.dumps({"layers": [{"kind": "flatten"}], "class_names": ["a"],
                             "input_shape": [2 ** 40, 2 ** 40, 1], "parameter_count": 0}).encode()
        with pytest.raises(FormatError) as excinfo:
            ModelStore.decode_model(PREAMBLE.pack(MAGIC, 1, len(header)) + header)
        assert excinfo.value.field == "header.layers"

    def test_provenance_roundtrip(self, tmp_path):
        model = assemble_reference_model(seed=0, class_count=2)
        recorded = ModelProvenance(seed=9, split_ratio=0.75, background_threshold=40, already_processed=True)
        path = tmp_path / "tagged.dcnn"
        ModelStore.save_model(model.with_provenance(recorded), path)
        assert ModelStore.load_model(path).provenance == recorded

    def test_untagged_model_has_empty_provenance(self, tmp_path, reference_model):
        path = tmp_path / "plain.dcnn"
        ModelStore.save_model(reference_model, path)
        data = path.read_bytes()
        _, _, header_length = PREAMBLE.unpack_from(data)
        assert "provenance" not in json.loads(data[PREAMBLE.size:PREAMBLE.size + header_length])
        assert ModelStore.load_model(path).provenance == ModelProvenance()

    def test_invalid_provenance(self):
        header = json.dumps({"layers": [{"kind": "flatten"}], "class_names": ["a"], "input_shape": [1],
                             "parameter_count": 0, "provenance": {"background_threshold": 300}}).encode()
        with pytest.raises(FormatError) as excinfo:
            ModelStore.decode_model(PREAMBLE.pack(MAGIC, 1, len(header)) + header)
        assert excinfo.value.field == "header.provenance"

    def test_unknown_layer_kind(self):
        header = json.dumps({"layers": [{"kind": "dropout"}], "class_names": [], "input_shape": [4],
                             "parameter_count": 0}).encode()
        with pytest.raises(FormatError):
            ModelStore.decode_model(PREAMBLE.pack(MAGIC, 1, len(header)) + header)

    def test_unreadable_path(self, tmp_path):
        with pytest.raises(FormatError):
            ModelStore.load_model(tmp_path / "missing.dcnn")
