import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from config import settings
from src.layers import softmax, sparse_connectivity
from src.models.network import DEFAULT_CLASS_COUNT, DEFAULT_INPUT_SHAPE, Model
from src.models.params import LayerParams
from src.models.tensor import Tensor, as_array
from src.schemas import (
    CSV_HEADER,
    Conv2DSpec,
    DenseSpec,
    EpochRecord,
    EvalReport,
    FlattenSpec,
    PoolSpec,
    ReluSpec,
    SoftmaxSpec,
    TrainConfig,
)
from src.services.dataset_service import DatasetService, LabeledExample
from src.utils.error_handler import ArgumentError, ShapeError, TrainingDivergenceError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class TrainingResult:
    model: Model
    history: List[EpochRecord]
    train_report: EvalReport
    test_report: EvalReport


def reference_architecture(class_count: int = DEFAULT_CLASS_COUNT, c2_connections: Optional[int] = None,
                           pool_affine: bool = False, seed: int = 0) -> list:
    """
    C1 conv 6@5x5 -> ReLU -> S1 max 2/2 -> C2 conv 16@5x5 -> ReLU -> S2 max 2/2
    -> Flatten(400) -> FC 400->128 -> ReLU -> FC 128->class_count -> Softmax

    Args:
        c2_connections: S1 maps linked to each C2 filter; None links all six
        pool_affine: Trainable coefficient and bias after each max pool
    """
    connectivity = None
    if c2_connections is not None:
        connectivity = sparse_connectivity(16, 6, c2_connections, seed)
    return [
        Conv2DSpec(n_f=6, f=5, s=1, p=0, in_channels=1),
        ReluSpec(),
        PoolSpec(extent=2, stride=2, trainable_affine=pool_affine),
        Conv2DSpec(n_f=16, f=5, s=1, p=0, in_channels=6, connectivity=connectivity),
        ReluSpec(),
        PoolSpec(extent=2, stride=2, trainable_affine=pool_affine),
        FlattenSpec(),
        DenseSpec(in_features=400, out_features=128),
        ReluSpec(),
        DenseSpec(in_features=128, out_features=class_count),
        SoftmaxSpec(),
    ]


def assemble_reference_model(seed: int = 0, class_count: int = DEFAULT_CLASS_COUNT,
                             c2_connections: Optional[int] = None, pool_affine: bool = False,
                             class_names: Optional[Sequence[str]] = None) -> Model:
    """Reference LeNet-style model on 32x32x1 input with seeded weights"""
    specs = reference_architecture(class_count, c2_connections, pool_affine, seed)
    return Model.assemble(specs, input_shape=DEFAULT_INPUT_SHAPE, seed=seed,
                          class_count=class_count, class_names=class_names)


def cross_entropy_loss(probs: Tensor, true_class: int) -> float:
    """
    -ln(probs[true_class]) with probabilities floored at 1e-12

    Raises:
        ArgumentError: If the class index is out of range
    """
    p = as_array(probs)
    if p.ndim != 1:
        raise ShapeError(f"cross_entropy_loss expects a probability vector, got {p.shape}", field="probs")
    if not 0 <= true_class < p.shape[0]:
        raise ArgumentError(f"Class index {true_class} outside [0, {p.shape[0]})", field="true_class")
    return -math.log(max(float(p[true_class]), PROB_FLOOR))


def _example_losses(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    picked = probs[np.arange(labels.shape[0]), labels].astype(np.float64)
    return -np.log(np.maximum(picked, PROB_FLOOR))


def softmax_cross_entropy_grad(probs: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of the mean batch loss with respect to the logits: (probs - one_hot) / N"""
    grad = probs.copy()
    grad[np.arange(labels.shape[0]), labels] -= 1
    return grad / labels.shape[0]


def sgd_step(params: Tensor, grads: Tensor, velocity: Tensor, lr: float,
             momentum: float) -> Tuple[Tensor, Tensor]:
    """
    v <- momentum * v - lr * g;  p <- p + v

    Raises:
        ShapeError: If the three tensors differ in shape
    """
    if params.shape != grads.shape or params.shape != velocity.shape:
        raise ShapeError(f"sgd_step shapes differ: params {tuple(params.shape)}, grads {tuple(grads.shape)}, "
                         f"velocity {tuple(velocity.shape)}", field="grads")
    dtype = params.dtype
    v = momentum * velocity.data.astype(dtype, copy=False) - lr * grads.data.astype(dtype, copy=False)
    v = v.astype(dtype, copy=False)
    return Tensor.wrap((params.data + v).astype(dtype, copy=False)), Tensor.wrap(v)


class MomentumSGD:
    """SGD with momentum over every parameter tensor of a model"""

    def __init__(self, learning_rate: float, momentum: float):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: Optional[List[Optional[LayerParams]]] = None

    def step(self, model: Model, grads: Sequence[Optional[LayerParams]]) -> Model:
        if self.velocity is None:
            self.velocity = [l.params.zeros_like() if l.params is not None else None for l in model.layers]
        new_params: List[Optional[LayerParams]] = []
        for index, layer in enumerate(model.layers):
            if layer.params is None:
                new_params.append(None)
                continue
            layer_grads = grads[index] if index < len(grads) else None
            if layer_grads is None:
                new_params.append(layer.params)
                continue
            updated, velocities = {}, {}
            for name, tensor in layer.params.named():
                updated[name], velocities[name] = sgd_step(
                    tensor, getattr(layer_grads, name), getattr(self.velocity[index], name),
                    self.learning_rate, self.momentum,
                )
            new_params.append(LayerParams(**updated))
            self.velocity[index] = LayerParams(**velocities)
        return model.with_params(new_params)


def compute_report(labels: np.ndarray, predictions: np.ndarray, losses: Sequence[float],
                   class_count: int) -> EvalReport:
    """
    Metrics from true labels and predictions.

    Macro precision and recall average over every class; a class with no
    predictions (or no examples) contributes 0.
    """
    if labels.shape[0] == 0:
        raise ArgumentError("Cannot report on an empty dataset", field="dataset")
    confusion = np.zeros((class_count, class_count), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    return report_from_confusion(confusion, math.fsum(losses) / labels.shape[0])


def report_from_confusion(confusion: np.ndarray, loss: float) -> EvalReport:
    tp = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0)
    actual = confusion.sum(axis=1)
    precision = [tp[k] / predicted[k] if predicted[k] else 0.0 for k in range(confusion.shape[0])]
    recall = [tp[k] / actual[k] if actual[k] else 0.0 for k in range(confusion.shape[0])]
    class_count = confusion.shape[0]
    return EvalReport(
        loss=loss,
        accuracy=float(tp.sum()) / float(confusion.sum()),
        macro_precision=math.fsum(precision) / class_count,
        macro_recall=math.fsum(recall) / class_count,
        confusion=confusion.tolist(),
    )


def _evaluate_chunk(model: Model, images: np.ndarray, labels: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    outputs, _ = model.forward(Tensor.wrap(images))
    probs = outputs.data if model.ends_with_softmax() else softmax(outputs).data
    return probs.argmax(axis=1), _example_losses(probs, labels)


def evaluate(model: Model, dataset: Sequence[LabeledExample], batch_size: int = None,
             workers: int = 1) -> EvalReport:
    """
    Loss, accuracy, macro precision/recall and confusion counts of a frozen model

    Args:
        model (Model): Model to evaluate
        dataset: Labeled examples
        batch_size (int): Examples per forward pass
        workers (int): Threads sharing the chunks; results are merged in chunk order

    Raises:
        ArgumentError: If the dataset is empty
    """
    if not dataset:
        raise ArgumentError("Cannot evaluate on an empty dataset", field="dataset")
    batch_size = batch_size or settings.eval_batch_size
    images, labels = DatasetService.stack_examples(dataset)
    if labels.max() >= model.class_count:
        raise ArgumentError(f"Dataset label {int(labels.max())} outside the model's {model.class_count} classes",
                            field="class_count")
    starts = range(0, labels.shape[0], batch_size)

    def run(start):
        return _evaluate_chunk(model, images[start:start + batch_size], labels[start:start + batch_size])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, starts))
    else:
        parts = [run(start) for start in starts]
    predictions = np.concatenate([p for p, _ in parts])
    losses = np.concatenate([l for _, l in parts])
    return compute_report(labels, predictions, losses.tolist(), model.class_count)


def write_training_log(history: Sequence[EpochRecord], path: Union[str, Path]) -> None:
    """CSV with header epoch,train_loss,train_acc,test_loss,test_acc and 6-decimal floats"""
    with open(path, 'w', newline='') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for record in history:
            writer.writerow(record.csv_row())
    logger.info(f"Wrote training log with {len(history)} epochs to {path}")


def train(model: Model, train_set: Sequence[LabeledExample], test_set: Sequence[LabeledExample],
          config: TrainConfig, log_path: Union[str, Path, None] = None) -> TrainingResult:
    """
    Mini-batch SGD with momentum on softmax cross-entropy

    Args:
        model (Model): Initial model (left untouched)
        train_set: Training examples
        test_set: Held-out examples, evaluated after every epoch
        config (TrainConfig): Optimizer and loop settings; config.seed drives all shuffling
        log_path: Optional CSV destination for the per-epoch log

    Returns:
        TrainingResult: Final model, per-epoch log and final reports

    Raises:
        ArgumentError: If either dataset is empty
        TrainingDivergenceError: If a batch loss is not finite
    """
    if not train_set:
        raise ArgumentError("Training set is empty", field="train_set")
    if not test_set:
        raise ArgumentError("Test set is empty", field="test_set")
    images, labels = DatasetService.stack_examples(train_set)
    if tuple(images.shape[1:]) != tuple(model.input_shape):
        raise ShapeError(f"Examples are {tuple(images.shape[1:])}, model expects {tuple(model.input_shape)}",
                         field="input_shape")

    optimizer = MomentumSGD(config.learning_rate, config.momentum)
    history: List[EpochRecord] = []
    train_report = test_report = None
    logger.info(f"Training {model} on {len(train_set)} examples: {config.dict()}")

    for epoch in range(1, config.epochs + 1):
        index_batches = DatasetService.batch_indices(
            labels.shape[0], config.batch_size, config.seed, epoch, shuffle=config.shuffle_each_epoch
        )
        for batch_number, index in enumerate(index_batches, start=1):
            batch_labels = labels[index]
            logits, trace = model.forward(Tensor.wrap(images[index]), keep_trace=True, stop_before_softmax=True)
            probs = softmax(logits).data
            loss = float(np.mean(_example_losses(probs, batch_labels)))
            if not math.isfinite(loss):
                logger.error(f"Training diverged at epoch {epoch}, batch {batch_number}")
                raise TrainingDivergenceError(epoch, batch_number, loss)
            logger.debug(f"Epoch {epoch} batch {batch_number}: loss {loss:.6f}")
            grads = model.backward(Tensor.wrap(softmax_cross_entropy_grad(probs, batch_labels)), trace)
            model = optimizer.step(model, grads)

        train_report = evaluate(model, train_set)
        test_report = evaluate(model, test_set)
        record = EpochRecord(epoch=epoch, train_loss=train_report.loss, train_acc=train_report.accuracy,
                             test_loss=test_report.loss, test_acc=test_report.accuracy)
        history.append(record)
        logger.info(f"Epoch {epoch}/{config.epochs}: train loss {record.train_loss:.6f} acc {record.train_acc:.6f}, "
                    f"test loss {record.test_loss:.6f} acc {record.test_acc:.6f}")

    if log_path is not None:
        write_training_log(history, log_path)
    return TrainingResult(model=model, history=history, train_report=train_report, test_report=test_report)
