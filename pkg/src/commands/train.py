import argparse
import json
import logging
from pathlib import Path

from config import settings
from src.commands import (
    first_set,
    log_resolved,
    momentum_value,
    open_fraction,
    positive_float,
    positive_int,
    run_guarded,
    seed_value,
)
from src.commands.evaluate import format_report
from src.models.network import DEFAULT_INPUT_SHAPE, Model
from src.schemas import ModelProvenance, RunConfigFile, TrainConfig
from src.services.dataset_service import DatasetService
from src.services.model_store import ModelStore
from src.services.training_service import assemble_reference_model, train
from src.utils.error_handler import EXIT_OK, FormatError

logger = logging.getLogger(__name__)


def load_run_config(path) -> RunConfigFile:
    """
    Read the optional JSON config file

    Raises:
        FormatError: If the file cannot be read or is not JSON
        ValidationError: If keys or values are invalid
    """
    try:
        raw = json.loads(Path(path).read_text(encoding='utf-8'))
    except OSError as e:
        raise FormatError(f"Cannot read config file {path}: {e}", field="config")
    except json.JSONDecodeError as e:
        raise FormatError(f"Config file {path} is not valid JSON: {e}", field="config")
    return RunConfigFile.parse_obj(raw)


def resolve_train_config(args: argparse.Namespace, file_config: RunConfigFile) -> TrainConfig:
    """Settings < config file < flags"""
    values = {
        'epochs': settings.epochs,
        'batch_size': settings.batch_size,
        'learning_rate': settings.learning_rate,
        'momentum': settings.momentum,
        'seed': settings.default_seed,
    }
    values.update(file_config.train.dict(exclude_none=True))
    flags = {
        'epochs': args.epochs,
        'batch_size': args.batch,
        'learning_rate': args.lr,
        'momentum': args.momentum,
        'seed': args.seed,
    }
    values.update({key: value for key, value in flags.items() if value is not None})
    return TrainConfig(**values)


def register(subparsers) -> None:
    parser = subparsers.add_parser('train', help='Train a model on a dataset directory')
    parser.add_argument('--data', required=True, help='Class-per-directory image tree')
    parser.add_argument('--out', required=True, help='Model file to write')
    parser.add_argument('--epochs', type=positive_int, default=None)
    parser.add_argument('--batch', type=positive_int, default=None, help='Mini-batch size')
    parser.add_argument('--lr', type=positive_float, default=None, help='Learning rate')
    parser.add_argument('--momentum', type=momentum_value, default=None)
    parser.add_argument('--seed', type=seed_value, default=None,
                        help='Seed for the split, initialization and shuffling')
    parser.add_argument('--split', type=open_fraction, default=None, help='Fraction of each class used for training')
    parser.add_argument('--already-processed', action='store_true', help='Images are 32x32 published images')
    parser.add_argument('--log', default=None, help='Per-epoch CSV log')
    parser.add_argument('--config', default=None, help='JSON config file')
    parser.add_argument('--c2-connections', type=positive_int, default=None,
                        help='S1 maps wired to each C2 filter (default: all)')
    parser.add_argument('--pool-affine', action='store_true', help='Trainable coefficient and bias after pooling')
    parser.set_defaults(handler=cmd_train)


def cmd_train(args: argparse.Namespace) -> int:
    return run_guarded("training", lambda: _train(args))


def _train(args: argparse.Namespace) -> int:
    file_config = load_run_config(args.config) if args.config else RunConfigFile()
    config = resolve_train_config(args, file_config)
    split_ratio = first_set(args.split, file_config.split_ratio, settings.split_ratio)
    threshold = first_set(file_config.background_threshold, settings.background_threshold)
    log_resolved('train', {
        'data': args.data,
        'out': args.out,
        'log': args.log,
        'already_processed': args.already_processed,
        'split_ratio': split_ratio,
        'background_threshold': threshold,
        'c2_connections': args.c2_connections,
        'pool_affine': args.pool_affine,
        'architecture': 'config' if file_config.architecture else 'reference',
        **config.dict(),
    })

    dataset = DatasetService.load_dataset(args.data, args.already_processed, threshold)
    split = DatasetService.split_dataset(dataset.examples, split_ratio, config.seed,
                                         class_names=dataset.class_names)
    class_count = len(dataset.class_names)
    if file_config.architecture:
        model = Model.assemble(file_config.architecture, input_shape=file_config.input_shape or DEFAULT_INPUT_SHAPE,
                               seed=config.seed, class_count=class_count, class_names=dataset.class_names)
    else:
        model = assemble_reference_model(config.seed, class_count, args.c2_connections, args.pool_affine,
                                         class_names=dataset.class_names)

    result = train(model, split.train, split.test, config, log_path=args.log)
    provenance = ModelProvenance(seed=config.seed, split_ratio=split_ratio, background_threshold=threshold,
                                 already_processed=args.already_processed)
    ModelStore.save_model(result.model.with_provenance(provenance), args.out)
    print(format_report(result.train_report, 'train'))
    print(format_report(result.test_report, 'test'))
    return EXIT_OK
