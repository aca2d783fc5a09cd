import argparse
import logging
from typing import List, Sequence

from config import settings
from src.commands import byte_value, first_set, log_resolved, open_fraction, positive_int, run_guarded, seed_value
from src.schemas import EvalReport
from src.services.dataset_service import DatasetService
from src.services.model_store import ModelStore
from src.services.training_service import evaluate
from src.utils.error_handler import EXIT_OK, ArgumentError

logger = logging.getLogger(__name__)

SUBSETS = ('all', 'train', 'test')


def format_report(report: EvalReport, label: str) -> str:
    return (f"[{label}] loss={report.loss:.6f} accuracy={report.accuracy:.6f} "
            f"macro_precision={report.macro_precision:.6f} macro_recall={report.macro_recall:.6f}")


def format_confusion(report: EvalReport, class_names: Sequence[str]) -> List[str]:
    """Confusion rows (true class) against prediction columns"""
    width = max(len(name) for name in class_names)
    lines = [' ' * width + ' ' + ' '.join(class_names)]
    for name, row in zip(class_names, report.confusion):
        cells = ' '.join(str(count).rjust(len(column)) for count, column in zip(row, class_names))
        lines.append(f"{name.ljust(width)} {cells}")
    return lines


def register(subparsers) -> None:
    parser = subparsers.add_parser('eval', help='Evaluate a model file on a dataset directory')
    parser.add_argument('--data', required=True, help='Class-per-directory image tree')
    parser.add_argument('--model', required=True, help='Model file')
    parser.add_argument('--already-processed', action='store_true', help='Images are 32x32 published images')
    parser.add_argument('--confusion', action='store_true', help='Also print the confusion matrix')
    parser.add_argument('--subset', choices=SUBSETS, default='all',
                        help='Evaluate one side of the seeded train/test split instead of every image')
    parser.add_argument('--split', type=open_fraction, default=None,
                        help='Split ratio used with --subset (default: the training run\'s)')
    parser.add_argument('--seed', type=seed_value, default=None,
                        help='Split seed used with --subset (default: the training run\'s)')
    parser.add_argument('--threshold', type=byte_value, default=None,
                        help='Background threshold (default: the training run\'s)')
    parser.add_argument('--workers', type=positive_int, default=None, help='Evaluation threads')
    parser.set_defaults(handler=cmd_eval)


def cmd_eval(args: argparse.Namespace) -> int:
    return run_guarded("evaluation", lambda: _evaluate(args))


def _evaluate(args: argparse.Namespace) -> int:
    model = ModelStore.load_model(args.model)
    recorded = model.provenance
    resolved = {
        'data': args.data,
        'model': args.model,
        'already_processed': args.already_processed,
        'subset': args.subset,
        'split_ratio': first_set(args.split, recorded.split_ratio, settings.split_ratio),
        'seed': first_set(args.seed, recorded.seed, settings.default_seed),
        'workers': args.workers or settings.load_workers,
        'background_threshold': first_set(args.threshold, recorded.background_threshold,
                                          settings.background_threshold),
    }
    log_resolved('eval', resolved)

    dataset = DatasetService.load_dataset(args.data, args.already_processed, resolved['background_threshold'])
    if len(dataset.class_names) != model.class_count:
        raise ArgumentError(
            f"Model has {model.class_count} classes but dataset has {len(dataset.class_names)}",
            field="class_count",
        )
    examples = dataset.examples
    if args.subset != 'all':
        split = DatasetService.split_dataset(examples, resolved['split_ratio'], resolved['seed'],
                                             class_names=dataset.class_names)
        examples = split.train if args.subset == 'train' else split.test

    report = evaluate(model, examples, workers=resolved['workers'])
    print(format_report(report, args.subset))
    if args.confusion:
        for line in format_confusion(report, model.class_names):
            print(line)
    return EXIT_OK
