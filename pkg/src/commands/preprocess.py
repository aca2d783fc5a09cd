import argparse
import logging

from config import settings
from src.commands import byte_value, log_resolved, run_guarded
from src.services.dataset_service import DatasetService
from src.utils.error_handler import EXIT_FAILURE, EXIT_OK, ArgumentError

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('preprocess', help='Convert a raw image tree, or verify a processed one')
    parser.add_argument('--in', dest='in_dir', required=True, help='Input image tree')
    parser.add_argument('--out', dest='out_dir', default=None, help='Output tree (not used with --verify)')
    parser.add_argument('--verify', action='store_true', help='Check an already-processed tree instead')
    parser.add_argument('--already-processed', action='store_true',
                        help='Inputs are 32x32 published images; they are copied as grayscale PGM')
    parser.add_argument('--strict', action='store_true', help='Exit 1 if any file fails')
    parser.add_argument('--threshold', type=byte_value, default=None, help='Background threshold')
    parser.set_defaults(handler=cmd_preprocess)


def cmd_preprocess(args: argparse.Namespace) -> int:
    return run_guarded("preprocessing", lambda: _preprocess(args))


def _preprocess(args: argparse.Namespace) -> int:
    threshold = args.threshold if args.threshold is not None else settings.background_threshold
    log_resolved('preprocess', {'in': args.in_dir, 'out': args.out_dir, 'verify': args.verify,
                                'already_processed': args.already_processed, 'strict': args.strict,
                                'background_threshold': threshold})
    if args.verify:
        results = DatasetService.verify_tree(args.in_dir, threshold)
        failing = [(path, result) for path, result in results if not result.ok]
        for path, result in failing:
            print(f"{path}: {'; '.join(result.messages)}")
        print(f"verified {len(results)} images, {len(failing)} with violations")
        return EXIT_FAILURE if failing and args.strict else EXIT_OK

    if not args.out_dir:
        raise ArgumentError("--out is required unless --verify is given", field="out")
    report = DatasetService.preprocess_tree(args.in_dir, args.out_dir, args.already_processed, threshold)
    for path, reason in report.skipped:
        print(f"skipped {path}: {reason}")
    print(f"processed {report.loaded} images, {len(report.skipped)} skipped")
    return EXIT_FAILURE if report.skipped and args.strict else EXIT_OK
