import argparse
import logging
from typing import List

from src.commands import log_resolved, positive_int, run_guarded
from src.models.network import DEFAULT_CLASS_COUNT, Model
from src.services.model_store import ModelStore
from src.services.training_service import assemble_reference_model
from src.utils.error_handler import EXIT_OK

logger = logging.getLogger(__name__)

COLUMNS = ('layer', 'kind', 'output', 'params')


def layer_table(model: Model) -> List[str]:
    """Per-layer rows of name, kind, output shape and parameter count, then the total"""
    rows = [(layer.name, layer.spec.kind, 'x'.join(str(d) for d in layer.output_shape), str(layer.param_count))
            for layer in model.layers]
    rows.append(('total', '', '', str(model.parameter_count())))
    widths = [max(len(row[i]) for row in rows + [COLUMNS]) for i in range(len(COLUMNS))]
    lines = [f"input {'x'.join(str(d) for d in model.input_shape)}"]
    for row in [COLUMNS] + rows:
        lines.append('  '.join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip())
    return lines


def register(subparsers) -> None:
    parser = subparsers.add_parser('inspect', help='Print layer shapes and parameter counts')
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument('--model', help='Model file')
    source.add_argument('--arch-default', action='store_true', help='The reference architecture')
    parser.add_argument('--classes', type=positive_int, default=DEFAULT_CLASS_COUNT,
                        help='Class count for --arch-default')
    parser.add_argument('--c2-connections', type=positive_int, default=None)
    parser.add_argument('--pool-affine', action='store_true')
    parser.set_defaults(handler=cmd_inspect)


def cmd_inspect(args: argparse.Namespace) -> int:
    return run_guarded("inspection", lambda: _inspect(args))


def _inspect(args: argparse.Namespace) -> int:
    log_resolved('inspect', {'model': args.model, 'arch_default': args.arch_default, 'classes': args.classes,
                             'c2_connections': args.c2_connections, 'pool_affine': args.pool_affine})
    if args.model:
        model = ModelStore.load_model(args.model)
    else:
        model = assemble_reference_model(0, args.classes, args.c2_connections, args.pool_affine)
    for line in layer_table(model):
        print(line)
    return EXIT_OK
