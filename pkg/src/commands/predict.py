import argparse
import logging

import numpy as np

from config import settings
from src.commands import byte_value, first_set, log_resolved, positive_int, run_guarded
from src.layers import softmax
from src.models.tensor import Tensor
from src.services.model_store import ModelStore
from src.services.preprocess_service import PreprocessService
from src.utils.error_handler import EXIT_OK
from src.utils.pgm import read_image

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser('predict', help='Classify one image')
    parser.add_argument('--model', required=True, help='Model file')
    parser.add_argument('--image', required=True, help='28x28 raw or 32x32 preprocessed image')
    parser.add_argument('--top', type=positive_int, default=None, help='Number of classes to list')
    parser.add_argument('--threshold', type=byte_value, default=None,
                        help='Background threshold (default: the training run\'s)')
    parser.set_defaults(handler=cmd_predict)


def cmd_predict(args: argparse.Namespace) -> int:
    return run_guarded("prediction", lambda: _predict(args))


def _predict(args: argparse.Namespace) -> int:
    model = ModelStore.load_model(args.model)
    top = args.top or settings.predict_top_k
    threshold = first_set(args.threshold, model.provenance.background_threshold, settings.background_threshold)
    log_resolved('predict', {'model': args.model, 'image': args.image, 'top': top,
                             'background_threshold': threshold})
    image = read_image(args.image)
    already_processed = PreprocessService.infer_already_processed(image)
    x = PreprocessService.preprocess(image, already_processed, threshold)

    outputs, _ = model.forward(Tensor.wrap(x.data[np.newaxis]))
    probs = outputs.data[0] if model.ends_with_softmax() else softmax(outputs).data[0]
    k = min(top, model.class_count)
    # stable sort keeps the lower class index first on equal probabilities
    order = np.argsort(-probs, kind='stable')[:k]
    for index in order:
        print(f"{model.class_names[index]}\t{float(probs[index]):.6f}")
    return EXIT_OK
