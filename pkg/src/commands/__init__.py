# Commands Package
import argparse
import json
import logging
from typing import Any, Callable, Dict

from pydantic import ValidationError

from src.schemas import MAX_SEED
from src.utils.error_handler import EngineError, handle_engine_error, handle_generic_error, handle_validation_error

logger = logging.getLogger(__name__)


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def open_fraction(text: str) -> float:
    """Ratio strictly between 0 and 1"""
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def momentum_value(text: str) -> float:
    value = float(text)
    if not 0 <= value < 1:
        raise argparse.ArgumentTypeError(f"expected a momentum in [0, 1), got {text}")
    return value


def byte_value(text: str) -> int:
    value = int(text)
    if not 0 <= value <= 255:
        raise argparse.ArgumentTypeError(f"expected an integer in [0, 255], got {text}")
    return value


def seed_value(text: str) -> int:
    value = int(text)
    if not 0 <= value <= MAX_SEED:
        raise argparse.ArgumentTypeError(f"expected a seed in [0, 2**64 - 1], got {text}")
    return value


def first_set(*values: Any) -> Any:
    """Leftmost value that is not None; callers list flag, file, recorded, then settings"""
    return next(v for v in values if v is not None)


def log_resolved(command: str, values: Dict[str, Any]) -> None:
    """Echo a command's fully resolved settings before it acts"""
    logger.info(f"Resolved {command} config: {json.dumps(values, sort_keys=True, default=str)}")


def run_guarded(context: str, action: Callable[[], int]) -> int:
    """Run a command body, turning failures into one structured stderr line and an exit code"""
    try:
        return action()
    except EngineError as e:
        return handle_engine_error(e)
    except ValidationError as e:
        return handle_validation_error(e)
    except Exception as e:
        return handle_generic_error(e, context)
