"""
Error Handling Utilities
Provides the engine's exception hierarchy and consistent CLI error output
"""
import logging
import sys
from typing import Any, Dict, Optional, TextIO

from pydantic import ValidationError

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class EngineError(Exception):
    """Base exception for every structured engine failure"""

    default_code = 'ENGINE_ERROR'

    def __init__(self, message: str, code: str = None, field: str = None, exit_code: int = EXIT_FAILURE):
        self.message = message
        self.code = code or self.default_code
        self.field = field
        self.exit_code = exit_code
        super().__init__(self.message)

    def to_dict(self) -> Dict[str, Any]:
        return {'error': self.message, 'code': self.code, 'field': self.field}


class ShapeError(EngineError):
    """Incompatible tensor or layer shapes"""

    default_code = 'SHAPE_ERROR'


class SizeError(EngineError):
    """Element count does not fit the platform index type"""

    default_code = 'SIZE_ERROR'


class FormatError(EngineError):
    """Malformed image or model file"""

    default_code = 'FORMAT_ERROR'


class ArgumentError(EngineError):
    """Argument outside its documented domain"""

    default_code = 'ARGUMENT_ERROR'


class DatasetError(EngineError):
    """Dataset tree missing, empty or unusable"""

    default_code = 'DATASET_ERROR'


class TrainingDivergenceError(EngineError):
    """Non-finite loss during training"""

    default_code = 'TRAINING_DIVERGENCE'

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(
            f"Non-finite loss {loss} at epoch {epoch}, batch {batch}",
            field=f"epoch={epoch},batch={batch}",
        )


class ValidationErrorHandler:
    """Handles pydantic validation errors and provides detailed feedback"""

    @staticmethod
    def format_validation_error(error: ValidationError) -> Dict[str, Any]:
        """
        Format a pydantic validation error into a structured record

        Args:
            error (ValidationError): Pydantic validation error

        Returns:
            dict: Formatted error record
        """
        errors = []

        for error_detail in error.errors():
            loc = error_detail.get('loc') or ('unknown',)
            errors.append({
                'field': '.'.join(str(part) for part in loc),
                'message': error_detail.get('msg', 'Validation error'),
                'type': error_detail.get('type', 'value_error'),
            })

        return {
            'error': 'Validation error',
            'code': 'VALIDATION_ERROR',
            'field_errors': errors,
            'total_errors': len(errors)
        }


def format_error_line(code: str, message: str, field: Optional[str] = None) -> str:
    """One-line structured error, as written to the error stream"""
    parts = [f"error code={code}"]
    if field:
        parts.append(f"field={field}")
    parts.append(f"message={message}")
    return ' '.join(parts)


def handle_engine_error(error: EngineError, stream: TextIO = None) -> int:
    """
    Report an engine error on the error stream

    Args:
        error (EngineError): The failure to report
        stream: Destination stream, stderr by default

    Returns:
        int: Process exit code
    """
    stream = stream or sys.stderr
    logger.warning(f"Engine error: {error.to_dict()}")
    print(format_error_line(error.code, error.message, error.field), file=stream)
    return error.exit_code


def handle_validation_error(error: ValidationError, stream: TextIO = None) -> int:
    """
    Report a pydantic validation error on the error stream

    Returns:
        int: Process exit code
    """
    stream = stream or sys.stderr
    formatted = ValidationErrorHandler.format_validation_error(error)
    logger.warning(f"Validation error: {formatted}")
    first = formatted['field_errors'][0] if formatted['field_errors'] else {'field': None, 'message': 'invalid'}
    message = first['message']
    if formatted['total_errors'] > 1:
        message = f"{message} (+{formatted['total_errors'] - 1} more)"
    print(format_error_line(formatted['code'], message, first['field']), file=stream)
    return EXIT_FAILURE


def handle_generic_error(error: Exception, context: str = "Unknown operation", stream: TextIO = None) -> int:
    """
    Handle unexpected errors

    Args:
        error (Exception): Generic error
        context (str): Context where the error occurred

    Returns:
        int: Process exit code
    """
    stream = stream or sys.stderr
    logger.error(f"Unexpected error during {context}: {str(error)}", exc_info=True)
    print(format_error_line('INTERNAL_ERROR', f"Unexpected error during {context}: {error}"), file=stream)
    return EXIT_FAILURE
