# Utils Package
from .error_handler import (
    EngineError,
    ShapeError,
    SizeError,
    FormatError,
    ArgumentError,
    DatasetError,
    TrainingDivergenceError,
    ValidationErrorHandler,
    handle_engine_error,
    handle_validation_error,
    handle_generic_error,
    format_error_line,
    EXIT_OK,
    EXIT_FAILURE,
    EXIT_USAGE
)

__all__ = [
    'EngineError',
    'ShapeError',
    'SizeError',
    'FormatError',
    'ArgumentError',
    'DatasetError',
    'TrainingDivergenceError',
    'ValidationErrorHandler',
    'handle_engine_error',
    'handle_validation_error',
    'handle_generic_error',
    'format_error_line',
    'EXIT_OK',
    'EXIT_FAILURE',
    'EXIT_USAGE'
]
