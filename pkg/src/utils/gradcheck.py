"""
Central finite differences for checking analytic backward passes.
"""
from typing import Callable

import numpy as np


def numerical_gradient(f: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """
    (f(x + eps e_i) - f(x - eps e_i)) / (2 eps) for every entry of x

    Args:
        f: Scalar function of the whole array
        x: Point to differentiate at; evaluated in float64 and left unchanged
        eps (float): Step size
    """
    point = np.array(x, dtype=np.float64)
    grad = np.zeros_like(point)
    flat_point = point.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat_point.size):
        original = flat_point[i]
        flat_point[i] = original + eps
        upper = f(point)
        flat_point[i] = original - eps
        lower = f(point)
        flat_point[i] = original
        flat_grad[i] = (upper - lower) / (2 * eps)
    return grad


def relative_errors(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5) -> np.ndarray:
    """|a - n| / max(|a| + |n|, floor), entrywise"""
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.shape != n.shape:
        raise ValueError(f"Gradient shapes differ: {a.shape} vs {n.shape}")
    return np.abs(a - n) / np.maximum(np.abs(a) + np.abs(n), floor)


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-5,
                       mask: np.ndarray = None) -> float:
    """Largest entrywise relative error, optionally restricted to mask"""
    errors = relative_errors(analytic, numeric, floor)
    if mask is not None:
        errors = errors[mask]
    return float(errors.max()) if errors.size else 0.0
