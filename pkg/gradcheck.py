#!/usr/bin/env python
"""
Central finite-difference gradients for checking analytic adjoints
"""
import logging
from typing import Callable

import numpy as np

logger = logging.getLogger(__name__)


def finite_difference(func: Callable[[np.ndarray], float], x0: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """
    Gradient of a scalar function by centered differences, one entry at a time
    """
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    x = x0.copy()
    flat_x = x.reshape(-1)
    flat_grad = grad.reshape(-1)

    for j in range(flat_x.size):
        original = flat_x[j]

        flat_x[j] = original + eps
        fplus = func(x)

        flat_x[j] = original - eps
        fminus = func(x)

        flat_x[j] = original
        flat_grad[j] = (fplus - fminus) / (2 * eps)

    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish"""
    scale = max(float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric)))
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric)) / scale
