"""
Central-difference gradient oracle.
"""
from typing import Callable, Dict, Sequence

import numpy as np

from engine.tensor import GradientTape, Tensor, backward


def numerical_gradient(fn: Callable[[], Tensor], tensor: Tensor, h: float = 1e-5) -> np.ndarray:
    """d fn() / d tensor by central differences; fn must return a scalar tensor"""
    grad = np.zeros_like(tensor.data, dtype=np.float64)
    flat = tensor.data.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + h
        plus = fn().item()
        flat[index] = original - h
        minus = fn().item()
        flat[index] = original
        grad.reshape(-1)[index] = (plus - minus) / (2.0 * h)
    return grad


def analytic_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor]) -> Dict[int, np.ndarray]:
    """Gradients of fn() for each tensor through the tape, keyed by position"""
    for tensor in tensors:
        tensor.zero_grad()
        tensor.requires_grad = True
    with GradientTape() as tape:
        loss = fn()
    backward(loss, tape)
    return {i: (t.grad if t.grad is not None else np.zeros_like(t.data)) for i, t in enumerate(tensors)}


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries"""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(fn: Callable[[], Tensor], tensors: Sequence[Tensor], h: float = 1e-5) -> float:
    """Worst relative error between tape gradients and central differences"""
    analytic = analytic_gradients(fn, tensors)
    worst = 0.0
    for index, tensor in enumerate(tensors):
        numeric = numerical_gradient(fn, tensor, h)
        worst = max(worst, max_relative_error(analytic[index], numeric))
    return worst
