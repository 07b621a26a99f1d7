from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, Field, validator

from config import presets
from engine.params import ModelParams
from utils.errors import MissingGradientError, ShapeMismatchError
from utils.logger import setup_logger

logger = setup_logger(__name__)


class AdamState(BaseModel):
    """Moment buffers and hyperparameters of the Adam optimizer"""
    learning_rate: float = presets.LEARNING_RATE
    weight_decay: float = presets.WEIGHT_DECAY
    beta1: float = presets.ADAM_BETAS[0]
    beta2: float = presets.ADAM_BETAS[1]
    eps: float = presets.ADAM_EPS
    step: int = 0
    first_moments: Dict[str, np.ndarray] = Field(default_factory=dict)
    second_moments: Dict[str, np.ndarray] = Field(default_factory=dict)

    class Config:
        arbitrary_types_allowed = True

    @validator("beta1", "beta2")
    def unit_interval(cls, value):
        if not 0 <= value < 1:
            raise ValueError("beta must lie in [0, 1)")
        return value


def adam_step(params: ModelParams, grads: Optional[Dict[str, np.ndarray]], state: AdamState) -> ModelParams:
    """
    Apply one Adam update with L2 weight decay folded into the gradient

    Args:
        params: Parameters to update; entries without requires_grad are skipped
        grads: Gradient per parameter name, or None to read each tensor's `grad`
        state: Optimizer state, updated in place

    Returns:
        The updated params
    """
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1 ** t
    bias2 = 1.0 - state.beta2 ** t

    for name, param in params.items():
        if not param.requires_grad:
            continue
        grad = param.grad if grads is None else grads.get(name)
        if grad is None:
            raise MissingGradientError(f"no gradient for parameter '{name}'")
        if grad.shape != param.shape:
            raise ShapeMismatchError("adam_step", f"gradient of {name}", None, None,
                                     f"{grad.shape} vs {param.shape}")

        grad = grad.astype(np.float64) + state.weight_decay * param.data
        m = state.first_moments.get(name)
        v = state.second_moments.get(name)
        if m is None:
            m = np.zeros(param.shape, dtype=np.float64)
            v = np.zeros(param.shape, dtype=np.float64)
        elif m.shape != param.shape:
            raise ShapeMismatchError("adam_step", f"moment buffer of {name}", None, None,
                                     f"{m.shape} vs {param.shape}")

        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moments[name] = m
        state.second_moments[name] = v

        update = state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        param.data = (param.data - update).astype(param.dtype)

    return params


def milestone_learning_rate(base_rate: float, iteration: int, milestones: List[int], gamma: float) -> float:
    """Step schedule: multiply by gamma at every milestone already passed"""
    passed = sum(1 for milestone in milestones if iteration >= milestone)
    return base_rate * gamma ** passed
