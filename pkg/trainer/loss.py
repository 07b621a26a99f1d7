"""
Multi-scale endpoint-error loss.
"""
from typing import Dict, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from config.config import EPE_EPS
from config.presets import PYRAMID_LEVELS
from engine.ops import add, scale, sum_all
from engine.tensor import Context, Function, Tensor
from flow.conversions import downsample_gt, upsample_flow
from flow.fields import FlowField
from utils.errors import DataError, ShapeMismatchError


class EndpointError(Function):

    @staticmethod
    def forward(ctx: Context, pred, gt, *, eps: float):
        diff = pred - gt
        epe = np.sqrt((diff * diff).sum(axis=1, keepdims=True) + eps).astype(pred.dtype)
        ctx.save_for_backward(diff, epe)
        return epe

    @staticmethod
    def backward(ctx: Context, grad):
        diff, epe = ctx.saved
        grad_pred = grad * diff / epe
        return grad_pred, -grad_pred


def endpoint_error(pred: Tensor, gt: Tensor, eps: float = EPE_EPS) -> Tensor:
    """(N, 1, H, W) smoothed per-pixel EPE sqrt(du^2 + dv^2 + eps)"""
    if pred.shape != gt.shape:
        raise ShapeMismatchError("endpoint_error", "shape", None, None, f"{pred.shape} vs {gt.shape}")
    return EndpointError.apply(pred, gt, eps=eps)


def level_target(gt: FlowField, pred: FlowField) -> FlowField:
    """
    Ground truth on the grid and in the frame of a predicted level

    The full-resolution flow is first brought to the prediction's frame with value
    rescaling, then to the level grid without it.
    """
    if pred.frame == gt.frame:
        in_frame = gt
    elif pred.frame[0] <= gt.height and pred.frame[1] <= gt.width:
        in_frame = downsample_gt(gt, pred.frame, rescale_values=True)
    else:
        factors = (pred.frame[1] / gt.frame[1], pred.frame[0] / gt.frame[0])
        in_frame = upsample_flow(gt, pred.frame, value_scale=factors, frame=pred.frame)
    if in_frame.dims == pred.dims:
        return in_frame
    return downsample_gt(in_frame, pred.dims, rescale_values=False)


def prepare_level_targets(gt: FlowField, levels: Dict[str, FlowField]) -> Dict[str, FlowField]:
    """Per-level ground truth matching each predicted flow"""
    return {name: level_target(gt, pred) for name, pred in levels.items()}


class LossResult(BaseModel):
    total: Tensor
    per_level: Dict[str, float]

    class Config:
        arbitrary_types_allowed = True


def multi_scale_loss(
    levels: Dict[str, FlowField],
    gt: FlowField,
    level_weights: Sequence[float],
    level_names: Sequence[str] = tuple(PYRAMID_LEVELS),
) -> LossResult:
    """
    sum_l alpha_l sum_x |w^l(x) - w_GT^l(x)|, averaged over the batch; no mask

    Args:
        levels: Predicted flow per level
        gt: Full-resolution ground truth
        level_weights: alpha per entry of level_names
        level_names: Levels the weights refer to

    Returns:
        LossResult with the scalar loss tensor and each weighted level term
    """
    if len(level_weights) != len(level_names):
        raise DataError(f"{len(level_weights)} level weights for {len(level_names)} levels")
    missing = [name for name in level_names if name not in levels]
    if missing:
        raise DataError(f"no predicted flow for levels {missing}")

    targets = prepare_level_targets(gt, {name: levels[name] for name in level_names})
    batch = gt.batch
    total, per_level = None, {}
    for name, alpha in zip(level_names, level_weights):
        term = scale(sum_all(endpoint_error(levels[name].tensor, targets[name].tensor)), alpha / batch)
        per_level[name] = term.item()
        total = term if total is None else add(total, term)
    return LossResult(total=total, per_level=per_level)


def level_aepe(pred: FlowField, gt: FlowField) -> Tuple[float, int]:
    """Mean EPE of one level after bringing it to the ground-truth grid and frame"""
    factors = (gt.frame[1] / pred.frame[1], gt.frame[0] / pred.frame[0])
    full = upsample_flow(pred, gt.dims, value_scale=factors, frame=gt.frame)
    diff = full.tensor.data.astype(np.float64) - gt.tensor.data
    epe = np.sqrt((diff ** 2).sum(axis=1))
    return float(epe.mean()), int(epe.size)
