"""
Post-processing of the global cost volume.
"""
import numpy as np

from engine.ops import l2_normalize_channels, relu
from engine.tensor import Context, Function, Tensor
from utils.errors import DataError


def normalize_cost_volume(volume: Tensor, order: str = "l2_then_relu") -> Tensor:
    """
    Channel-wise L2 normalisation and ReLU, in the requested order

    Args:
        volume: (N, H*W, H, W) global cost volume
        order: "l2_then_relu" (default) or "relu_then_l2"

    Returns:
        Non-negative volume with channel norms <= 1
    """
    if order == "l2_then_relu":
        return relu(l2_normalize_channels(volume))
    if order == "relu_then_l2":
        return l2_normalize_channels(relu(volume))
    raise DataError(f"unknown cost volume order: {order}")


def _safe_ratio(volume: np.ndarray, maxima: np.ndarray) -> np.ndarray:
    # A slice whose maximum is 0 has every entry 0, so its ratio is 0
    return np.divide(volume, maxima, out=np.zeros_like(volume), where=maxima > 0)


class CyclicConsistency(Function):

    @staticmethod
    def forward(ctx: Context, volume):
        batch, sources, height, width = volume.shape
        flat = volume.reshape(batch, sources, height * width)
        # per source location, best target; per target location, best source
        max_over_targets = flat.max(axis=2, keepdims=True)
        max_over_sources = flat.max(axis=1, keepdims=True)
        ratio_targets = _safe_ratio(flat, max_over_targets)
        ratio_sources = _safe_ratio(flat, max_over_sources)
        filtered = flat * ratio_targets * ratio_sources
        ctx.save_for_backward(flat, filtered, ratio_targets, ratio_sources,
                              max_over_targets, max_over_sources, volume.shape)
        return filtered.reshape(volume.shape)

    @staticmethod
    def backward(ctx: Context, grad):
        flat, filtered, ratio_t, ratio_s, max_t, max_s, shape = ctx.saved
        batch, sources, targets = flat.shape
        g = grad.reshape(flat.shape)

        inv_t = _safe_ratio(np.ones_like(max_t), max_t)
        inv_s = _safe_ratio(np.ones_like(max_s), max_s)
        grad_flat = 3.0 * g * flat * flat * inv_t * inv_s

        # maxima receive -sum(g * filtered / max) and route it to their argmax
        grad_max_t = -(g * filtered).sum(axis=2) * inv_t[..., 0]
        grad_max_s = -(g * filtered).sum(axis=1) * inv_s[:, 0, :]
        arg_t = flat.argmax(axis=2)
        arg_s = flat.argmax(axis=1)
        b_index = np.arange(batch)[:, None]
        np.add.at(grad_flat, (b_index, np.arange(sources)[None, :], arg_t), grad_max_t)
        np.add.at(grad_flat, (b_index, arg_s, np.arange(targets)[None, :]), grad_max_s)
        return (grad_flat.reshape(shape),)


def cyclic_consistency_filter(volume: Tensor) -> Tensor:
    """
    Soft mutual nearest-neighbour filtering of a non-negative global volume

    Each entry is multiplied by its ratio to the best score over target locations and
    its ratio to the best score over source locations. Mutual maxima are unchanged.
    """
    return CyclicConsistency.apply(volume)
