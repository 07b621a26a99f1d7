"""
Backward warping by bilinear sampling: out(x) = F(x + w(x)).

Sampling is align-corners in pixel units; each of the four taps outside the map
contributes 0.
"""
import numpy as np

from engine.ops import scale_channels
from engine.parallel import map_batch
from engine.tensor import Context, Function, Tensor
from flow.fields import FlowField
from utils.errors import ShapeMismatchError


def _taps(px: np.ndarray, py: np.ndarray, height: int, width: int):
    """Corner indices, bilinear weights and validity for sample positions"""
    x0 = np.floor(px)
    y0 = np.floor(py)
    fx = px - x0
    fy = py - y0
    x0 = x0.astype(np.int64)
    y0 = y0.astype(np.int64)
    taps = []
    for dy, dx, weight in (
        (0, 0, (1 - fx) * (1 - fy)),
        (0, 1, fx * (1 - fy)),
        (1, 0, (1 - fx) * fy),
        (1, 1, fx * fy),
    ):
        xc, yc = x0 + dx, y0 + dy
        valid = (xc >= 0) & (xc < width) & (yc >= 0) & (yc < height)
        taps.append((np.clip(yc, 0, height - 1), np.clip(xc, 0, width - 1), weight, valid, dx, dy))
    return taps, fx, fy


def sample_bilinear(field: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    """
    Sample a (C, H, W) field at pixel positions with zero outside

    Args:
        field: (C, H, W) values
        px: Horizontal positions, any shape
        py: Vertical positions, same shape as px

    Returns:
        (C,) + px.shape samples
    """
    height, width = field.shape[1], field.shape[2]
    taps, _, _ = _taps(px, py, height, width)
    out = np.zeros((field.shape[0],) + px.shape, dtype=field.dtype)
    for yc, xc, weight, valid, _, _ in taps:
        out += (weight * valid).astype(field.dtype) * field[:, yc, xc]
    return out


class BilinearWarp(Function):

    @staticmethod
    def forward(ctx: Context, feature, flow):
        batch, channels, height, width = feature.shape
        ys, xs = np.mgrid[0:height, 0:width]

        def one(n: int) -> np.ndarray:
            return sample_bilinear(feature[n], xs + flow[n, 0], ys + flow[n, 1])

        ctx.save_for_backward(feature, flow)
        return np.stack(map_batch(one, batch))

    @staticmethod
    def backward(ctx: Context, grad):
        feature, flow = ctx.saved
        batch, channels, height, width = feature.shape
        ys, xs = np.mgrid[0:height, 0:width]

        def one(n: int):
            taps, fx, fy = _taps(xs + flow[n, 0], ys + flow[n, 1], height, width)
            g = grad[n]
            grad_feature = np.zeros((channels, height * width), dtype=feature.dtype)
            grad_u = np.zeros((height, width), dtype=np.float64)
            grad_v = np.zeros((height, width), dtype=np.float64)
            for yc, xc, weight, valid, dx, dy in taps:
                index = (yc * width + xc)[valid]
                contribution = (g * (weight * valid))[:, valid]
                for c in range(channels):
                    grad_feature[c] += np.bincount(index, weights=contribution[c], minlength=height * width)
                # d weight / d fx and d weight / d fy for this corner
                dwx = (1 - fy) if dy == 0 else fy
                dwx = dwx if dx == 1 else -dwx
                dwy = (1 - fx) if dx == 0 else fx
                dwy = dwy if dy == 1 else -dwy
                sampled = (g * feature[n][:, yc, xc]).sum(axis=0) * valid
                grad_u += sampled * dwx
                grad_v += sampled * dwy
            grad_flow = np.stack([grad_u, grad_v]).astype(flow.dtype)
            return grad_feature.reshape(channels, height, width), grad_flow

        pairs = map_batch(one, batch)
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def flow_in_level_units(flow: FlowField) -> Tensor:
    """Flow values converted from frame pixels to the pixels of its own grid"""
    factor_x, factor_y = flow.level_factors()
    if factor_x == 1.0 and factor_y == 1.0:
        return flow.tensor
    return scale_channels(flow.tensor, (1.0 / factor_x, 1.0 / factor_y))


def warp(feature: Tensor, flow: FlowField) -> Tensor:
    """
    Warp a feature map (or image) by a flow field

    Args:
        feature: (N, C, H, W) map to sample from
        flow: FlowField on the same H x W grid, in any frame

    Returns:
        (N, C, H, W) warped map, differentiable w.r.t. feature and flow
    """
    for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
        if feature.shape[axis] != flow.tensor.shape[axis]:
            raise ShapeMismatchError("warp", name, feature.shape[axis], flow.tensor.shape[axis])
    return BilinearWarp.apply(feature, flow_in_level_units(flow))


def sample_bilinear_points(field: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Sample a (C, H, W) field at (K, 2) pixel points given as (x, y)

    Returns:
        (K, C) samples
    """
    return sample_bilinear(field, points[:, 0], points[:, 1]).T
