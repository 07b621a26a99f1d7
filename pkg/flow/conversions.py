"""
Conversions between correspondence maps and flows, and between resolutions.
"""
from typing import Optional, Tuple

import numpy as np

from engine.ops import add, bilinear_resize, scale_channels
from engine.tensor import Tensor
from flow.fields import CorrespondenceMap, FlowField
from utils.errors import DataError


def identity_grid(height: int, width: int, dtype: str = "float64") -> Tuple[np.ndarray, np.ndarray]:
    """(xs, ys) pixel coordinate grids of shape (H, W)"""
    ys, xs = np.mgrid[0:height, 0:width]
    return xs.astype(dtype), ys.astype(dtype)


def _half_extent(size: int) -> float:
    return (size - 1) / 2.0


def _offset_tensor(values_x: np.ndarray, values_y: np.ndarray, dtype) -> Tensor:
    return Tensor(np.stack([values_x, values_y])[None].astype(dtype))


def map_to_flow(correspondence: CorrespondenceMap) -> FlowField:
    """
    Pixel flow from a normalised correspondence map on the same grid

    w(x) = (m(x) + 1) * (size - 1) / 2 - x, in the pixels of the map's own grid
    """
    height, width = correspondence.dims
    half_w, half_h = _half_extent(width), _half_extent(height)
    xs, ys = identity_grid(height, width)
    scaled = scale_channels(correspondence.tensor, (half_w, half_h))
    offset = _offset_tensor(half_w - xs, half_h - ys, correspondence.tensor.dtype)
    return FlowField(tensor=add(scaled, offset), frame=(height, width))


def flow_to_map(flow: FlowField) -> CorrespondenceMap:
    """Normalised correspondence map m(x) = 2 (x + w(x)) / (size - 1) - 1; a size-1 axis maps to 0"""
    height, width = flow.dims
    factor_x, factor_y = flow.level_factors()
    norm_x = 2.0 / (width - 1) if width > 1 else 0.0
    norm_y = 2.0 / (height - 1) if height > 1 else 0.0
    xs, ys = identity_grid(height, width)
    scaled = scale_channels(flow.tensor, (norm_x / factor_x, norm_y / factor_y))
    offset = _offset_tensor(xs * norm_x - (1.0 if width > 1 else 0.0),
                            ys * norm_y - (1.0 if height > 1 else 0.0), flow.tensor.dtype)
    return CorrespondenceMap(tensor=add(scaled, offset))


def rescale_flow_frame(flow: FlowField, frame: Tuple[int, int]) -> FlowField:
    """Same displacement, re-expressed in the pixels of another base frame"""
    if tuple(frame) == flow.frame:
        return flow
    factors = (frame[1] / flow.frame[1], frame[0] / flow.frame[0])
    return FlowField(tensor=scale_channels(flow.tensor, factors), frame=frame)


def upsample_flow(
    flow: FlowField,
    dims: Tuple[int, int],
    value_scale: Tuple[float, float] = (1.0, 1.0),
    frame: Optional[Tuple[int, int]] = None,
) -> FlowField:
    """
    Bilinear (align-corners) resize of a flow, optionally scaling its values

    Args:
        flow: Input flow
        dims: Output (H, W)
        value_scale: (x, y) factors applied to the values
        frame: Frame of the result; defaults to the input frame scaled by value_scale

    Returns:
        Resized FlowField
    """
    resized = bilinear_resize(flow.tensor, dims[0], dims[1])
    if value_scale != (1.0, 1.0):
        resized = scale_channels(resized, value_scale)
    if frame is None:
        frame = (int(round(flow.frame[0] * value_scale[1])), int(round(flow.frame[1] * value_scale[0])))
    return FlowField(tensor=resized, frame=frame)


def downsample_gt(gt: FlowField, dims: Tuple[int, int], rescale_values: bool) -> FlowField:
    """
    Ground truth brought to a coarser grid

    With rescale_values the values are multiplied by (W_L / W, H_L / H) and the result's
    frame is the target grid; otherwise the values and the frame stay unchanged.

    Align-corners pixels shrink by (W_L - 1) / (W - 1), not W_L / W, so the result equals a
    flow generated directly on the coarse grid times W_L (W - 1) / (W (W_L - 1)).
    """
    if dims[0] > gt.height or dims[1] > gt.width:
        raise DataError(f"downsample_gt: target {dims} larger than flow {gt.dims}")
    resized = bilinear_resize(gt.tensor, dims[0], dims[1])
    if not rescale_values:
        return FlowField(tensor=resized, frame=gt.frame)
    factors = (dims[1] / gt.frame[1], dims[0] / gt.frame[0])
    return FlowField(tensor=scale_channels(resized, factors), frame=tuple(dims))
