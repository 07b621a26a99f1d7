"""
Global (all-pairs) and local (radius-R) correlation volumes.

Global volume layout: (batch, H*W, H, W); channel = source location, row-major over
(y', x'); spatial position = target location.
Local volume layout: (batch, (2R+1)^2, H, W); channel = displacement, row-major over
(dy, dx) from -R to +R; source accesses outside the map contribute 0.
"""
import numpy as np

from engine.parallel import map_batch, stack_batch
from engine.tensor import Context, Function, Tensor
from utils.errors import DataError, ShapeMismatchError


def _check_pair(op: str, target: np.ndarray, source: np.ndarray) -> None:
    for axis, name in enumerate(("batch", "channels", "height", "width")):
        if target.shape[axis] != source.shape[axis]:
            raise ShapeMismatchError(op, name, target.shape[axis], source.shape[axis])


class GlobalCorrelation(Function):

    @staticmethod
    def forward(ctx: Context, target, source):
        _check_pair("global_correlation", target, source)
        batch, channels, height, width = target.shape
        locations = height * width

        def one(n: int) -> np.ndarray:
            t = target[n].reshape(channels, locations)
            s = source[n].reshape(channels, locations)
            return (s.T @ t).reshape(locations, height, width)

        ctx.save_for_backward(target, source)
        return stack_batch(one, batch)

    @staticmethod
    def backward(ctx: Context, grad):
        target, source = ctx.saved
        batch, channels, height, width = target.shape
        locations = height * width

        def one(n: int):
            g = grad[n].reshape(locations, locations)
            t = target[n].reshape(channels, locations)
            s = source[n].reshape(channels, locations)
            return (s @ g).reshape(channels, height, width), (t @ g.T).reshape(channels, height, width)

        pairs = map_batch(one, batch)
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def global_correlation(target_features: Tensor, source_features: Tensor) -> Tensor:
    """
    C(x, x') = F_t(x) . F_s(x') for every target location x and source location x'

    Args:
        target_features: (N, d, H, W) target feature map
        source_features: (N, d, H, W) source feature map

    Returns:
        (N, H*W, H, W) global cost volume
    """
    return GlobalCorrelation.apply(target_features, source_features)


def displacements(radius: int):
    """(dy, dx) pairs in channel order"""
    return [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)]


class LocalCorrelation(Function):

    @staticmethod
    def forward(ctx: Context, target, source, *, radius: int):
        _check_pair("local_correlation", target, source)
        batch, _, height, width = target.shape
        offsets = displacements(radius)

        def one(n: int) -> np.ndarray:
            padded = np.pad(source[n], ((0, 0), (radius, radius), (radius, radius)))
            out = np.empty((len(offsets), height, width), dtype=np.result_type(target, source))
            for index, (dy, dx) in enumerate(offsets):
                window = padded[:, radius + dy:radius + dy + height, radius + dx:radius + dx + width]
                out[index] = (target[n] * window).sum(axis=0)
            return out

        ctx.save_for_backward(target, source, radius)
        return stack_batch(one, batch)

    @staticmethod
    def backward(ctx: Context, grad):
        target, source, radius = ctx.saved
        batch, channels, height, width = target.shape
        offsets = displacements(radius)

        def one(n: int):
            padded = np.pad(source[n], ((0, 0), (radius, radius), (radius, radius)))
            grad_target = np.zeros_like(target[n])
            grad_padded = np.zeros_like(padded)
            for index, (dy, dx) in enumerate(offsets):
                rows = slice(radius + dy, radius + dy + height)
                cols = slice(radius + dx, radius + dx + width)
                g = grad[n, index][None]
                grad_target += g * padded[:, rows, cols]
                grad_padded[:, rows, cols] += g * target[n]
            return grad_target, grad_padded[:, radius:radius + height, radius:radius + width]

        pairs = map_batch(one, batch)
        return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def local_correlation(target_features: Tensor, source_features: Tensor, radius: int) -> Tensor:
    """
    c(x, d) = F_t(x) . F_s(x + d) for every displacement with |d|_inf <= radius

    Args:
        target_features: (N, d, H, W) target feature map
        source_features: (N, d, H, W) source feature map, usually warped
        radius: Search radius R >= 1

    Returns:
        (N, (2R+1)^2, H, W) local cost volume
    """
    if radius < 1:
        raise DataError(f"local_correlation: radius must be >= 1, got {radius}")
    return LocalCorrelation.apply(target_features, source_features, radius=radius)
