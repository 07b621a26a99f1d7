"""
Differentiable operations needed by the correspondence network.

Convolutions use an im2col layout with a fixed tap order; every kernel works on one
batch element at a time through `engine.parallel`.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np

from config.config import BN_EPS, BN_MOMENTUM, L2_EPS
from engine.parallel import stack_batch, sum_batch
from engine.tensor import Context, Function, Tensor
from utils.errors import DataError, ShapeMismatchError


def conv_output_size(size: int, kernel: int, stride: int, padding: int, dilation: int = 1) -> int:
    """Standard convolution size formula"""
    return (size + 2 * padding - dilation * (kernel - 1) - 1) // stride + 1


def _im2col(x: np.ndarray, kernel: int, stride: int, dilation: int, out_h: int, out_w: int) -> np.ndarray:
    """(C, Hp, Wp) padded input -> (C, k, k, out_h, out_w) columns"""
    cols = np.empty((x.shape[0], kernel, kernel, out_h, out_w), dtype=x.dtype)
    row_span = stride * (out_h - 1) + 1
    col_span = stride * (out_w - 1) + 1
    for i in range(kernel):
        for j in range(kernel):
            r0, c0 = i * dilation, j * dilation
            cols[:, i, j] = x[:, r0:r0 + row_span:stride, c0:c0 + col_span:stride]
    return cols


def _col2im(cols: np.ndarray, padded_hw: Tuple[int, int], stride: int, dilation: int) -> np.ndarray:
    """Adjoint of _im2col: scatter-add (C, k, k, out_h, out_w) columns into (C, Hp, Wp)"""
    channels, kernel, _, out_h, out_w = cols.shape
    out = np.zeros((channels,) + tuple(padded_hw), dtype=cols.dtype)
    row_span = stride * (out_h - 1) + 1
    col_span = stride * (out_w - 1) + 1
    for i in range(kernel):
        for j in range(kernel):
            r0, c0 = i * dilation, j * dilation
            out[:, r0:r0 + row_span:stride, c0:c0 + col_span:stride] += cols[:, i, j]
    return out


def _pad_spatial(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (padding, padding), (padding, padding)))


def _check_conv_args(op: str, weight: np.ndarray, stride: int, dilation: int) -> None:
    if weight.shape[2] != weight.shape[3]:
        raise ShapeMismatchError(op, "kernel width", weight.shape[2], weight.shape[3])
    if stride < 1:
        raise DataError(f"{op}: stride must be >= 1, got {stride}")
    if dilation < 1:
        raise DataError(f"{op}: dilation must be >= 1, got {dilation}")


class Conv2d(Function):

    @staticmethod
    def forward(ctx: Context, x, weight, bias=None, *, stride=1, padding=0, dilation=1):
        _check_conv_args("conv2d", weight, stride, dilation)
        batch, channels, height, width = x.shape
        out_c, in_c, kernel, _ = weight.shape
        if channels != in_c:
            raise ShapeMismatchError("conv2d", "input channels", in_c, channels)
        if bias is not None and bias.shape != (1, out_c, 1, 1):
            raise ShapeMismatchError("conv2d", "bias channels", out_c, bias.shape[1])
        out_h = conv_output_size(height, kernel, stride, padding, dilation)
        out_w = conv_output_size(width, kernel, stride, padding, dilation)
        if out_h < 1 or out_w < 1:
            raise ShapeMismatchError("conv2d", "spatial size", None, None,
                                     f"input {height}x{width} too small for kernel {kernel}")

        def one(n: int) -> np.ndarray:
            cols = _im2col(_pad_spatial(x[n], padding), kernel, stride, dilation, out_h, out_w)
            return np.tensordot(weight, cols, axes=([1, 2, 3], [0, 1, 2]))

        out = stack_batch(one, batch)
        if bias is not None:
            out += bias
        ctx.save_for_backward(x, weight, bias is not None, stride, padding, dilation)
        return out

    @staticmethod
    def backward(ctx: Context, grad):
        x, weight, has_bias, stride, padding, dilation = ctx.saved
        batch, _, height, width = x.shape
        kernel = weight.shape[2]
        out_h, out_w = grad.shape[2], grad.shape[3]
        padded_hw = (height + 2 * padding, width + 2 * padding)

        def input_grad(n: int) -> np.ndarray:
            cols = np.tensordot(weight, grad[n], axes=([0], [0]))
            full = _col2im(cols, padded_hw, stride, dilation)
            return full[:, padding:padding + height, padding:padding + width]

        def weight_grad(n: int) -> np.ndarray:
            cols = _im2col(_pad_spatial(x[n], padding), kernel, stride, dilation, out_h, out_w)
            return np.tensordot(grad[n], cols, axes=([1, 2], [3, 4]))

        grad_x = stack_batch(input_grad, batch)
        grad_w = sum_batch(weight_grad, batch)
        if has_bias:
            return grad_x, grad_w, grad.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        return grad_x, grad_w


def conv2d(
    input: Tensor,
    weight: Tensor,
    bias: Optional[Tensor] = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
) -> Tensor:
    """
    2-D cross-correlation of an (N, C, H, W) input with an (O, C, k, k) kernel

    Args:
        input: Input tensor
        weight: Kernel tensor
        bias: Optional (1, O, 1, 1) bias
        stride: Step between output samples
        padding: Zero padding on every border
        dilation: Spacing between kernel taps

    Returns:
        (N, O, H', W') tensor
    """
    tensors = (input, weight) if bias is None else (input, weight, bias)
    return Conv2d.apply(*tensors, stride=stride, padding=padding, dilation=dilation)


class ConvTranspose2d(Function):

    @staticmethod
    def forward(ctx: Context, y, weight, bias=None, *, stride=1, padding=0):
        _check_conv_args("conv_transpose2d", weight, stride, 1)
        batch, channels, height, width = y.shape
        in_c, out_c, kernel, _ = weight.shape
        if channels != in_c:
            raise ShapeMismatchError("conv_transpose2d", "input channels", in_c, channels)
        if bias is not None and bias.shape != (1, out_c, 1, 1):
            raise ShapeMismatchError("conv_transpose2d", "bias channels", out_c, bias.shape[1])
        padded_hw = ((height - 1) * stride + kernel, (width - 1) * stride + kernel)
        out_h = padded_hw[0] - 2 * padding
        out_w = padded_hw[1] - 2 * padding
        if out_h < 1 or out_w < 1:
            raise ShapeMismatchError("conv_transpose2d", "spatial size", None, None,
                                     f"padding {padding} removes the whole output")

        def one(n: int) -> np.ndarray:
            cols = np.tensordot(weight, y[n], axes=([0], [0]))
            full = _col2im(cols, padded_hw, stride, 1)
            return full[:, padding:padding + out_h, padding:padding + out_w]

        out = stack_batch(one, batch)
        if bias is not None:
            out += bias
        ctx.save_for_backward(y, weight, bias is not None, stride, padding)
        return out

    @staticmethod
    def backward(ctx: Context, grad):
        y, weight, has_bias, stride, padding = ctx.saved
        batch, _, height, width = y.shape
        kernel = weight.shape[2]

        def columns(n: int) -> np.ndarray:
            return _im2col(_pad_spatial(grad[n], padding), kernel, stride, 1, height, width)

        def input_grad(n: int) -> np.ndarray:
            return np.tensordot(weight, columns(n), axes=([1, 2, 3], [0, 1, 2]))

        def weight_grad(n: int) -> np.ndarray:
            return np.tensordot(y[n], columns(n), axes=([1, 2], [3, 4]))

        grad_y = stack_batch(input_grad, batch)
        grad_w = sum_batch(weight_grad, batch)
        if has_bias:
            return grad_y, grad_w, grad.sum(axis=(0, 2, 3)).reshape(1, -1, 1, 1)
        return grad_y, grad_w


def conv_transpose2d(
    input: Tensor,
    weight: Tensor,
    stride: int = 1,
    padding: int = 0,
    bias: Optional[Tensor] = None,
) -> Tensor:
    """
    Transposed convolution, the adjoint of conv2d with the same (I, O, k, k) weight

    Output extent is (in - 1) * stride - 2 * padding + k.
    """
    tensors = (input, weight) if bias is None else (input, weight, bias)
    return ConvTranspose2d.apply(*tensors, stride=stride, padding=padding)


class BatchNormStats:
    """Running mean/variance of one batch-norm layer"""

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS, dtype: str = "float32"):
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self.momentum = momentum
        self.eps = eps

    def update(self, mean: np.ndarray, unbiased_var: np.ndarray) -> None:
        self.running_mean = ((1 - self.momentum) * self.running_mean + self.momentum * mean).astype(
            self.running_mean.dtype)
        self.running_var = ((1 - self.momentum) * self.running_var + self.momentum * unbiased_var).astype(
            self.running_var.dtype)


class BatchNorm(Function):
    _axes = (0, 2, 3)

    @staticmethod
    def forward(ctx: Context, x, scale, shift, *, stats: BatchNormStats, training: bool):
        batch, channels, height, width = x.shape
        count = batch * height * width
        if count == 0:
            raise DataError("batch_norm: zero-size batch")
        for name, param in (("scale", scale), ("shift", shift)):
            if param.shape != (1, channels, 1, 1):
                raise ShapeMismatchError("batch_norm", f"{name} channels", channels, param.shape[1])

        if training:
            mean = x.mean(axis=BatchNorm._axes)
            var = x.var(axis=BatchNorm._axes)
            unbiased = var * count / (count - 1) if count > 1 else var
            stats.update(mean, unbiased)
        else:
            mean = stats.running_mean.astype(x.dtype)
            var = stats.running_var.astype(x.dtype)

        inv_std = (1.0 / np.sqrt(var + stats.eps)).astype(x.dtype).reshape(1, -1, 1, 1)
        x_hat = (x - mean.reshape(1, -1, 1, 1)) * inv_std
        ctx.save_for_backward(x_hat, inv_std, scale, training, count)
        return scale * x_hat + shift

    @staticmethod
    def backward(ctx: Context, grad):
        x_hat, inv_std, scale, training, count = ctx.saved
        axes = BatchNorm._axes
        grad_scale = (grad * x_hat).sum(axis=axes).reshape(1, -1, 1, 1)
        grad_shift = grad.sum(axis=axes).reshape(1, -1, 1, 1)
        grad_x_hat = grad * scale
        if training:
            grad_x = inv_std / count * (
                count * grad_x_hat
                - grad_x_hat.sum(axis=axes, keepdims=True)
                - x_hat * (grad_x_hat * x_hat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_x = grad_x_hat * inv_std
        return grad_x, grad_scale, grad_shift


def batch_norm(input: Tensor, scale: Tensor, shift: Tensor, running_stats: BatchNormStats, training: bool) -> Tensor:
    """
    Per-channel batch normalisation

    Training mode normalises with batch statistics and updates `running_stats`;
    eval mode uses the running statistics.
    """
    return BatchNorm.apply(input, scale, shift, stats=running_stats, training=training)


class Relu(Function):

    @staticmethod
    def forward(ctx: Context, x):
        mask = x > 0
        ctx.save_for_backward(mask)
        return np.where(mask, x, 0).astype(x.dtype)

    @staticmethod
    def backward(ctx: Context, grad):
        (mask,) = ctx.saved
        return (grad * mask,)


def relu(input: Tensor) -> Tensor:
    return Relu.apply(input)


class ConcatChannels(Function):

    @staticmethod
    def forward(ctx: Context, *arrays):
        first = arrays[0]
        for array in arrays[1:]:
            for axis, name in ((0, "batch"), (2, "height"), (3, "width")):
                if array.shape[axis] != first.shape[axis]:
                    raise ShapeMismatchError("concat_channels", name, first.shape[axis], array.shape[axis])
        ctx.save_for_backward(np.cumsum([a.shape[1] for a in arrays])[:-1])
        return np.concatenate(arrays, axis=1)

    @staticmethod
    def backward(ctx: Context, grad):
        (offsets,) = ctx.saved
        return tuple(np.split(grad, offsets, axis=1))


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    """Concatenate along the channel dimension, preserving order"""
    if not tensors:
        raise DataError("concat_channels: empty tensor list")
    return ConcatChannels.apply(*tensors)


def interpolation_matrix(out_size: int, in_size: int, dtype=np.float64) -> np.ndarray:
    """(out_size, in_size) align-corners linear interpolation weights"""
    matrix = np.zeros((out_size, in_size), dtype=np.float64)
    rows = np.arange(out_size)
    if in_size == 1:
        matrix[:, 0] = 1.0
        return matrix.astype(dtype)
    if out_size == 1:
        source = np.zeros(1)
    else:
        source = rows * (in_size - 1) / (out_size - 1)
    lower = np.clip(np.floor(source).astype(np.int64), 0, in_size - 2)
    frac = source - lower
    np.add.at(matrix, (rows, lower), 1.0 - frac)
    np.add.at(matrix, (rows, lower + 1), frac)
    return matrix.astype(dtype)


class BilinearResize(Function):

    @staticmethod
    def forward(ctx: Context, x, *, out_h: int, out_w: int):
        if out_h < 1 or out_w < 1:
            raise DataError(f"bilinear_resize: output size must be >= 1, got {out_h}x{out_w}")
        height, width = x.shape[2], x.shape[3]
        if (height, width) == (out_h, out_w):
            ctx.save_for_backward(None, None)
            return x.copy()
        rows = interpolation_matrix(out_h, height, x.dtype)
        cols = interpolation_matrix(out_w, width, x.dtype)
        ctx.save_for_backward(rows, cols)
        return np.matmul(np.matmul(rows, x), cols.T)

    @staticmethod
    def backward(ctx: Context, grad):
        rows, cols = ctx.saved
        if rows is None:
            return (grad,)
        return (np.matmul(np.matmul(rows.T, grad), cols),)


def bilinear_resize(input: Tensor, out_h: int, out_w: int) -> Tensor:
    """Align-corners bilinear resize of the spatial dimensions"""
    return BilinearResize.apply(input, out_h=out_h, out_w=out_w)


class L2NormalizeChannels(Function):

    @staticmethod
    def forward(ctx: Context, x, *, eps: float):
        norm = np.sqrt((x * x).sum(axis=1, keepdims=True))
        denom = np.maximum(norm, eps).astype(x.dtype)
        out = x / denom
        ctx.save_for_backward(out, denom, norm > eps)
        return out

    @staticmethod
    def backward(ctx: Context, grad):
        out, denom, above = ctx.saved
        projected = (grad * out).sum(axis=1, keepdims=True)
        grad_x = np.where(above, (grad - out * projected) / denom, grad / denom)
        return (grad_x.astype(grad.dtype),)


def l2_normalize_channels(input: Tensor, eps: float = L2_EPS) -> Tensor:
    """Divide each location's channel vector by max(eps, its Euclidean norm)"""
    if eps <= 0:
        raise DataError(f"l2_normalize_channels: eps must be > 0, got {eps}")
    return L2NormalizeChannels.apply(input, eps=eps)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(axis for axis, extent in enumerate(shape) if extent == 1 and grad.shape[axis] != 1)
    return grad.sum(axis=axes, keepdims=True)


class Add(Function):

    @staticmethod
    def forward(ctx: Context, a, b):
        try:
            out = a + b
        except ValueError as e:
            raise ShapeMismatchError("add", "shape", None, None, f"{a.shape} vs {b.shape}") from e
        ctx.save_for_backward(a.shape, b.shape)
        return out

    @staticmethod
    def backward(ctx: Context, grad):
        a_shape, b_shape = ctx.saved
        return _unbroadcast(grad, a_shape), _unbroadcast(grad, b_shape)


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; size-1 dimensions of either operand broadcast"""
    return Add.apply(a, b)


class ScaleChannels(Function):

    @staticmethod
    def forward(ctx: Context, x, *, factors: np.ndarray):
        ctx.save_for_backward(factors)
        return (x * factors).astype(x.dtype)

    @staticmethod
    def backward(ctx: Context, grad):
        (factors,) = ctx.saved
        return ((grad * factors).astype(grad.dtype),)


def scale_channels(input: Tensor, factors: Sequence[float]) -> Tensor:
    """Multiply channel c by the constant factors[c]"""
    factors = np.asarray(factors, dtype=input.dtype)
    if factors.shape != (input.shape[1],):
        raise ShapeMismatchError("scale_channels", "channels", input.shape[1], factors.size)
    return ScaleChannels.apply(input, factors=factors.reshape(1, -1, 1, 1))


def scale(input: Tensor, factor: float) -> Tensor:
    """Multiply every value by a constant"""
    return ScaleChannels.apply(input, factors=np.asarray(factor, dtype=input.dtype))


class SumAll(Function):

    @staticmethod
    def forward(ctx: Context, x):
        ctx.save_for_backward(x.shape)
        return x.sum(dtype=x.dtype).reshape(1, 1, 1, 1)

    @staticmethod
    def backward(ctx: Context, grad):
        (shape,) = ctx.saved
        return (np.broadcast_to(grad, shape).copy(),)


def sum_all(input: Tensor) -> Tensor:
    """Sum of every value as a 1x1x1x1 tensor"""
    return SumAll.apply(input)


class SliceChannels(Function):

    @staticmethod
    def forward(ctx: Context, x, *, start: int, stop: int):
        ctx.save_for_backward(x.shape, start, stop)
        return x[:, start:stop].copy()

    @staticmethod
    def backward(ctx: Context, grad):
        shape, start, stop = ctx.saved
        full = np.zeros(shape, dtype=grad.dtype)
        full[:, start:stop] = grad
        return (full,)


def slice_channels(input: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= input.shape[1]:
        raise ShapeMismatchError("slice_channels", "channel range", input.shape[1], stop,
                                 f"[{start}, {stop}) out of range")
    return SliceChannels.apply(input, start=start, stop=stop)


def split_channels(input: Tensor, sizes: List[int]) -> List[Tensor]:
    """Split along channels into consecutive groups of the given sizes"""
    if sum(sizes) != input.shape[1]:
        raise ShapeMismatchError("split_channels", "channels", input.shape[1], sum(sizes))
    parts, start = [], 0
    for size in sizes:
        parts.append(slice_channels(input, start, start + size))
        start += size
    return parts
