from engine.tensor import GradientTape, Tensor, backward, current_tape, no_grad
from engine.ops import (
    add,
    batch_norm,
    bilinear_resize,
    concat_channels,
    conv2d,
    conv_transpose2d,
    l2_normalize_channels,
    relu,
    scale,
    scale_channels,
    slice_channels,
    split_channels,
    sum_all,
)
from engine.optim import AdamState, adam_step
from engine.params import ModelParams
