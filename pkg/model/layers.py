"""
Parameter containers and the convolutional building blocks of the network.
"""
from collections import OrderedDict
from typing import Any, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from engine import ops
from engine.ops import BatchNormStats
from engine.params import ModelParams
from engine.tensor import Tensor
from utils.errors import CheckpointError


class Module:
    """
    Base class of every network component.

    Tensor attributes are parameters, Module attributes are children and
    BatchNormStats attributes are running-statistic buffers; all are registered in
    assignment order, which fixes the parameter naming and ordering.
    """

    def __init__(self):
        object.__setattr__(self, "_parameters", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())
        object.__setattr__(self, "_buffers", OrderedDict())
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value: Any) -> None:
        if isinstance(value, Tensor):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        elif isinstance(value, BatchNormStats):
            self._buffers[name] = value
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError(f"{type(self).__name__} has no forward pass")

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name, tensor in self._parameters.items():
            yield prefix + name, tensor
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, BatchNormStats]]:
        for name, stats in self._buffers.items():
            yield prefix + name, stats
        for name, module in self._modules.items():
            yield from module.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> ModelParams:
        return ModelParams.from_named(self.named_parameters())

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for module in self._modules.values():
            module.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def freeze(self) -> None:
        """Exclude every parameter of this module from training"""
        for _, tensor in self.named_parameters():
            tensor.requires_grad = False
            tensor.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        """Parameters followed by running statistics, as plain arrays"""
        state = OrderedDict((name, t.data) for name, t in self.named_parameters())
        for name, stats in self.named_buffers():
            state[f"{name}.running_mean"] = stats.running_mean
            state[f"{name}.running_var"] = stats.running_var
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        """
        Copy arrays into parameters and buffers

        Args:
            state: Name -> array mapping as produced by state_dict
            strict: Reject missing and unexpected names
        """
        own = self.state_dict()
        if strict:
            missing = [name for name in own if name not in state]
            unexpected = [name for name in state if name not in own]
            if missing or unexpected:
                raise CheckpointError(f"state mismatch: missing {missing[:5]}, unexpected {unexpected[:5]}")

        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        for name, array in state.items():
            if name not in own:
                continue
            if array.shape != own[name].shape:
                raise CheckpointError(f"entry {name} has shape {array.shape}, expected {own[name].shape}")
            if name in params:
                params[name].data = np.array(array, dtype=params[name].dtype)
            else:
                owner, field = name.rsplit(".", 1)
                setattr(buffers[owner], field, np.array(array, dtype=own[name].dtype))


class ModuleList(Module):
    """Ordered children registered under their index"""

    def __init__(self, modules: Sequence[Module]):
        super().__init__()
        for index, module in enumerate(modules):
            setattr(self, str(index), module)

    def __iter__(self) -> Iterator[Module]:
        return iter(self._modules.values())

    def __len__(self) -> int:
        return len(self._modules)

    def __getitem__(self, index: int) -> Module:
        return list(self._modules.values())[index]


def he_normal(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, dtype: str) -> Tensor:
    weights = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    return Tensor(weights.astype(dtype), requires_grad=True)


class Conv2d(Module):

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel: int = 3,
        stride: int = 1,
        padding: Optional[int] = None,
        dilation: int = 1,
        bias: bool = True,
        dtype: str = "float32",
    ):
        super().__init__()
        self.stride = stride
        self.dilation = dilation
        self.padding = dilation * (kernel // 2) if padding is None else padding
        self.weight = he_normal(rng, (out_channels, in_channels, kernel, kernel), in_channels * kernel * kernel, dtype)
        if bias:
            self.bias = Tensor(np.zeros((1, out_channels, 1, 1), dtype=dtype), requires_grad=True)
        else:
            self.bias = None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding,
                          dilation=self.dilation)


class ConvTranspose2d(Module):

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        kernel: int,
        stride: int,
        padding: int,
        dtype: str = "float32",
    ):
        super().__init__()
        self.stride = stride
        self.padding = padding
        self.weight = he_normal(rng, (in_channels, out_channels, kernel, kernel), in_channels * kernel * kernel, dtype)
        self.bias = Tensor(np.zeros((1, out_channels, 1, 1), dtype=dtype), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv_transpose2d(x, self.weight, stride=self.stride, padding=self.padding, bias=self.bias)


class BatchNorm2d(Module):

    def __init__(self, channels: int, dtype: str = "float32"):
        super().__init__()
        self.scale = Tensor(np.ones((1, channels, 1, 1), dtype=dtype), requires_grad=True)
        self.shift = Tensor(np.zeros((1, channels, 1, 1), dtype=dtype), requires_grad=True)
        self.stats = BatchNormStats(channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.batch_norm(x, self.scale, self.shift, self.stats, training=self.training)


class ConvBlock(Module):
    """3x3 conv, batch norm, ReLU"""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        rng: np.random.Generator,
        stride: int = 1,
        dilation: int = 1,
        dtype: str = "float32",
    ):
        super().__init__()
        self.conv = Conv2d(in_channels, out_channels, rng, stride=stride, dilation=dilation, bias=False, dtype=dtype)
        self.norm = BatchNorm2d(out_channels, dtype=dtype)

    def forward(self, x: Tensor) -> Tensor:
        return ops.relu(self.norm(self.conv(x)))


def block_stack(widths: List[int], in_channels: int, rng: np.random.Generator, dtype: str,
                dilations: Optional[List[int]] = None) -> ModuleList:
    """Plain chain of ConvBlocks"""
    blocks = []
    for index, width in enumerate(widths):
        dilation = dilations[index] if dilations else 1
        blocks.append(ConvBlock(in_channels, width, rng, dilation=dilation, dtype=dtype))
        in_channels = width
    return ModuleList(blocks)
