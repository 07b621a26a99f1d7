"""
Mapping decoder (global level), dense flow decoders (local levels) and the dilated
refinement network.
"""
from typing import List, Optional, Tuple

import numpy as np

from config import presets
from engine.ops import add, concat_channels
from engine.tensor import Tensor
from flow.fields import CorrespondenceMap, FlowField
from model.layers import ConvBlock, Conv2d, Module, ModuleList, block_stack
from utils.errors import ShapeMismatchError


class MappingDecoder(Module):
    """Regresses a normalised correspondence map from the global cost volume"""

    def __init__(self, in_channels: int, channels: List[int], rng: np.random.Generator, dtype: str = "float32"):
        super().__init__()
        self.in_channels = in_channels
        self.blocks = block_stack(channels, in_channels, rng, dtype)
        self.predict = Conv2d(channels[-1], 2, rng, dtype=dtype)

    def forward(self, volume: Tensor) -> CorrespondenceMap:
        if volume.shape[1] != self.in_channels:
            raise ShapeMismatchError("mapping_decoder", "channels", self.in_channels, volume.shape[1])
        x = volume
        for block in self.blocks:
            x = block(x)
        return CorrespondenceMap(tensor=self.predict(x))


class FlowDecoder(Module):
    """
    Residual flow from a local cost volume and the upsampled flow.

    Every block consumes the concatenation of the decoder input and all earlier block
    outputs; the last block output f is returned alongside the residual.
    """

    def __init__(self, in_channels: int, channels: List[int], rng: np.random.Generator, dtype: str = "float32"):
        super().__init__()
        self.in_channels = in_channels
        blocks, width = [], in_channels
        for out_channels in channels:
            blocks.append(ConvBlock(width, out_channels, rng, dtype=dtype))
            width += out_channels
        self.blocks = ModuleList(blocks)
        self.predict = Conv2d(channels[-1], 2, rng, dtype=dtype)

    def forward(
        self,
        cost_volume: Tensor,
        up_flow: FlowField,
        carry: Optional[Tensor] = None,
    ) -> Tuple[FlowField, Tensor]:
        if cost_volume.shape[2:] != up_flow.tensor.shape[2:]:
            raise ShapeMismatchError("flow_decoder", "spatial size", None, None,
                                     f"cost volume {cost_volume.shape[2:]} vs flow {up_flow.tensor.shape[2:]}")
        inputs = [cost_volume, up_flow.tensor] + ([carry] if carry is not None else [])
        x = concat_channels(inputs)
        if x.shape[1] != self.in_channels:
            raise ShapeMismatchError("flow_decoder", "channels", self.in_channels, x.shape[1])

        features = [x]
        for block in self.blocks:
            out = block(concat_channels(features) if len(features) > 1 else x)
            features.append(out)
        f = features[-1]
        return FlowField(tensor=self.predict(f), frame=up_flow.frame), f


class RefinementNetwork(Module):
    """Dilated context network turning f into a flow residual"""

    def __init__(
        self,
        in_channels: int,
        channels: List[int],
        rng: np.random.Generator,
        dilations: Optional[List[int]] = None,
        dtype: str = "float32",
    ):
        super().__init__()
        dilations = dilations or presets.REFINEMENT_DILATIONS
        self.blocks = block_stack(channels, in_channels, rng, dtype, dilations=dilations[:len(channels)])
        self.predict = Conv2d(channels[-1], 2, rng, dilation=dilations[len(channels)], dtype=dtype)

    def forward(self, f: Tensor) -> Tensor:
        x = f
        for block in self.blocks:
            x = block(x)
        return self.predict(x)


def refine(flow: FlowField, network: Optional[RefinementNetwork], f: Tensor) -> FlowField:
    """w = R(f) + w, or w unchanged without a refinement network"""
    if network is None:
        return flow
    return FlowField(tensor=add(flow.tensor, network(f)), frame=flow.frame)
