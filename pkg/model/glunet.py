"""
Two-stream coarse-to-fine correspondence network.

The L-Net works on the image resized to H_L x W_L: a global correlation at L1 is
decoded into a correspondence map, refined by a local correlation at L2. The H-Net
works on the full image at H/8 (L3) and H/4 (L4). Flows inside the L-Net are in
H_L x W_L pixels, flows inside the H-Net in H x W pixels.
"""
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel

from config import presets
from config.config import MODEL_DIVISOR
from config.models import ModelConfig
from correlation.filters import cyclic_consistency_filter, normalize_cost_volume
from correlation.volumes import global_correlation, local_correlation
from engine.ops import add, bilinear_resize, l2_normalize_channels
from engine.tensor import Tensor
from flow.conversions import map_to_flow, rescale_flow_frame, upsample_flow
from flow.fields import FlowField
from flow.warp import warp
from model.backbone import BackboneSpec, ToyBackbone, extract_pyramid
from model.decoders import FlowDecoder, MappingDecoder, RefinementNetwork, refine
from model.layers import ConvTranspose2d, Module
from storage.checkpoint import read_checkpoint, write_checkpoint
from utils.errors import CheckpointError, ShapeMismatchError
from utils.logger import setup_logger

logger = setup_logger(__name__)


class GLUNetOutput(BaseModel):
    """Final H x W flow plus every intermediate estimate"""
    flow: FlowField
    levels: Dict[str, FlowField]
    intermediates: List[FlowField] = []
    global_volume_shape: Tuple[int, int, int, int]

    class Config:
        arbitrary_types_allowed = True


def iterative_refinement_schedule(height: int, width: int, lnet_height: int, lnet_width: int) -> List[Tuple[int, int]]:
    """
    Intermediate H-Net resolutions at which the L3 decoder is reapplied

    Empty when the L3 / L2 resolution ratio is at most 3; otherwise l_H / 2^k for
    k = 1, 2, ... while that stays at least twice l_L. Returned finest first; they are
    visited coarsest first.
    """
    high = (height // MODEL_DIVISOR, width // MODEL_DIVISOR)
    low = (lnet_height // MODEL_DIVISOR, lnet_width // MODEL_DIVISOR)

    def ratio(dims: Tuple[int, int]) -> float:
        return min(dims[0] / low[0], dims[1] / low[1])

    if ratio(high) <= 3:
        return []
    schedule, k = [], 1
    while True:
        dims = (max(1, high[0] // 2 ** k), max(1, high[1] // 2 ** k))
        if ratio(dims) < 2:
            return schedule
        schedule.append(dims)
        k += 1


class GLUNetModel(Module):

    def __init__(self, config: ModelConfig, load_backbone: bool = True):
        super().__init__()
        object.__setattr__(self, "config", config)
        dtype = config.dtype
        rng = np.random.default_rng(config.seed)
        self.spec = BackboneSpec.from_config(config)
        radius = config.local_radius

        self.backbone = ToyBackbone(config.backbone_channels, rng, dtype)
        h1, w1 = config.lnet_height // 16, config.lnet_width // 16
        self.mapping = MappingDecoder(h1 * w1, config.mapping_channels, rng, dtype)

        def cost_channels(level: str) -> int:
            return (2 * radius[level] + 1) ** 2

        carry_channels = 2
        self.decoder_l2 = FlowDecoder(cost_channels("L2") + 2, config.decoder_channels, rng, dtype)
        self.decoder_l3 = FlowDecoder(cost_channels("L3") + 2, config.decoder_channels, rng, dtype)
        self.decoder_l4 = FlowDecoder(cost_channels("L4") + 2 + carry_channels, config.decoder_channels, rng, dtype)
        self.carry_l4 = ConvTranspose2d(config.decoder_channels[-1], carry_channels, rng, presets.CARRY_KERNEL,
                                        presets.CARRY_STRIDE, presets.CARRY_PADDING, dtype)
        f_channels = config.decoder_channels[-1]
        self.refine_l2 = (RefinementNetwork(f_channels, config.refinement_channels, rng, dtype=dtype)
                          if "L2" in config.refinement_levels else None)
        self.refine_l4 = (RefinementNetwork(f_channels, config.refinement_channels, rng, dtype=dtype)
                          if "L4" in config.refinement_levels else None)

        if config.backbone_variant == "fixed":
            if load_backbone:
                self.backbone.load_frozen(config.backbone_weights)
            else:
                self.backbone.freeze()
        logger.debug(f"Built model with {count_params(self)} parameters")

    @property
    def backbone_frozen(self) -> bool:
        return self.config.backbone_variant == "fixed"

    def train(self, mode: bool = True) -> "GLUNetModel":
        super().train(mode)
        if self.backbone_frozen:
            self.backbone.train(False)
        return self

    def _as_model_dtype(self, image: Tensor) -> Tensor:
        if image.dtype == np.dtype(self.config.dtype):
            return image
        return Tensor(image.data.astype(self.config.dtype))

    def _local_step(
        self,
        decoder: FlowDecoder,
        target: Tensor,
        source: Tensor,
        up_flow: FlowField,
        radius: int,
        carry: Optional[Tensor] = None,
    ) -> Tuple[FlowField, Tensor]:
        """Warp, correlate locally, decode the residual and add it to up_flow"""
        warped = warp(source, up_flow)
        if self.config.normalize_local_features:
            target, warped = l2_normalize_channels(target), l2_normalize_channels(warped)
        cost = local_correlation(target, warped, radius)
        residual, f = decoder(cost, up_flow, carry)
        return FlowField(tensor=add(up_flow.tensor, residual.tensor), frame=up_flow.frame), f

    def forward(self, source: Tensor, target: Tensor) -> GLUNetOutput:
        """
        Estimate the flow warping the source image towards the target image

        Args:
            source: (N, 3, H, W) image in [0, 1], H and W divisible by 8
            target: Same shape as source

        Returns:
            GLUNetOutput with the (N, 2, H, W) flow in H x W pixels
        """
        if source.shape != target.shape:
            raise ShapeMismatchError("forward", "image shape", None, None, f"{source.shape} vs {target.shape}")
        source, target = self._as_model_dtype(source), self._as_model_dtype(target)
        source_pyramid = extract_pyramid(self.backbone, source, self.spec)
        target_pyramid = extract_pyramid(self.backbone, target, self.spec)
        return self.forward_features(source_pyramid, target_pyramid, (source.shape[2], source.shape[3]))

    def forward_features(
        self,
        source: Dict[str, Tensor],
        target: Dict[str, Tensor],
        image_dims: Tuple[int, int],
    ) -> GLUNetOutput:
        """Decode flows from precomputed pyramids of an image_dims-sized pair"""
        config = self.config
        height, width = image_dims
        lnet_frame = (config.lnet_height, config.lnet_width)
        hnet_frame = (height, width)
        radius = config.local_radius
        levels: Dict[str, FlowField] = {}

        # L1: global correlation and correspondence map
        volume = global_correlation(target["L1"], source["L1"])
        global_shape = volume.shape
        volume = normalize_cost_volume(volume, config.cost_volume_order)
        if config.cyclic_consistency:
            volume = cyclic_consistency_filter(volume)
        correspondence = self.mapping(volume)
        levels["L1"] = rescale_flow_frame(map_to_flow(correspondence), lnet_frame)

        # L2
        dims_l2 = target["L2"].shape[2:]
        up = upsample_flow(levels["L1"], dims_l2)
        flow, f = self._local_step(self.decoder_l2, target["L2"], source["L2"], up, radius["L2"])
        levels["L2"] = refine(flow, self.refine_l2, f)

        # L-Net -> H-Net transition, optionally through intermediate resolutions
        dims_l3 = target["L3"].shape[2:]
        schedule = iterative_refinement_schedule(height, width, *lnet_frame) if config.iterative_refinement else []
        stops = list(reversed(schedule)) + [tuple(dims_l3)]
        value_scale = (width / config.lnet_width, height / config.lnet_height)
        current = levels["L2"]
        intermediates = []
        for index, dims in enumerate(stops):
            if index == 0:
                up = upsample_flow(current, dims, value_scale=value_scale, frame=hnet_frame)
            else:
                up = upsample_flow(current, dims)
            target_l3, source_l3 = target["L3"], source["L3"]
            if tuple(dims) != tuple(dims_l3):
                target_l3 = bilinear_resize(target_l3, *dims)
                source_l3 = bilinear_resize(source_l3, *dims)
            current, f3 = self._local_step(self.decoder_l3, target_l3, source_l3, up, radius["L3"])
            if index < len(stops) - 1:
                intermediates.append(current)
        levels["L3"] = current

        # L4 with the transposed-convolution carry from L3
        dims_l4 = target["L4"].shape[2:]
        up = upsample_flow(levels["L3"], dims_l4)
        carry = self.carry_l4(f3)
        flow, f = self._local_step(self.decoder_l4, target["L4"], source["L4"], up, radius["L4"], carry)
        levels["L4"] = refine(flow, self.refine_l4, f)

        final = upsample_flow(levels["L4"], hnet_frame)
        return GLUNetOutput(flow=final, levels=levels, intermediates=intermediates, global_volume_shape=global_shape)


def count_params(model: Module) -> int:
    """Number of scalar parameters (running statistics excluded)"""
    return model.parameters().count()


def save_checkpoint(model: GLUNetModel, path: Union[str, Path]) -> None:
    """Write parameters, running statistics and the model config"""
    write_checkpoint(path, model.state_dict(), model.config.dict())


def load_checkpoint(path: Union[str, Path]) -> GLUNetModel:
    """Rebuild a model from a checkpoint written by save_checkpoint"""
    entries, config = read_checkpoint(path)
    if config is None:
        raise CheckpointError(f"checkpoint {path} carries no model config")
    try:
        model_config = ModelConfig.parse_obj(config)
    except ValueError as e:
        raise CheckpointError(f"checkpoint {path} has an invalid model config: {e}") from e
    model = GLUNetModel(model_config, load_backbone=False)
    model.load_state_dict(entries)
    return model
