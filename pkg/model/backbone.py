"""
Feature pyramid backbone.

The toy backbone is a chain of stride-2 ConvBlocks with outputs at /2, /4, /8 and /16.
L-Net levels come from the image resized to H_L x W_L (/16 -> L1, /8 -> L2); H-Net
levels come from the full image (/8 -> L3, /4 -> L4).
"""
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from config.config import IMAGENET_MEAN, IMAGENET_STD, MODEL_DIVISOR
from config.models import ModelConfig
from engine.ops import bilinear_resize
from engine.tensor import Tensor
from model.layers import ConvBlock, Module, ModuleList
from storage.checkpoint import read_checkpoint
from utils.errors import CheckpointError, ShapeMismatchError
from utils.logger import setup_logger

logger = setup_logger(__name__)

# level -> (stream, backbone stage index); stage k has stride 2^(k+1)
LEVEL_STAGES = {"L1": ("lnet", 3), "L2": ("lnet", 2), "L3": ("hnet", 2), "L4": ("hnet", 1)}


class BackboneSpec(BaseModel):
    variant: str
    channels: List[int]
    lnet_dims: Tuple[int, int]
    strides: Dict[str, int] = {"L1": 16, "L2": 8, "L3": 8, "L4": 4}

    @classmethod
    def from_config(cls, config: ModelConfig) -> "BackboneSpec":
        return cls(
            variant=config.backbone_variant,
            channels=config.backbone_channels,
            lnet_dims=(config.lnet_height, config.lnet_width),
        )

    def level_channels(self) -> Dict[str, int]:
        return {level: self.channels[stage] for level, (_, stage) in LEVEL_STAGES.items()}

    def level_dims(self, height: int, width: int) -> Dict[str, Tuple[int, int]]:
        """Spatial size of every level for an H x W input"""
        dims = {}
        for level, (stream, _) in LEVEL_STAGES.items():
            base_h, base_w = self.lnet_dims if stream == "lnet" else (height, width)
            dims[level] = (base_h // self.strides[level], base_w // self.strides[level])
        return dims


def normalize_image(image: Tensor) -> Tensor:
    """ImageNet mean/std normalisation of an (N, 3, H, W) image in [0, 1]"""
    mean = np.asarray(IMAGENET_MEAN, dtype=image.dtype).reshape(1, 3, 1, 1)
    std = np.asarray(IMAGENET_STD, dtype=image.dtype).reshape(1, 3, 1, 1)
    return Tensor((image.data - mean) / std)


class ToyBackbone(Module):

    def __init__(self, channels: List[int], rng: np.random.Generator, dtype: str = "float32"):
        super().__init__()
        stages, in_channels = [], 3
        for width in channels:
            stages.append(ConvBlock(in_channels, width, rng, stride=2, dtype=dtype))
            in_channels = width
        self.stages = ModuleList(stages)

    def forward(self, image: Tensor, depth: Optional[int] = None) -> List[Tensor]:
        """Outputs of the first `depth` stages (all by default)"""
        outputs, x = [], image
        for stage in list(self.stages)[:depth or len(self.stages)]:
            x = stage(x)
            outputs.append(x)
        return outputs

    def load_frozen(self, path: str) -> None:
        """Load weights from a checkpoint (entries under 'backbone.' or bare names) and freeze them"""
        entries, _ = read_checkpoint(path)
        prefixed = {name[len("backbone."):]: array for name, array in entries.items() if name.startswith("backbone.")}
        try:
            self.load_state_dict(prefixed or entries)
        except CheckpointError as e:
            raise CheckpointError(f"backbone weights {path} do not fit the configured backbone: {e}") from e
        self.freeze()
        self.eval()
        logger.info(f"Loaded frozen backbone from {path}")


def extract_pyramid(backbone: ToyBackbone, image: Tensor, spec: BackboneSpec) -> Dict[str, Tensor]:
    """
    Four-level feature pyramid of one image

    Args:
        backbone: Feature extractor
        image: (N, 3, H, W) image in [0, 1] with H and W divisible by 8
        spec: Backbone layout

    Returns:
        Level name -> feature map
    """
    height, width = image.shape[2], image.shape[3]
    for name, extent in (("height", height), ("width", width)):
        if extent % MODEL_DIVISOR:
            raise ShapeMismatchError("extract_pyramid", name, None, extent,
                                     f"must be divisible by {MODEL_DIVISOR}")
    normalized = normalize_image(image)
    low = bilinear_resize(normalized, *spec.lnet_dims)
    streams = {"lnet": backbone(low, depth=4), "hnet": backbone(normalized, depth=3)}
    return {level: streams[stream][stage] for level, (stream, stage) in LEVEL_STAGES.items()}
