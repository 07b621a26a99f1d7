"""
Rendering of synthetic training pairs: I_t(x) = I_s(x + w(x)).
"""
import numpy as np
from pydantic import BaseModel

from datagen.transforms import TransformSpec, transform_to_flow
from engine.tensor import Tensor, no_grad
from flow.fields import FlowField
from flow.warp import warp
from utils.errors import ImageTooSmallError


class SamplePair(BaseModel):
    """Source and target crops with the dense ground truth relating them"""
    source: np.ndarray
    target: np.ndarray
    gt_flow: FlowField
    valid_mask: np.ndarray
    spec: TransformSpec

    class Config:
        arbitrary_types_allowed = True

    @property
    def dims(self):
        return self.source.shape[1], self.source.shape[2]


def center_crop(image: np.ndarray, crop: int) -> np.ndarray:
    """Central crop x crop window of a (C, H, W) image"""
    _, height, width = image.shape
    if height < crop or width < crop:
        raise ImageTooSmallError(f"image {height}x{width} is smaller than the {crop}x{crop} crop")
    top = (height - crop) // 2
    left = (width - crop) // 2
    return image[:, top:top + crop, left:left + crop]


def render_pair(image: np.ndarray, spec: TransformSpec, crop: int) -> SamplePair:
    """
    Render one synthetic pair

    Args:
        image: (3, H, W) float image in [0, 1]
        spec: Transform from target to source coordinates
        crop: Side of the square crop

    Returns:
        SamplePair whose target pixels outside the source are zero and mask-invalid
    """
    source = np.ascontiguousarray(center_crop(np.asarray(image, dtype=np.float32), crop))
    gt_flow, valid = transform_to_flow(spec, crop, crop)
    with no_grad():
        warped = warp(Tensor(source[None]), gt_flow).data[0]
    target = np.where(valid[None], warped, 0.0).astype(np.float32)
    return SamplePair(source=source, target=target, gt_flow=gt_flow, valid_mask=valid, spec=spec)
