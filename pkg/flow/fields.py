from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, validator

from engine.tensor import Tensor


class FlowField(BaseModel):
    """
    Per-pixel displacement (channel 0 horizontal, channel 1 vertical) expressed in the
    pixel units of the base frame (H_base, W_base)
    """
    tensor: Tensor
    frame: Tuple[int, int]

    class Config:
        arbitrary_types_allowed = True

    @validator("tensor")
    def two_channels(cls, value):
        if value.shape[1] != 2:
            raise ValueError(f"flow needs 2 channels, got {value.shape[1]}")
        return value

    @validator("frame")
    def positive_frame(cls, value):
        if value[0] < 1 or value[1] < 1:
            raise ValueError(f"frame extents must be positive, got {value}")
        return tuple(int(v) for v in value)

    @property
    def batch(self) -> int:
        return self.tensor.shape[0]

    @property
    def height(self) -> int:
        return self.tensor.shape[2]

    @property
    def width(self) -> int:
        return self.tensor.shape[3]

    @property
    def dims(self) -> Tuple[int, int]:
        return self.height, self.width

    def level_factors(self) -> Tuple[float, float]:
        """(x, y) size of one level pixel measured in frame pixels"""
        return self.frame[1] / self.width, self.frame[0] / self.height

    def numpy(self) -> np.ndarray:
        return self.tensor.numpy()

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.tensor.data).all())

    @classmethod
    def from_numpy(cls, array: np.ndarray, frame: Optional[Tuple[int, int]] = None) -> "FlowField":
        """Wrap an (N, 2, H, W) or (2, H, W) array; the frame defaults to the array's own size"""
        if array.ndim == 3:
            array = array[None]
        return cls(tensor=Tensor(array), frame=frame or (array.shape[2], array.shape[3]))

    @classmethod
    def zeros(cls, batch: int, height: int, width: int, dtype: str = "float32") -> "FlowField":
        return cls(tensor=Tensor.zeros((batch, 2, height, width), dtype=dtype), frame=(height, width))


class CorrespondenceMap(BaseModel):
    """Absolute matched coordinates m(x) = x + w(x) in normalised [-1, 1] units"""
    tensor: Tensor

    class Config:
        arbitrary_types_allowed = True

    @validator("tensor")
    def two_channels(cls, value):
        if value.shape[1] != 2:
            raise ValueError(f"correspondence map needs 2 channels, got {value.shape[1]}")
        return value

    @property
    def dims(self) -> Tuple[int, int]:
        return self.tensor.shape[2], self.tensor.shape[3]

    def out_of_view_fraction(self) -> float:
        """Share of entries outside [-1, 1] (values are stored unclamped)"""
        return float((np.abs(self.tensor.data) > 1.0).mean())
