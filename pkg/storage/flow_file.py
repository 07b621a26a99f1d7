"""
Middlebury .flo files: float32 magic 202021.25, int32 width, int32 height, then
height * width interleaved (u, v) float32 pairs, all little-endian.
"""
from pathlib import Path
from typing import Union

import numpy as np

from config.config import FLOW_FILE_MAGIC
from utils.errors import FlowFileError
from utils.logger import setup_logger

logger = setup_logger(__name__)

PathLike = Union[str, Path]


def read_flo(path: PathLike) -> np.ndarray:
    """
    Read a .flo file

    Args:
        path: File to read

    Returns:
        (2, H, W) float32 flow, channel 0 horizontal
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FlowFileError(f"cannot read flow file {path}: {e}") from e
    if len(raw) < 12:
        raise FlowFileError(f"flow file {path} is truncated ({len(raw)} bytes)")

    magic = np.frombuffer(raw, dtype="<f4", count=1)[0]
    if magic != np.float32(FLOW_FILE_MAGIC):
        raise FlowFileError(f"flow file {path} has bad magic {magic}")
    width, height = (int(v) for v in np.frombuffer(raw, dtype="<i4", count=2, offset=4))
    if width < 1 or height < 1:
        raise FlowFileError(f"flow file {path} declares invalid size {width}x{height}")

    expected = 12 + 8 * width * height
    if len(raw) != expected:
        raise FlowFileError(f"flow file {path} has {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=2 * width * height, offset=12)
    return data.reshape(height, width, 2).transpose(2, 0, 1).astype(np.float32)


def write_flo(path: PathLike, flow: np.ndarray) -> None:
    """Write a (2, H, W) flow as a .flo file"""
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise FlowFileError(f"expected a (2, H, W) flow, got shape {flow.shape}")
    path = Path(path)
    _, height, width = flow.shape
    header = np.array([FLOW_FILE_MAGIC], dtype="<f4").tobytes() + np.array([width, height], dtype="<i4").tobytes()
    body = np.ascontiguousarray(flow.transpose(1, 2, 0), dtype="<f4").tobytes()
    path.write_bytes(header + body)
    logger.debug(f"Wrote flow {width}x{height} to {path}")
