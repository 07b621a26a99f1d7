"""
Image and mask I/O through Pillow, plus the pad/crop helpers used at inference.

Images are float arrays (3, H, W) in [0, 1]; masks are boolean (H, W).
"""
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from utils.errors import DataError

PathLike = Union[str, Path]


def read_image(path: PathLike) -> np.ndarray:
    """Load any Pillow-readable image as (3, H, W) float32 in [0, 1]"""
    try:
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float32)
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"cannot read image {path}: {e}") from e
    return rgb.transpose(2, 0, 1) / 255.0


def write_image(path: PathLike, image: np.ndarray) -> None:
    """Save a (3, H, W) [0, 1] image; the format follows the suffix (.ppm gives binary P6)"""
    pixels = np.clip(np.round(image.transpose(1, 2, 0) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(pixels, mode="RGB").save(path)


def read_mask(path: PathLike) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L")) > 127
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"cannot read mask {path}: {e}") from e


def write_mask(path: PathLike, mask: np.ndarray) -> None:
    """Save a boolean mask as 8-bit grey (binary P5 for .pgm): 255 valid, 0 invalid"""
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def pad_to_multiple(image: np.ndarray, divisor: int) -> Tuple[np.ndarray, Tuple[int, int]]:
    """
    Zero-pad a (C, H, W) array on the bottom and right to multiples of divisor

    Returns:
        Padded array and the original (H, W)
    """
    _, height, width = image.shape
    pad_h = (-height) % divisor
    pad_w = (-width) % divisor
    if pad_h == 0 and pad_w == 0:
        return image, (height, width)
    return np.pad(image, ((0, 0), (0, pad_h), (0, pad_w))), (height, width)


def crop_to(array: np.ndarray, dims: Tuple[int, int]) -> np.ndarray:
    """Top-left crop of the trailing two axes"""
    return array[..., :dims[0], :dims[1]]


def resize_image(image: np.ndarray, dims: Tuple[int, int]) -> np.ndarray:
    """Bilinear Pillow resize of a (3, H, W) [0, 1] image to (H', W')"""
    channels = [
        np.asarray(Image.fromarray(plane.astype(np.float32), mode="F").resize((dims[1], dims[0]), Image.BILINEAR))
        for plane in image
    ]
    return np.stack(channels).astype(np.float32)
