from typing import Optional

import numpy as np

from config.models import TransformConfig
from datagen.affine_sampler import AffineSampler
from datagen.base_sampler import BaseSampler
from datagen.homography_sampler import HomographySampler
from datagen.tps_sampler import TpsSampler
from datagen.transforms import TransformSpec, transform_points, transform_to_flow
from utils.errors import DataError, DegenerateTransformError
from utils.logger import setup_logger

logger = setup_logger(__name__)


def get_sampler(kind: str, config: TransformConfig) -> BaseSampler:
    """
    Factory function to get the sampler of a transform kind

    Args:
        kind: "affine", "homography" or "tps"
        config: Transform ranges

    Returns:
        An instance of the matching sampler
    """
    if kind == "affine":
        return AffineSampler(config.affine)
    elif kind == "homography":
        return HomographySampler(config.homography)
    elif kind == "tps":
        return TpsSampler(config.tps)
    else:
        raise DataError(f"unknown transform kind '{kind}'")


def sample_transform(seed: int, config: TransformConfig, kind: Optional[str] = None) -> TransformSpec:
    """
    Draw a valid random transform

    Args:
        seed: Seed of the draw; the same seed always gives the same transform
        config: Transform ranges and retry budget
        kind: Force a kind; by default it is drawn from config.kinds

    Returns:
        Invertible TransformSpec
    """
    rng = np.random.default_rng(seed)
    # the kind draw is always consumed so forcing a kind reproduces the same parameters
    drawn = config.kinds[int(rng.integers(len(config.kinds)))]
    sampler = get_sampler(kind or drawn, config)
    for attempt in range(config.max_retries):
        try:
            spec = sampler.draw(rng)
        except DegenerateTransformError as e:
            logger.warning(f"Seed {seed}: degenerate {sampler.kind} draw {attempt + 1}: {e}")
            continue
        if spec.is_valid():
            return spec
        logger.warning(f"Seed {seed}: degenerate {sampler.kind} draw {attempt + 1}, resampling")
    raise DegenerateTransformError(f"seed {seed}: no valid {sampler.kind} transform in {config.max_retries} draws")
