from abc import ABC, abstractmethod

import numpy as np

from datagen.transforms import TransformSpec
from utils.logger import setup_logger

logger = setup_logger(__name__)


class BaseSampler(ABC):
    """Base class for all random transform samplers"""

    kind: str = ""

    def __init__(self, ranges):
        """
        Initialize the sampler

        Args:
            ranges: Validated range model of this transform kind
        """
        self.ranges = ranges

    @abstractmethod
    def draw(self, rng: np.random.Generator) -> TransformSpec:
        """
        Draw one transform

        Args:
            rng: Seeded generator; the draw consumes a fixed number of values

        Returns:
            TransformSpec, possibly degenerate
        """
        pass

    @staticmethod
    def symmetric(rng: np.random.Generator, half_width: float, size=None):
        """Uniform sample in [-half_width, half_width]"""
        return rng.uniform(-half_width, half_width, size=size)
