import numpy as np

from datagen.base_sampler import BaseSampler
from datagen.transforms import TransformSpec, control_grid


class TpsSampler(BaseSampler):
    """Regular control grid whose points are jittered independently"""

    kind = "tps"

    def draw(self, rng: np.random.Generator) -> TransformSpec:
        grid = control_grid(self.ranges.grid_size)
        moved = grid + self.symmetric(rng, 2.0 * self.ranges.jitter, size=grid.shape)
        return TransformSpec(
            kind=self.kind,
            control_points=grid.tolist(),
            source_points=moved.tolist(),
            regularization=self.ranges.regularization,
        )
