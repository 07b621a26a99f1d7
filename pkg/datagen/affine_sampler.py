import numpy as np

from datagen.base_sampler import BaseSampler
from datagen.transforms import TransformSpec


class AffineSampler(BaseSampler):
    """Rotation, uniform scale, shear and translation"""

    kind = "affine"

    def draw(self, rng: np.random.Generator) -> TransformSpec:
        angle = np.deg2rad(self.symmetric(rng, self.ranges.rotation_deg))
        scale = rng.uniform(*self.ranges.scale)
        shear = self.symmetric(rng, self.ranges.shear)
        # translation range is a fraction of the crop, which spans 2 normalised units
        tx, ty = self.symmetric(rng, 2.0 * self.ranges.translation, size=2)

        rotation = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
        linear = rotation @ np.array([[scale, shear], [0.0, scale]])
        matrix = np.eye(3)
        matrix[:2, :2] = linear
        matrix[:2, 2] = (tx, ty)
        return TransformSpec(kind=self.kind, matrix=matrix.tolist())
