import numpy as np

from datagen.base_sampler import BaseSampler
from datagen.transforms import TransformSpec
from utils.errors import DegenerateTransformError

CORNERS = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])


def homography_from_points(points: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """
    Direct linear transform through four point pairs, with H[2, 2] = 1

    Args:
        points: (4, 2) coordinates mapped from
        targets: (4, 2) coordinates mapped to

    Returns:
        3x3 matrix
    """
    rows, rhs = [], []
    for (x, y), (u, v) in zip(points, targets):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y])
        rhs.extend([u, v])
    try:
        h = np.linalg.solve(np.asarray(rows, dtype=np.float64), np.asarray(rhs, dtype=np.float64))
    except np.linalg.LinAlgError as e:
        raise DegenerateTransformError(f"corner configuration is degenerate: {e}") from e
    return np.append(h, 1.0).reshape(3, 3)


class HomographySampler(BaseSampler):
    """Independent perturbation of the four crop corners"""

    kind = "homography"

    def draw(self, rng: np.random.Generator) -> TransformSpec:
        # perturbation is a fraction of the crop, which spans 2 normalised units
        offsets = self.symmetric(rng, 2.0 * self.ranges.corner_perturbation, size=(4, 2))
        matrix = homography_from_points(CORNERS, CORNERS + offsets)
        return TransformSpec(kind=self.kind, matrix=matrix.tolist())
