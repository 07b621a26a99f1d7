"""
Geometric transforms in normalised [-1, 1] (align-corners) coordinates of the crop.

A transform maps a target-image coordinate x to the matching source coordinate T(x),
so the ground-truth flow is w(x) = T(x) - x.
"""
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, validator

from config import presets
from flow.conversions import identity_grid
from flow.fields import FlowField
from utils.errors import DegenerateTransformError

DET_EPS = 1e-8
# Points may land on the last row/column up to rounding
BOUNDS_TOLERANCE = 1e-6


def tps_kernel(r2: np.ndarray) -> np.ndarray:
    """U = r^2 log r written on squared distances, with U(0) = 0"""
    return np.where(r2 > 0, 0.5 * r2 * np.log(np.maximum(r2, 1e-300)), 0.0)


class TransformSpec(BaseModel):
    """
    One sampled transform. Affine and homography store a 3x3 matrix (affine bottom row
    0, 0, 1; homography bottom-right 1); tps stores K control points on the target
    grid and their source positions, the spline itself is solved on demand.
    """
    kind: str
    matrix: Optional[List[List[float]]] = None
    control_points: Optional[List[List[float]]] = None
    source_points: Optional[List[List[float]]] = None
    regularization: float = presets.TRANSFORM_RANGES["tps"]["regularization"]

    @validator("kind")
    def known_kind(cls, value):
        if value not in presets.TRANSFORM_KINDS:
            raise ValueError(f"unknown transform kind '{value}'")
        return value

    @classmethod
    def identity(cls, kind: str = "affine") -> "TransformSpec":
        if kind == "tps":
            grid = control_grid(presets.TRANSFORM_RANGES["tps"]["grid_size"])
            return cls(kind=kind, control_points=grid.tolist(), source_points=grid.tolist())
        return cls(kind=kind, matrix=np.eye(3).tolist())

    @classmethod
    def translation(cls, dx: float, dy: float, height: int, width: int) -> "TransformSpec":
        """Affine shift by (dx, dy) pixels of an H x W crop"""
        matrix = np.eye(3)
        matrix[0, 2] = 2.0 * dx / (width - 1)
        matrix[1, 2] = 2.0 * dy / (height - 1)
        return cls(kind="affine", matrix=matrix.tolist())

    def as_matrix(self) -> np.ndarray:
        return np.asarray(self.matrix, dtype=np.float64)

    def tps_coefficients(self) -> np.ndarray:
        """(K + 3, 2) kernel weights followed by the affine part, one column per axis"""
        points = np.asarray(self.control_points, dtype=np.float64)
        targets = np.asarray(self.source_points, dtype=np.float64)
        count = len(points)
        diff = points[:, None, :] - points[None, :, :]
        kernel = tps_kernel((diff ** 2).sum(axis=-1)) + self.regularization * np.eye(count)
        affine = np.hstack([np.ones((count, 1)), points])
        system = np.zeros((count + 3, count + 3))
        system[:count, :count] = kernel
        system[:count, count:] = affine
        system[count:, :count] = affine.T
        rhs = np.zeros((count + 3, 2))
        rhs[:count] = targets
        try:
            return np.linalg.solve(system, rhs)
        except np.linalg.LinAlgError as e:
            raise DegenerateTransformError(f"thin-plate system is singular: {e}") from e

    def is_valid(self) -> bool:
        """Invertible matrix, or a solvable thin-plate system"""
        if self.kind == "tps":
            try:
                return bool(np.isfinite(self.tps_coefficients()).all())
            except DegenerateTransformError:
                return False
        matrix = self.as_matrix()
        return bool(np.isfinite(matrix).all()) and abs(np.linalg.det(matrix)) > DET_EPS

    def apply(self, xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Map normalised target coordinates to normalised source coordinates"""
        if self.kind == "tps":
            coefficients = self.tps_coefficients()
            points = np.asarray(self.control_points, dtype=np.float64)
            count = len(points)
            r2 = (xs[..., None] - points[:, 0]) ** 2 + (ys[..., None] - points[:, 1]) ** 2
            radial = tps_kernel(r2)
            mapped = []
            for axis in range(2):
                weights, (a0, ax, ay) = coefficients[:count, axis], coefficients[count:, axis]
                mapped.append(a0 + ax * xs + ay * ys + radial @ weights)
            return mapped[0], mapped[1]
        matrix = self.as_matrix()
        u = matrix[0, 0] * xs + matrix[0, 1] * ys + matrix[0, 2]
        v = matrix[1, 0] * xs + matrix[1, 1] * ys + matrix[1, 2]
        if self.kind == "affine":
            return u, v
        w = matrix[2, 0] * xs + matrix[2, 1] * ys + matrix[2, 2]
        return u / w, v / w


def control_grid(size: int) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, size)
    gx, gy = np.meshgrid(axis, axis)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def to_normalized(values: np.ndarray, size: int) -> np.ndarray:
    return 2.0 * values / (size - 1) - 1.0 if size > 1 else np.zeros_like(values)


def to_pixels(values: np.ndarray, size: int) -> np.ndarray:
    return (values + 1.0) * (size - 1) / 2.0


def transform_points(spec: TransformSpec, points: np.ndarray, height: int, width: int) -> np.ndarray:
    """Map (K, 2) target pixel points to source pixel points"""
    u, v = spec.apply(to_normalized(points[:, 0], width), to_normalized(points[:, 1], height))
    return np.stack([to_pixels(u, width), to_pixels(v, height)], axis=1)


def transform_to_flow(spec: TransformSpec, height: int, width: int) -> Tuple[FlowField, np.ndarray]:
    """
    Dense ground truth of a transform on an H x W grid

    Returns:
        (1, 2, H, W) float32 FlowField in H x W pixels and the (H, W) boolean mask of
        pixels whose match lies inside the source image
    """
    xs, ys = identity_grid(height, width)
    u, v = spec.apply(to_normalized(xs, width), to_normalized(ys, height))
    source_x, source_y = to_pixels(u, width), to_pixels(v, height)
    flow = np.stack([source_x - xs, source_y - ys])[None]
    if not np.isfinite(flow).all():
        raise DegenerateTransformError(f"{spec.kind} transform produced non-finite flow")
    valid = ((source_x >= -BOUNDS_TOLERANCE) & (source_x <= width - 1 + BOUNDS_TOLERANCE)
             & (source_y >= -BOUNDS_TOLERANCE) & (source_y <= height - 1 + BOUNDS_TOLERANCE))
    return FlowField.from_numpy(flow.astype(np.float32)), valid
