import numpy as np

from engine.tensor import Context, Function, Tensor

# random instances per gradient check
GRADIENT_SEEDS = range(20)


class Weigh(Function):
    """Elementwise multiply by a constant array, so a sum becomes a weighted sum"""

    @staticmethod
    def forward(ctx: Context, x, *, weights):
        ctx.save_for_backward(weights)
        return x * weights

    @staticmethod
    def backward(ctx: Context, grad):
        return (grad * ctx.saved[0],)


def weigh(tensor: Tensor, weights: np.ndarray) -> Tensor:
    return Weigh.apply(tensor, weights=weights)


def ramp_image(height: int, width: int) -> np.ndarray:
    """(3, H, W) image whose channels are distinct linear ramps"""
    ys, xs = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([xs / max(width - 1, 1), ys / max(height - 1, 1), (xs + ys) / max(height + width - 2, 1)])


def smooth_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth random RGB image (3, size, size) in [0, 1]"""
    ys, xs = np.mgrid[0:size, 0:size] / (size - 1.0)
    phases = rng.uniform(0, 2 * np.pi, size=(3, 3))
    image = np.stack([
        0.5 + 0.25 * np.sin(2 * np.pi * (2 * xs + phases[c, 0])) * np.cos(2 * np.pi * (3 * ys + phases[c, 1]))
        + 0.2 * np.sin(2 * np.pi * (xs + ys) * 4 + phases[c, 2])
        for c in range(3)
    ])
    return np.clip(image, 0.0, 1.0).astype(np.float32)
