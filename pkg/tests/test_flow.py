import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from engine.gradcheck import check_gradients
from engine.ops import bilinear_resize, sum_all
from engine.tensor import Tensor
from flow.conversions import (
    downsample_gt,
    flow_to_map,
    identity_grid,
    map_to_flow,
    rescale_flow_frame,
    upsample_flow,
)
from flow.fields import CorrespondenceMap, FlowField
from flow.warp import sample_bilinear_points, warp
from tests.helpers import GRADIENT_SEEDS, weigh
from utils.errors import DataError, ShapeMismatchError


def bilinear_oracle(field, x, y):
    """Align-corners bilinear sample of (C, H, W) at one point with zero outside"""
    channels, height, width = field.shape
    x0, y0 = int(np.floor(x)), int(np.floor(y))
    fx, fy = x - x0, y - y0
    value = np.zeros(channels)
    for dy, dx, weight in ((0, 0, (1 - fx) * (1 - fy)), (0, 1, fx * (1 - fy)), (1, 0, (1 - fx) * fy), (1, 1, fx * fy)):
        yc, xc = y0 + dy, x0 + dx
        if 0 <= yc < height and 0 <= xc < width:
            value += weight * field[:, yc, xc]
    return value


def test_zero_flow_warp_is_identity(rng):
    feature = Tensor(rng.standard_normal((2, 3, 5, 6)).astype(np.float32))
    out = warp(feature, FlowField.zeros(2, 5, 6))
    np.testing.assert_array_equal(out.data, feature.data)


def test_unit_flow_shifts_ramp_by_one_column():
    ramp = np.tile(np.arange(8.0), (6, 1))[None, None]
    flow = np.zeros((1, 2, 6, 8))
    flow[:, 0] = 1.0
    out = warp(Tensor(ramp), FlowField.from_numpy(flow)).data[0, 0]
    np.testing.assert_allclose(out[:, :-1], ramp[0, 0, :, 1:])
    assert not out[:, -1].any()


def test_warp_matches_pointwise_oracle(rng):
    feature = rng.standard_normal((1, 2, 6, 7))
    flow = rng.uniform(-1.5, 1.5, (1, 2, 6, 7))
    out = warp(Tensor(feature), FlowField.from_numpy(flow)).data[0]
    for y in range(6):
        for x in range(7):
            expected = bilinear_oracle(feature[0], x + flow[0, 0, y, x], y + flow[0, 1, y, x])
            np.testing.assert_allclose(out[:, y, x], expected, atol=1e-6)


def test_warp_reads_flow_in_level_units():
    ramp = np.tile(np.arange(8.0), (4, 1))[None, None]
    flow = np.zeros((1, 2, 4, 8))
    flow[:, 0] = 2.0  # two frame pixels in a frame twice as wide: one level pixel
    out = warp(Tensor(ramp), FlowField.from_numpy(flow, frame=(8, 16))).data[0, 0]
    np.testing.assert_allclose(out[:, :-1], ramp[0, 0, :, 1:])


def test_warp_rejects_mismatched_grid():
    with pytest.raises(ShapeMismatchError, match="width"):
        warp(Tensor.zeros((1, 1, 4, 4)), FlowField.zeros(1, 4, 5))


@pytest.mark.parametrize("seed", GRADIENT_SEEDS)
def test_warp_gradients(seed):
    rng = np.random.default_rng(seed)
    feature = Tensor(rng.standard_normal((2, 2, 4, 5)))
    # keep sample points away from integer coordinates where bilinear weights kink
    flow = FlowField.from_numpy(rng.uniform(0.1, 0.4, (2, 2, 4, 5)) * rng.choice([-1, 1], (2, 2, 4, 5)) + 0.5)
    weights = rng.standard_normal((2, 2, 4, 5))
    assert check_gradients(lambda: sum_all(weigh(warp(feature, flow), weights)), [feature, flow.tensor]) < 1e-4


def test_sample_bilinear_points(rng):
    field = rng.standard_normal((2, 5, 5))
    points = np.array([[1.25, 2.5], [0.0, 0.0], [4.0, 3.75]])
    samples = sample_bilinear_points(field, points)
    assert samples.shape == (3, 2)
    for point, sample in zip(points, samples):
        np.testing.assert_allclose(sample, bilinear_oracle(field, *point), atol=1e-12)


def test_identity_map_gives_zero_flow():
    height, width = 5, 7
    xs, ys = identity_grid(height, width)
    mapping = np.stack([2 * xs / (width - 1) - 1, 2 * ys / (height - 1) - 1])[None]
    flow = map_to_flow(CorrespondenceMap(tensor=Tensor(mapping)))
    np.testing.assert_allclose(flow.numpy(), 0.0, atol=1e-12)
    assert flow.frame == (height, width)


def test_corner_map_points_to_top_left():
    mapping = -np.ones((1, 2, 4, 6))
    flow = map_to_flow(CorrespondenceMap(tensor=Tensor(mapping))).numpy()[0]
    xs, ys = identity_grid(4, 6)
    np.testing.assert_allclose(flow[0], -xs)
    np.testing.assert_allclose(flow[1], -ys)


def test_flow_to_map_examples():
    zero = flow_to_map(FlowField.zeros(1, 3, 5, dtype="float64")).tensor.data[0]
    np.testing.assert_allclose(zero[0, 0], np.linspace(-1, 1, 5))
    np.testing.assert_allclose(zero[1, :, 0], np.linspace(-1, 1, 3))
    xs, ys = identity_grid(3, 5)
    corner = flow_to_map(FlowField.from_numpy(np.stack([-xs, -ys])[None])).tensor.data
    np.testing.assert_allclose(corner, -1.0, atol=1e-12)


@given(
    height=st.integers(min_value=2, max_value=9),
    width=st.integers(min_value=2, max_value=9),
    seed=st.integers(min_value=0, max_value=2 ** 16),
)
def test_map_flow_round_trip(height, width, seed):
    values = np.random.default_rng(seed).uniform(-3, 3, (1, 2, height, width))
    flow = FlowField.from_numpy(values)
    np.testing.assert_allclose(map_to_flow(flow_to_map(flow)).numpy(), values, atol=1e-9)


@given(
    seed=st.integers(min_value=0, max_value=2 ** 16),
    a=st.floats(min_value=-3, max_value=3),
    b=st.floats(min_value=-3, max_value=3),
)
def test_warp_is_linear_in_feature(seed, a, b):
    rng = np.random.default_rng(seed)
    first = rng.standard_normal((2, 3, 5, 6))
    second = rng.standard_normal((2, 3, 5, 6))
    flow = FlowField.from_numpy(rng.uniform(-2, 2, (2, 2, 5, 6)))
    combined = warp(Tensor(a * first + b * second), flow).data
    separate = a * warp(Tensor(first), flow).data + b * warp(Tensor(second), flow).data
    np.testing.assert_allclose(combined, separate, atol=1e-6)


def test_rescale_flow_frame():
    flow = FlowField.from_numpy(np.ones((1, 2, 4, 4)), frame=(16, 16))
    doubled = rescale_flow_frame(flow, (32, 64))
    np.testing.assert_allclose(doubled.numpy()[0, 0], 4.0)
    np.testing.assert_allclose(doubled.numpy()[0, 1], 2.0)
    assert doubled.level_factors() == (16.0, 8.0)


def test_upsample_flow_examples(rng):
    flow = FlowField.from_numpy(rng.standard_normal((1, 2, 4, 5)))
    same = upsample_flow(flow, (4, 5))
    np.testing.assert_array_equal(same.numpy(), flow.numpy())

    constant = FlowField.from_numpy(np.stack([np.full((3, 3), 2.0), np.full((3, 3), 3.0)])[None])
    scaled = upsample_flow(constant, (6, 6), value_scale=(2.0, 2.0))
    np.testing.assert_allclose(scaled.numpy()[0, 0], 4.0)
    np.testing.assert_allclose(scaled.numpy()[0, 1], 6.0)
    assert scaled.frame == (6, 6)

    composed = upsample_flow(flow, (7, 9), value_scale=(1.5, 0.5)).numpy()
    reference = bilinear_resize(flow.tensor, 7, 9).data * np.array([1.5, 0.5]).reshape(1, 2, 1, 1)
    np.testing.assert_array_equal(composed, reference)


def test_downsample_gt_examples(rng):
    constant = FlowField.from_numpy(np.full((1, 2, 8, 8), 3.0))
    kept = downsample_gt(constant, (4, 4), rescale_values=False)
    np.testing.assert_allclose(kept.numpy(), 3.0)
    assert kept.frame == (8, 8)

    big = FlowField.from_numpy(np.full((1, 2, 512, 512), 8.0, dtype=np.float32))
    halved = downsample_gt(big, (256, 256), rescale_values=True)
    np.testing.assert_allclose(halved.numpy(), 4.0, rtol=1e-6)
    assert halved.frame == (256, 256)

    field = FlowField.from_numpy(rng.standard_normal((1, 2, 9, 9)))
    out = downsample_gt(field, (5, 3), rescale_values=True).numpy()
    reference = bilinear_resize(field.tensor, 5, 3).data * np.array([3 / 9, 5 / 9]).reshape(1, 2, 1, 1)
    np.testing.assert_allclose(out, reference, atol=1e-12)


def test_downsample_gt_rejects_larger_target():
    with pytest.raises(DataError):
        downsample_gt(FlowField.zeros(1, 4, 4), (8, 8), rescale_values=True)


def test_downsample_then_upsample_round_trip():
    """A flow and its downsampled copy describe the same physical displacement"""
    flow = FlowField.from_numpy(np.full((1, 2, 16, 16), 4.0))
    coarse = downsample_gt(flow, (8, 8), rescale_values=True)
    # 4 pixels at 16 px are 2 pixels at 8 px
    np.testing.assert_allclose(coarse.numpy(), 2.0)
    back = upsample_flow(coarse, (16, 16), value_scale=(2.0, 2.0))
    np.testing.assert_allclose(back.numpy(), flow.numpy())


def test_flow_field_validates_channels():
    with pytest.raises(ValueError):
        FlowField(tensor=Tensor.zeros((1, 3, 2, 2)), frame=(2, 2))
