import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from engine.gradcheck import check_gradients
from engine.ops import (
    BatchNormStats,
    batch_norm,
    bilinear_resize,
    concat_channels,
    conv2d,
    conv_transpose2d,
    l2_normalize_channels,
    relu,
    split_channels,
    sum_all,
)
from engine.optim import AdamState, adam_step, milestone_learning_rate
from engine.params import ModelParams
from engine.parallel import set_worker_count
from engine.tensor import GradientTape, Tensor, backward, no_grad
from tests.helpers import GRADIENT_SEEDS, weigh
from utils.errors import MissingGradientError, NonScalarLossError, ShapeMismatchError


def naive_conv(x, w, b, stride, padding, dilation):
    batch, channels, height, width = x.shape
    out_c, _, k, _ = w.shape
    padded = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    out_h = (height + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    out_w = (width + 2 * padding - dilation * (k - 1) - 1) // stride + 1
    out = np.zeros((batch, out_c, out_h, out_w))
    for n in range(batch):
        for o in range(out_c):
            for i in range(out_h):
                for j in range(out_w):
                    total = 0.0 if b is None else b[0, o, 0, 0]
                    for c in range(channels):
                        for u in range(k):
                            for v in range(k):
                                total += w[o, c, u, v] * padded[n, c, i * stride + u * dilation, j * stride + v * dilation]
                    out[n, o, i, j] = total
    return out


def test_tensor_rejects_wrong_rank():
    with pytest.raises(ShapeMismatchError):
        Tensor(np.zeros((2, 3)))


def test_conv2d_counts_overlapping_ones():
    out = conv2d(Tensor.ones((1, 1, 3, 3)), Tensor.ones((1, 1, 3, 3)), padding=1).data[0, 0]
    assert out[1, 1] == 9
    assert out[0, 0] == 4


def test_conv2d_identity_kernel(rng):
    x = rng.standard_normal((2, 1, 4, 5)).astype(np.float32)
    out = conv2d(Tensor(x), Tensor.ones((1, 1, 1, 1)))
    np.testing.assert_array_equal(out.data, x)


@pytest.mark.parametrize("stride,padding,dilation", [(1, 1, 1), (2, 0, 1), (1, 2, 2)])
def test_conv2d_matches_direct_summation(rng, stride, padding, dilation):
    x = rng.standard_normal((2, 3, 5, 5)).astype(np.float32)
    w = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
    b = rng.standard_normal((1, 4, 1, 1)).astype(np.float32)
    out = conv2d(Tensor(x), Tensor(w), Tensor(b), stride=stride, padding=padding, dilation=dilation)
    np.testing.assert_allclose(out.data, naive_conv(x, w, b, stride, padding, dilation), atol=1e-5)


def test_conv2d_channel_mismatch_names_dimension():
    with pytest.raises(ShapeMismatchError, match="channels"):
        conv2d(Tensor.zeros((1, 2, 4, 4)), Tensor.zeros((1, 3, 3, 3)))


def test_conv_transpose_spreads_single_tap():
    out = conv_transpose2d(Tensor(np.full((1, 1, 1, 1), 2.5)), Tensor.ones((1, 1, 2, 2)), stride=2)
    np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 2.5, dtype=np.float32))


def test_conv_transpose_zero_input():
    out = conv_transpose2d(Tensor.zeros((1, 3, 4, 4)), Tensor.ones((3, 2, 4, 4)), stride=2, padding=1)
    assert out.shape == (1, 2, 8, 8)
    assert not out.data.any()


def test_conv_transpose_is_adjoint_of_conv(rng):
    x = rng.standard_normal((2, 3, 7, 7))
    w = rng.standard_normal((4, 3, 3, 3))
    y = rng.standard_normal((2, 4, 4, 4))
    forward = conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data
    adjoint = conv_transpose2d(Tensor(y), Tensor(w), stride=2, padding=1).data
    assert np.isclose((forward * y).sum(), (x * adjoint).sum(), rtol=1e-10)


def test_batch_norm_constant_channel_gives_shift():
    stats = BatchNormStats(2, dtype="float64")
    x = Tensor(np.concatenate([np.full((3, 1, 2, 2), 4.0), np.full((3, 1, 2, 2), -1.0)], axis=1))
    shift = Tensor(np.array([0.5, -0.25]).reshape(1, 2, 1, 1))
    out = batch_norm(x, Tensor.ones((1, 2, 1, 1), dtype="float64"), shift, stats, training=True)
    np.testing.assert_allclose(out.data[:, 0], 0.5)
    np.testing.assert_allclose(out.data[:, 1], -0.25)


def test_batch_norm_standardized_input_unchanged(rng):
    x = rng.standard_normal((8, 3, 4, 4))
    x = (x - x.mean(axis=(0, 2, 3), keepdims=True)) / x.std(axis=(0, 2, 3), keepdims=True)
    stats = BatchNormStats(3, dtype="float64")
    out = batch_norm(Tensor(x), Tensor.ones((1, 3, 1, 1), "float64"), Tensor.zeros((1, 3, 1, 1), "float64"),
                     stats, training=True)
    np.testing.assert_allclose(out.data, x, atol=1e-5)


def test_batch_norm_updates_running_stats_only_in_training(rng):
    stats = BatchNormStats(1, dtype="float64")
    x = Tensor(rng.standard_normal((4, 1, 3, 3)) + 2.0)
    ones, zeros = Tensor.ones((1, 1, 1, 1), "float64"), Tensor.zeros((1, 1, 1, 1), "float64")
    batch_norm(x, ones, zeros, stats, training=False)
    assert stats.running_mean[0] == 0.0
    batch_norm(x, ones, zeros, stats, training=True)
    assert stats.running_mean[0] > 0.0


@pytest.mark.parametrize("seed", GRADIENT_SEEDS)
@pytest.mark.parametrize("training", [True, False])
def test_batch_norm_gradients(seed, training):
    rng = np.random.default_rng(seed)
    stats = BatchNormStats(2, dtype="float64")
    x = Tensor(rng.standard_normal((3, 2, 3, 3)))
    scale = Tensor(rng.uniform(0.5, 1.5, (1, 2, 1, 1)))
    shift = Tensor(rng.standard_normal((1, 2, 1, 1)))
    weights = rng.standard_normal((3, 2, 3, 3))

    def loss():
        return sum_all(weigh(batch_norm(x, scale, shift, stats, training=training), weights))

    assert check_gradients(loss, [x, scale, shift]) < 1e-4


def test_relu_examples():
    out = relu(Tensor(np.array([-1.0, 0.0, 2.0]).reshape(1, 1, 1, 3)))
    np.testing.assert_array_equal(out.data.ravel(), [0.0, 0.0, 2.0])


def test_relu_gradient_mask(rng):
    x = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
    with GradientTape() as tape:
        loss = sum_all(relu(x))
    backward(loss, tape)
    np.testing.assert_array_equal(x.grad, (x.data > 0).astype(x.dtype))


def test_concat_and_split_channels(rng):
    a = Tensor(rng.standard_normal((1, 1, 2, 2)), requires_grad=True)
    b = Tensor(rng.standard_normal((1, 2, 2, 2)), requires_grad=True)
    assert concat_channels([a]).data.tolist() == a.data.tolist()
    with GradientTape() as tape:
        joined = concat_channels([a, b])
        first, second = split_channels(joined, [1, 2])
        loss = sum_all(weigh(second, np.arange(8.0).reshape(1, 2, 2, 2)))
    np.testing.assert_array_equal(joined.data[:, :1], a.data)
    np.testing.assert_array_equal(joined.data[:, 1:], b.data)
    np.testing.assert_array_equal(first.data, a.data)
    backward(loss, tape)
    np.testing.assert_array_equal(b.grad, np.arange(8.0).reshape(1, 2, 2, 2))
    assert a.grad is None or not a.grad.any()


def test_bilinear_resize_identity_and_midpoint():
    x = Tensor(np.array([[0.0, 1.0], [0.0, 1.0]]).reshape(1, 1, 2, 2))
    np.testing.assert_array_equal(bilinear_resize(x, 2, 2).data, x.data)
    out = bilinear_resize(x, 2, 3).data[0, 0]
    np.testing.assert_allclose(out[:, 1], 0.5)


def test_bilinear_resize_matches_pointwise_oracle(rng):
    x = rng.standard_normal((1, 1, 5, 7))
    out = bilinear_resize(Tensor(x), 13, 11).data[0, 0]
    for i in range(13):
        for j in range(11):
            sy, sx = i * 4 / 12, j * 6 / 10
            y0, x0 = min(int(sy), 3), min(int(sx), 5)
            fy, fx = sy - y0, sx - x0
            expected = ((1 - fy) * (1 - fx) * x[0, 0, y0, x0] + (1 - fy) * fx * x[0, 0, y0, x0 + 1]
                        + fy * (1 - fx) * x[0, 0, y0 + 1, x0] + fy * fx * x[0, 0, y0 + 1, x0 + 1])
            assert abs(out[i, j] - expected) < 1e-6


def test_l2_normalize_examples(rng):
    unit = Tensor(np.array([0.6, 0.8]).reshape(1, 2, 1, 1))
    np.testing.assert_allclose(l2_normalize_channels(unit).data, unit.data)
    assert not l2_normalize_channels(Tensor.zeros((1, 3, 2, 2))).data.any()
    norms = np.sqrt((l2_normalize_channels(Tensor(rng.standard_normal((2, 5, 4, 4)))).data ** 2).sum(axis=1))
    np.testing.assert_allclose(norms, 1.0, atol=1e-6)


def test_backward_on_sum_gives_ones(rng):
    x = Tensor(rng.standard_normal((1, 2, 3, 3)), requires_grad=True)
    with GradientTape() as tape:
        loss = sum_all(x)
    backward(loss, tape)
    np.testing.assert_array_equal(x.grad, np.ones_like(x.data))


def test_backward_through_negative_relu_is_zero():
    x = Tensor(-np.ones((1, 1, 2, 2)), requires_grad=True)
    with GradientTape() as tape:
        loss = sum_all(relu(x))
    backward(loss, tape)
    assert not x.grad.any()


def test_backward_without_trainable_inputs_is_noop(rng):
    x = Tensor(rng.standard_normal((1, 1, 2, 2)))
    with GradientTape() as tape:
        loss = sum_all(relu(x))
    backward(loss, tape)
    assert x.grad is None
    assert len(tape) == 0


def test_backward_requires_scalar_loss():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    with GradientTape() as tape:
        out = relu(x)
    with pytest.raises(NonScalarLossError):
        backward(out, tape)


def test_no_grad_records_nothing():
    x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
    with GradientTape() as tape:
        with no_grad():
            sum_all(relu(x))
    assert len(tape) == 0


@pytest.mark.parametrize("seed", GRADIENT_SEEDS)
def test_conv_bn_relu_pipeline_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((2, 2, 5, 5)))
    w = Tensor(rng.standard_normal((3, 2, 3, 3)) * 0.5)
    b = Tensor(rng.standard_normal((1, 3, 1, 1)))
    scale = Tensor(rng.uniform(0.5, 1.5, (1, 3, 1, 1)))
    shift = Tensor(rng.standard_normal((1, 3, 1, 1)))
    stats = BatchNormStats(3, dtype="float64")

    def loss():
        out = relu(batch_norm(conv2d(x, w, b, padding=1), scale, shift, stats, training=True))
        return sum_all(out)

    assert check_gradients(loss, [x, w, b, scale, shift]) < 1e-4


@pytest.mark.parametrize("seed", GRADIENT_SEEDS)
def test_conv_transpose_and_resize_gradients(seed):
    rng = np.random.default_rng(seed)
    y = Tensor(rng.standard_normal((1, 2, 3, 3)))
    w = Tensor(rng.standard_normal((2, 2, 4, 4)))
    weights = rng.standard_normal((1, 2, 5, 5))

    def loss():
        up = conv_transpose2d(y, w, stride=2, padding=1)
        return sum_all(weigh(bilinear_resize(up, 5, 5), weights))

    assert check_gradients(loss, [y, w]) < 1e-4


@pytest.mark.parametrize("seed", GRADIENT_SEEDS)
def test_l2_normalize_gradient(seed):
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal((1, 4, 3, 3)))
    weights = rng.standard_normal((1, 4, 3, 3))
    assert check_gradients(lambda: sum_all(weigh(l2_normalize_channels(x), weights)), [x]) < 1e-4


def _params(**arrays):
    return ModelParams.from_named((name, Tensor(np.asarray(value, dtype=np.float64).reshape(1, 1, 1, -1),
                                                requires_grad=True)) for name, value in arrays.items())


def test_adam_zero_gradient_applies_only_decay():
    params = _params(theta=[1.0, -2.0])
    state = AdamState(learning_rate=0.1, weight_decay=0.0)
    adam_step(params, {"theta": np.zeros((1, 1, 1, 2))}, state)
    np.testing.assert_array_equal(params["theta"].data.ravel(), [1.0, -2.0])


def test_adam_step_decreases_quadratic():
    params = _params(theta=[1.0])
    state = AdamState(learning_rate=0.1, weight_decay=0.0)
    adam_step(params, {"theta": 2.0 * params["theta"].data}, state)
    assert params["theta"].data.item() < 1.0
    assert state.step == 1


def test_adam_converges_on_quadratic():
    params = _params(theta=[3.0, -2.0])
    target = np.array([0.5, 1.5]).reshape(1, 1, 1, 2)
    state = AdamState(learning_rate=0.1, weight_decay=0.0)
    theta, m, v = np.array([3.0, -2.0]), np.zeros(2), np.zeros(2)
    for t in range(1, 201):
        adam_step(params, {"theta": 2.0 * (params["theta"].data - target)}, state)
        grad = 2.0 * (theta - target.ravel())
        m = state.beta1 * m + (1 - state.beta1) * grad
        v = state.beta2 * v + (1 - state.beta2) * grad ** 2
        theta = theta - 0.1 * (m / (1 - state.beta1 ** t)) / (np.sqrt(v / (1 - state.beta2 ** t)) + state.eps)
    np.testing.assert_allclose(params["theta"].data.ravel(), theta, atol=1e-12)
    assert np.linalg.norm(params["theta"].data - target) < 1e-2


def test_adam_missing_gradient():
    with pytest.raises(MissingGradientError):
        adam_step(_params(theta=[1.0]), None, AdamState())


def test_milestone_learning_rate():
    assert milestone_learning_rate(1e-4, 0, [10, 20], 0.5) == 1e-4
    assert milestone_learning_rate(1e-4, 10, [10, 20], 0.5) == 5e-5
    assert milestone_learning_rate(1e-4, 25, [10, 20], 0.5) == 2.5e-5


@given(st.integers(min_value=1, max_value=4))
def test_worker_count_does_not_change_results(workers):
    data = np.random.default_rng(7).standard_normal((4, 3, 6, 6))
    kernel = np.random.default_rng(8).standard_normal((2, 3, 3, 3))
    set_worker_count(1)
    reference = conv2d(Tensor(data), Tensor(kernel), padding=1).data
    set_worker_count(workers)
    try:
        np.testing.assert_array_equal(conv2d(Tensor(data), Tensor(kernel), padding=1).data, reference)
    finally:
        set_worker_count(1)
