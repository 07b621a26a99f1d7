import numpy as np
import pytest

from config.models import ModelConfig
from engine.gradcheck import check_gradients
from engine.ops import sum_all
from engine.tensor import GradientTape, Tensor, backward, no_grad
from flow.fields import FlowField
from model.backbone import BackboneSpec, ToyBackbone, extract_pyramid
from model.decoders import FlowDecoder, MappingDecoder, RefinementNetwork
from model.glunet import GLUNetModel, count_params, iterative_refinement_schedule, load_checkpoint, save_checkpoint
from storage.checkpoint import read_checkpoint, write_checkpoint
from tests.helpers import weigh
from utils.errors import CheckpointError, ShapeMismatchError


def zero_parameters(module):
    for _, tensor in module.named_parameters():
        tensor.data = np.zeros_like(tensor.data)


def images(rng, batch, height, width, dtype="float64"):
    return Tensor(rng.uniform(0, 1, (batch, 3, height, width)).astype(dtype))


def test_level_dims_follow_both_streams():
    spec = BackboneSpec(variant="toy", channels=[16, 32, 64, 64], lnet_dims=(256, 256))
    assert spec.level_dims(256, 256)["L1"] == (16, 16)
    assert spec.level_dims(256, 256)["L2"] == (32, 32)
    dims = spec.level_dims(512, 512)
    assert dims["L3"] == (64, 64)
    assert dims["L4"] == (128, 128)


def test_extract_pyramid_shapes_and_determinism(tiny_config, rng):
    spec = BackboneSpec.from_config(tiny_config)
    backbone = ToyBackbone(tiny_config.backbone_channels, np.random.default_rng(0), "float64").eval()
    image = images(rng, 1, 64, 48)
    first = extract_pyramid(backbone, image, spec)
    second = extract_pyramid(backbone, image, spec)
    assert {name: t.shape[2:] for name, t in first.items()} == {
        "L1": (2, 2), "L2": (4, 4), "L3": (8, 6), "L4": (16, 12)}
    for name in first:
        np.testing.assert_array_equal(first[name].data, second[name].data)


def test_extract_pyramid_requires_multiple_of_eight(tiny_config, rng):
    spec = BackboneSpec.from_config(tiny_config)
    backbone = ToyBackbone(tiny_config.backbone_channels, np.random.default_rng(0), "float64")
    with pytest.raises(ShapeMismatchError, match="divisible by 8"):
        extract_pyramid(backbone, images(rng, 1, 30, 32), spec)


def test_mapping_decoder_shape_zero_and_gradient(rng):
    decoder = MappingDecoder(256, [8, 8, 8, 8, 4], np.random.default_rng(0), "float64")
    volume = Tensor(rng.uniform(0, 1, (2, 256, 16, 16)), requires_grad=True)
    assert decoder(volume).tensor.shape == (2, 2, 16, 16)

    with GradientTape() as tape:
        loss = sum_all(weigh(decoder(volume).tensor, rng.standard_normal((2, 2, 16, 16))))
    backward(loss, tape)
    assert np.abs(volume.grad).sum() > 0

    zero_parameters(decoder)
    assert not decoder(volume).tensor.data.any()


def test_mapping_decoder_rejects_wrong_channel_count():
    decoder = MappingDecoder(16, [4, 4, 4, 4, 4], np.random.default_rng(0), "float64")
    with pytest.raises(ShapeMismatchError):
        decoder(Tensor.zeros((1, 9, 3, 3), dtype="float64"))


def test_flow_decoder_zero_predictor_keeps_upsampled_flow(rng):
    decoder = FlowDecoder(9 + 2, [4, 4, 4, 4, 4], np.random.default_rng(0), "float64")
    decoder.predict.weight.data[...] = 0.0
    up = FlowField.from_numpy(rng.standard_normal((1, 2, 5, 6)), frame=(20, 24))
    residual, f = decoder(Tensor(rng.standard_normal((1, 9, 5, 6))), up)
    assert residual.dims == (5, 6)
    assert residual.frame == (20, 24)
    assert not residual.tensor.data.any()
    assert f.shape == (1, 4, 5, 6)


def test_flow_decoder_gradients(rng):
    decoder = FlowDecoder(9 + 2, [2, 2, 2, 2, 2], np.random.default_rng(3), "float64")
    cost = Tensor(rng.standard_normal((2, 9, 3, 3)))
    up = FlowField.from_numpy(rng.standard_normal((2, 2, 3, 3)))
    weights = rng.standard_normal((2, 2, 3, 3))

    def loss():
        residual, _ = decoder(cost, up)
        return sum_all(weigh(residual.tensor, weights))

    assert check_gradients(loss, [cost, up.tensor, decoder.predict.weight, decoder.blocks[0].conv.weight]) < 1e-4


def test_refinement_zero_parameters_and_dims(rng):
    network = RefinementNetwork(4, [4, 4, 4, 4, 4, 4], np.random.default_rng(0), dtype="float64")
    f = Tensor(rng.standard_normal((1, 4, 7, 9)))
    assert network(f).shape == (1, 2, 7, 9)
    zero_parameters(network)
    assert not network(f).data.any()


def test_refinement_receptive_field(desk_config, rng):
    network = RefinementNetwork(4, desk_config.refinement_channels, np.random.default_rng(0), dtype="float64").eval()
    width, center = 141, 70
    f = rng.standard_normal((1, 4, 3, width))

    def center_output(offset):
        bumped = f.copy()
        if offset is not None:
            bumped[0, :, 1, center + offset] += 10.0
        return network(Tensor(bumped)).data[0, :, 1, center]

    reference = center_output(None)
    assert not np.array_equal(center_output(33), reference)
    np.testing.assert_array_equal(center_output(34), reference)
    np.testing.assert_array_equal(center_output(68), reference)


def test_refinement_schedule_examples():
    assert iterative_refinement_schedule(1024, 1024, 256, 256) == [(64, 64)]
    assert iterative_refinement_schedule(2048, 2048, 256, 256) == [(128, 128), (64, 64)]
    assert iterative_refinement_schedule(512, 512, 256, 256) == []


def test_forward_shapes_and_frames(tiny_config, rng):
    model = GLUNetModel(tiny_config)
    output = model(images(rng, 2, 48, 64), images(rng, 2, 48, 64))
    assert output.flow.tensor.shape == (2, 2, 48, 64)
    assert output.flow.frame == (48, 64)
    assert output.global_volume_shape == (2, 4, 2, 2)
    assert output.levels["L1"].frame == (32, 32)
    assert output.levels["L2"].dims == (4, 4)
    assert output.levels["L3"].frame == (48, 64)
    assert output.levels["L4"].dims == (12, 16)
    assert output.flow.is_finite()


@pytest.mark.parametrize("height, width", [(32, 32), (40, 56), (72, 40)])
def test_forward_accepts_any_multiple_of_eight(tiny_config, rng, height, width):
    model = GLUNetModel(tiny_config).eval()
    with no_grad():
        output = model(images(rng, 1, height, width), images(rng, 1, height, width))
    assert output.flow.tensor.shape == (1, 2, height, width)


def test_cyclic_consistency_toggle_changes_flow_only(tiny_config, rng):
    source, target = images(rng, 1, 32, 32), images(rng, 1, 32, 32)
    filtered = GLUNetModel(tiny_config).eval()
    plain = GLUNetModel(tiny_config.copy(update={"cyclic_consistency": False})).eval()
    with no_grad():
        assert not np.array_equal(filtered(source, target).flow.numpy(), plain(source, target).flow.numpy())
    assert count_params(filtered) == count_params(plain)


def test_forward_rejects_mismatched_images(tiny_config, rng):
    model = GLUNetModel(tiny_config)
    with pytest.raises(ShapeMismatchError):
        model(images(rng, 1, 32, 32), images(rng, 1, 32, 40))


def test_iterative_refinement_adds_intermediate_level(tiny_config, rng):
    source, target = images(rng, 1, 128, 128), images(rng, 1, 128, 128)
    model = GLUNetModel(tiny_config).eval()
    with no_grad():
        refined = model(source, target)
    assert [flow.dims for flow in refined.intermediates] == [(8, 8)]

    flat = GLUNetModel(tiny_config.copy(update={"iterative_refinement": False})).eval()
    with no_grad():
        assert flat(source, target).intermediates == []


def test_every_parameter_receives_a_gradient(tiny_config, rng):
    model = GLUNetModel(tiny_config)
    params = model.parameters()
    with GradientTape() as tape:
        output = model(images(rng, 2, 32, 32), images(rng, 2, 32, 32))
        loss = sum_all(weigh(output.flow.tensor, rng.standard_normal((2, 2, 32, 32))))
    backward(loss, tape)
    missing = [name for name, tensor in params.items() if tensor.grad is None]
    assert missing == []


def test_count_params_ignores_flags_and_counts_refinement(tiny_config):
    base = count_params(GLUNetModel(tiny_config))
    no_filter = tiny_config.copy(update={"cyclic_consistency": False, "iterative_refinement": False})
    assert count_params(GLUNetModel(no_filter)) == base

    without_l4 = GLUNetModel(tiny_config.copy(update={"refinement_levels": ["L2"]}))
    refinement = RefinementNetwork(tiny_config.decoder_channels[-1], tiny_config.refinement_channels,
                                   np.random.default_rng(0), dtype="float64")
    assert base - count_params(without_l4) == count_params(refinement)


def test_count_params_matches_checkpoint(tiny_config, tmp_path):
    model = GLUNetModel(tiny_config)
    save_checkpoint(model, tmp_path / "m.ckpt")
    entries, _ = read_checkpoint(tmp_path / "m.ckpt")
    trainable = sum(array.size for name, array in entries.items() if not name.endswith(("running_mean", "running_var")))
    assert trainable == count_params(model)


def test_checkpoint_round_trip_is_byte_stable(tiny_config, tmp_path, rng):
    model = GLUNetModel(tiny_config).eval()
    save_checkpoint(model, tmp_path / "a.ckpt")
    loaded = load_checkpoint(tmp_path / "a.ckpt").eval()
    save_checkpoint(loaded, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    source, target = images(rng, 1, 32, 32), images(rng, 1, 32, 32)
    with no_grad():
        np.testing.assert_array_equal(model(source, target).flow.numpy(), loaded(source, target).flow.numpy())


def test_load_checkpoint_errors(tiny_config, tmp_path):
    save_checkpoint(GLUNetModel(tiny_config), tmp_path / "a.ckpt")
    raw = (tmp_path / "a.ckpt").read_bytes()
    (tmp_path / "magic.ckpt").write_bytes(b"NOPE" + raw[4:])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "magic.ckpt")

    entries, _ = read_checkpoint(tmp_path / "a.ckpt")
    write_checkpoint(tmp_path / "bare.ckpt", entries)
    with pytest.raises(CheckpointError, match="config"):
        load_checkpoint(tmp_path / "bare.ckpt")


def test_fixed_backbone_is_frozen(tiny_config, tmp_path, rng):
    donor = GLUNetModel(tiny_config)
    write_checkpoint(tmp_path / "backbone.ckpt", {f"backbone.{name}": array
                                                  for name, array in donor.backbone.state_dict().items()})
    config = tiny_config.copy(update={"backbone_variant": "fixed", "backbone_weights": str(tmp_path / "backbone.ckpt")})
    model = GLUNetModel(config)
    for name, tensor in model.backbone.named_parameters():
        assert not tensor.requires_grad
        np.testing.assert_array_equal(tensor.data, donor.backbone.state_dict()[name])
    assert model.train().backbone.training is False
    trainable = model.parameters().trainable()
    assert not any(name.startswith("backbone.") for name in trainable)


def test_fixed_backbone_requires_weights():
    with pytest.raises(ValueError):
        ModelConfig.desk_scale(backbone_variant="fixed")


@pytest.mark.slow
def test_full_scale_global_volume_has_256_channels(rng):
    model = GLUNetModel(ModelConfig()).eval()
    with no_grad():
        output = model(images(rng, 1, 256, 256, "float32"), images(rng, 1, 256, 256, "float32"))
    assert output.global_volume_shape == (1, 256, 16, 16)
    assert output.flow.tensor.shape == (1, 2, 256, 256)
