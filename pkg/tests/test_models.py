"""Network behavior: determinism, tapping, freezing, heads, perceptual distance.

The fixed-seed regression values below were produced by the first verified
build of this code (same seeds, tiny 16x16 config) and are pinned so any
later drift in initialization or forward order is caught.
"""

import math

import pytest
import torch

from dclkit import rng
from dclkit.errors import ConfigurationError, InputError, NumericFailureError
from dclkit.models import (
    ClassifierModel,
    DiscriminatorModel,
    GeneratorModel,
    ModelConfig,
    PerceptualNet,
    classifier_predict,
    clone_frozen,
    discriminator_forward,
    feature_distance,
    generator_forward,
    global_avg_pool,
    init_weights,
    normalized_features,
    param_hash,
    perceptual_distance,
)
from dclkit.types import ImageBatch, LatentBatch

TINY = ModelConfig(image_size=16, z_dim=8, base_channels=8)


def tiny_generator(seed=1234, name="regression-g"):
    return init_weights(GeneratorModel(TINY), rng.torch_stream(seed, name))


def tiny_discriminator(seed=1234, name="regression-d"):
    return init_weights(DiscriminatorModel(TINY), rng.torch_stream(seed, name))


# ------------------------------------------------------------- config


def test_config_derives_block_count_from_resolution():
    assert ModelConfig(image_size=64).n_blocks == 4
    assert ModelConfig(image_size=16).n_blocks == 2
    with pytest.raises(ConfigurationError):
        ModelConfig(image_size=48).n_blocks


# ---------------------------------------------------------- generator


def test_generator_zero_latent_through_biasfree_layers_gives_zero_image():
    cfg = ModelConfig(image_size=16, z_dim=8, base_channels=8, use_bias=False)
    g = init_weights(GeneratorModel(cfg), rng.torch_stream(0, "bias-free"))
    img, _ = g(torch.zeros(3, 8))
    assert torch.all(img == 0)


def test_generator_forward_is_deterministic():
    g = tiny_generator()
    z = torch.randn(2, 8, generator=rng.torch_stream(0, "det-z"))
    a, _ = g(z)
    b, _ = g(z)
    assert torch.equal(a, b)


def test_generator_fixed_seed_regression_values():
    g = tiny_generator()
    z = torch.randn(2, 8, generator=rng.torch_stream(1234, "regression-z"))
    img, _ = g(z)
    assert img.shape == (2, 3, 16, 16)
    assert img.mean().item() == pytest.approx(-0.01944966, abs=1e-6)
    assert img.std().item() == pytest.approx(0.07896825, abs=1e-6)
    row = img[0, 0, 0, :4].tolist()
    want = [0.00331247, -0.01740125, 0.00587372, -0.04684741]
    assert row == pytest.approx(want, abs=1e-6)


def test_generator_taps_return_exactly_requested_layers():
    g = tiny_generator()
    z = torch.randn(2, 8, generator=rng.torch_stream(1, "tap-z"))
    img, pyr = g(z, taps=(0, 1))
    assert pyr.indices == (0, 1)
    assert pyr[0].shape == (2, 16, 4, 4)
    assert pyr[1].shape == (2, 8, 8, 8)
    _, empty = g(z)
    assert len(empty) == 0


def test_generator_pyramid_subset_consistency():
    g = tiny_generator()
    z = torch.randn(2, 8, generator=rng.torch_stream(2, "subset-z"))
    _, full = g(z, taps=(0, 1))
    _, part = g(z, taps=(1,))
    assert torch.equal(full.restrict([1])[1], part[1])


def test_generator_rejects_invalid_tap():
    g = tiny_generator()
    with pytest.raises(ConfigurationError):
        g(torch.randn(1, 8), taps=(5,))


def test_generator_reports_nonfinite_layer():
    g = tiny_generator()
    with torch.no_grad():
        g.blocks[1][0].weight[0, 0, 0, 0] = float("nan")
    with pytest.raises(NumericFailureError) as exc:
        g(torch.randn(2, 8), taps=(1,))
    assert exc.value.layer_index == 1


def test_generator_forward_wrapper_tags_provenance_and_checks_dims():
    g = tiny_generator()
    z = LatentBatch(torch.randn(2, 8, generator=rng.torch_stream(3, "wrap-z")))
    img, _ = generator_forward(g, z)
    assert img.provenance == "generated-target"
    assert img.data.min() >= -1 and img.data.max() <= 1
    frozen_img, _ = generator_forward(clone_frozen(g), z)
    assert frozen_img.provenance == "generated-source"
    with pytest.raises(InputError):
        generator_forward(g, LatentBatch(torch.randn(2, 9)))


# ------------------------------------------------------ discriminator


def test_discriminator_zero_parameters_give_zero_logits():
    d = tiny_discriminator()
    with torch.no_grad():
        for p in d.parameters():
            p.zero_()
    logits, _ = d(torch.randn(4, 3, 16, 16).clamp(-1, 1))
    assert torch.all(logits == 0)
    assert logits.shape == (4,)


def test_discriminator_no_taps_still_discriminates():
    d = tiny_discriminator()
    logits, pyr = d(torch.randn(2, 3, 16, 16).clamp(-1, 1))
    assert logits.shape == (2,) and len(pyr) == 0


def test_discriminator_fixed_seed_regression_values():
    g = tiny_generator()
    d = tiny_discriminator()
    z = torch.randn(2, 8, generator=rng.torch_stream(1234, "regression-z"))
    img, _ = g(z)
    logits, _ = d(img)
    assert logits.tolist() == pytest.approx([-0.01648422, -0.09622695], abs=1e-6)


def test_discriminator_patch_head_gives_per_patch_logits():
    d = tiny_discriminator()
    x = torch.randn(2, 3, 16, 16).clamp(-1, 1)
    patch, _ = d(x, head="patch")
    assert patch.ndim == 3 and patch.shape[0] == 2
    assert patch.shape[1] > 1 and patch.shape[2] > 1
    with pytest.raises(ConfigurationError):
        d(x, head="pixel")


def test_discriminator_forward_wrapper_takes_image_batches():
    d = tiny_discriminator()
    x = ImageBatch(torch.zeros(2, 3, 16, 16), "real-target")
    logits, pyr = discriminator_forward(d, x, taps=(0,))
    assert logits.shape == (2,) and pyr.indices == (0,)


# ------------------------------------------------------------ freezing


def test_clone_is_insulated_from_source_mutation():
    g = tiny_generator()
    snapshot = clone_frozen(g)
    before = param_hash(snapshot)
    z = torch.randn(2, 8, generator=rng.torch_stream(4, "freeze-z"))
    ref, _ = g(z)
    ref = ref.detach().clone()
    with torch.no_grad():
        for p in g.parameters():
            p.add_(0.5)
    assert param_hash(snapshot) == before
    out, _ = snapshot(z)
    assert torch.equal(out, ref)


def test_frozen_model_survives_a_training_step_unchanged():
    g = tiny_generator()
    snapshot = clone_frozen(g)
    before = param_hash(snapshot)
    opt = torch.optim.Adam(g.parameters(), lr=1e-2)
    z = torch.randn(4, 8, generator=rng.torch_stream(5, "step-z"))
    img, _ = g(z)
    frozen_img, _ = snapshot(z)
    # frozen output participates in the loss yet receives no update
    loss = (img * frozen_img).mean() + img.pow(2).mean()
    loss.backward()
    opt.step()
    assert param_hash(snapshot) == before
    assert param_hash(g) != before


def test_frozen_forward_requires_no_grad():
    snapshot = clone_frozen(tiny_generator())
    z = LatentBatch(torch.randn(2, 8, generator=rng.torch_stream(6, "nograd-z")))
    img, _ = generator_forward(snapshot, z)
    assert not img.data.requires_grad


# ---------------------------------------------------------- classifier


def test_classifier_outputs_are_probabilities():
    c = init_weights(ClassifierModel(TINY), rng.torch_stream(7, "cls"))
    c.trained = True
    x = ImageBatch(torch.randn(5, 3, 16, 16).clamp(-1, 1), "real-target")
    p = classifier_predict(c, x)
    assert p.shape == (5,)
    assert (p >= 0).all() and (p <= 1).all()
    # complement property of a binary sigmoid head
    assert torch.allclose(p + (1 - p), torch.ones(5), atol=1e-6)


def test_classifier_saturates_with_large_bias():
    c = init_weights(ClassifierModel(TINY), rng.torch_stream(8, "cls-sat"))
    c.trained = True
    with torch.no_grad():
        c.fc.bias.fill_(50.0)
    x = ImageBatch(torch.randn(4, 3, 16, 16).clamp(-1, 1), "real-target")
    assert (classifier_predict(c, x) > 0.999).all()


def test_classifier_guards_untrained_use_and_shape():
    c = init_weights(ClassifierModel(TINY), rng.torch_stream(9, "cls-guard"))
    x = ImageBatch(torch.zeros(1, 3, 16, 16), "real-target")
    with pytest.raises(ConfigurationError):
        classifier_predict(c, x)
    assert classifier_predict(c, x, allow_untrained=True).shape == (1,)
    with pytest.raises(InputError):
        classifier_predict(c, ImageBatch(torch.zeros(1, 3, 32, 32), "real-target"), allow_untrained=True)


# --------------------------------------------------- perceptual distance


def _perc_net(seed=10):
    c = init_weights(ClassifierModel(TINY), rng.torch_stream(seed, "perc"))
    return PerceptualNet.from_classifier(c)


def test_perceptual_distance_zero_at_identity_and_symmetric():
    net = _perc_net()
    a = ImageBatch(torch.randn(3, 3, 16, 16).clamp(-1, 1), "real-target")
    b = ImageBatch(torch.randn(3, 3, 16, 16).clamp(-1, 1), "real-target")
    assert perceptual_distance(net, a, a).abs().max() < 1e-10
    ab = perceptual_distance(net, a, b)
    ba = perceptual_distance(net, b, a)
    assert torch.equal(ab, ba)
    assert (ab >= 0).all()


def test_perceptual_distance_orders_near_before_far():
    net = _perc_net()
    base = torch.randn(1, 3, 16, 16, generator=rng.torch_stream(11, "perc-a")).clamp(-0.9, 0.9)
    near = (base + 0.01 * torch.randn(1, 3, 16, 16, generator=rng.torch_stream(12, "perc-n"))).clamp(-1, 1)
    far = torch.randn(1, 3, 16, 16, generator=rng.torch_stream(13, "perc-f")).clamp(-1, 1)
    d_near = perceptual_distance(net, ImageBatch(base, "real-target"), ImageBatch(near, "real-target"))
    d_far = perceptual_distance(net, ImageBatch(base, "real-target"), ImageBatch(far, "real-target"))
    assert float(d_near) < float(d_far)


def test_perceptual_distance_rejects_shape_mismatch():
    net = _perc_net()
    a = ImageBatch(torch.zeros(1, 3, 16, 16), "real-target")
    b = ImageBatch(torch.zeros(2, 3, 16, 16), "real-target")
    with pytest.raises(InputError):
        perceptual_distance(net, a, b)


def test_perceptual_net_is_frozen_and_feature_stack_is_unit_normalized():
    net = _perc_net()
    assert net.frozen
    assert all(not p.requires_grad for p in net.parameters())
    feats = normalized_features(net, torch.randn(2, 3, 16, 16).clamp(-1, 1))
    for f in feats:
        norms = f.norm(dim=1)
        assert torch.allclose(norms, torch.ones_like(norms), atol=1e-4)


def test_feature_distance_accumulates_across_layers():
    a = [torch.ones(2, 4, 2, 2), torch.ones(2, 8, 1, 1)]
    b = [torch.zeros(2, 4, 2, 2), torch.zeros(2, 8, 1, 1)]
    # each layer contributes (1^2 summed over channels), averaged spatially
    out = feature_distance(a, b)
    assert torch.allclose(out, torch.tensor([12.0, 12.0]))


def test_global_avg_pool_reduces_spatial_dims():
    x = torch.arange(16.0).reshape(1, 2, 2, 4)
    pooled = global_avg_pool(x)
    assert pooled.shape == (1, 2)
    assert pooled[0, 0].item() == pytest.approx(x[0, 0].mean().item())
