import numpy as np
import pytest
import torch

from clickseg.checkpoints import synthetic_base
from clickseg.interactions import Click, ClickSet, POSITIVE, NEGATIVE, encode_clicks
from clickseg.refiner import (
    MultiScaleRefiner,
    build_refiner,
    predict,
    refine,
)
from clickseg.two_stream import (
    NetworkConfig,
    forward,
    init_from_pretrained,
    randomize_weights,
)

torch.set_num_threads(1)

SCALE = 0.125


@pytest.fixture(scope="module")
def toy_net():
    net = init_from_pretrained(synthetic_base(SCALE, seed=3), NetworkConfig(channel_scale=SCALE))
    randomize_weights(net, std=0.05, seed=11)
    return net


def rand_inputs(rng, h, w):
    img = rng.integers(0, 255, size=(h, w, 3)).astype(np.uint8)
    clicks = ClickSet.of(Click(h // 3, w // 3, POSITIVE), Click(h - 2, w - 2, NEGATIVE))
    return img, encode_clicks(h, w, clicks)


def test_reference_channel_arithmetic():
    ref = build_refiner(NetworkConfig())
    assert ref.convs["fuse4"].weight.shape == (60, 1024, 1, 1)
    # refining stack sees 60 fused channels + 2 score channels
    assert ref.convs["refine1"].weight.shape == (64, 62, 7, 7)
    assert ref.convs["refine1"].weight.shape[2:] == (7, 7)
    assert ref.convs["refine2"].weight.shape[2:] == (5, 5)
    for i in (3, 4, 5):
        assert ref.convs[f"refine{i}"].weight.shape[2:] == (3, 3)
    assert ref.convs["score_refine"].weight.shape == (2, 64, 1, 1)


def test_tap_channel_count_validation():
    with pytest.raises(ValueError):
        MultiScaleRefiner((8, 8, 8))


@pytest.mark.parametrize("hw", [(240, 320), (97, 133), (64, 64)])
def test_full_resolution_refinement(toy_net, hw, request):
    if hw == (240, 320):
        rng = np.random.default_rng(0)
    else:
        rng = np.random.default_rng(1)
    img, maps = rand_inputs(rng, *hw)
    _, bundle = forward(toy_net, img, maps)
    ref = build_refiner(toy_net.config)
    ref.init_random(0)
    out = refine(ref, bundle)
    assert out.shape == (*hw, 2)
    assert np.isfinite(out).all()


def test_zero_bottlenecks_leave_only_score_path(toy_net):
    rng = np.random.default_rng(2)
    img1, maps1 = rand_inputs(rng, 48, 48)
    img2, maps2 = rand_inputs(rng, 48, 48)
    _, b1 = forward(toy_net, img1, maps1)
    _, b2 = forward(toy_net, img2, maps2)
    ref = build_refiner(toy_net.config)
    ref.init_random(3)
    with torch.no_grad():
        for i in range(1, 6):
            ref.convs[f"fuse{i}"].weight.zero_()
            ref.convs[f"fuse{i}"].bias.zero_()
    # same score, different features -> identical refinement
    b2_same_score = type(b2)(features=b2.features, factors=b2.factors,
                             score=b1.score, coarse_grid=b2.coarse_grid)
    r1 = refine(ref, b1)
    r2 = refine(ref, b2_same_score)
    np.testing.assert_array_equal(r1, r2)


def test_zero_classifier_gives_uniform_half(toy_net):
    rng = np.random.default_rng(3)
    img, maps = rand_inputs(rng, 40, 40)
    ref = build_refiner(toy_net.config)
    ref.init_random(1)
    with torch.no_grad():
        ref.convs["score_refine"].weight.zero_()
        ref.convs["score_refine"].bias.zero_()
    prob = predict(img, maps, toy_net, ref)
    assert np.abs(prob - 0.5).max() <= 1e-6


def test_probabilities_sum_to_one(toy_net):
    rng = np.random.default_rng(4)
    img, maps = rand_inputs(rng, 33, 47)
    _, bundle = forward(toy_net, img, maps)
    ref = build_refiner(toy_net.config)
    ref.init_random(2)
    score = refine(ref, bundle)
    t = torch.from_numpy(score)
    probs = torch.softmax(t, dim=-1).numpy()
    np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)
    prob_fg = predict(img, maps, toy_net, ref)
    np.testing.assert_allclose(prob_fg, probs[..., 1], atol=1e-6)


def test_inference_deterministic_dropout_only_in_training(toy_net):
    rng = np.random.default_rng(5)
    img, maps = rand_inputs(rng, 32, 32)
    _, bundle = forward(toy_net, img, maps)
    ref = build_refiner(toy_net.config)
    ref.init_random(4)
    a = refine(ref, bundle)
    b = refine(ref, bundle)
    np.testing.assert_array_equal(a, b)

    feats = [torch.from_numpy(f.transpose(2, 0, 1)[None]) for f in bundle.features]
    score = torch.from_numpy(bundle.score.transpose(2, 0, 1)[None])
    ref.train()
    torch.manual_seed(0)
    t1 = ref.forward_tensors(feats, score)
    t2 = ref.forward_tensors(feats, score)
    assert not torch.equal(t1, t2)  # dropout resamples per pass


def test_scale_mismatch_fault_names_tap(toy_net):
    rng = np.random.default_rng(6)
    img, maps = rand_inputs(rng, 32, 32)
    _, bundle = forward(toy_net, img, maps)
    ref = build_refiner(toy_net.config)
    ref.init_random(5)
    feats = [torch.from_numpy(f.transpose(2, 0, 1)[None]) for f in bundle.features]
    score = torch.from_numpy(bundle.score.transpose(2, 0, 1)[None])
    feats[2] = feats[2][..., :-1, :]  # corrupt the factor-4 tap
    with pytest.raises(ValueError, match="tap 3"):
        ref.forward_tensors(feats, score)


def test_random_init_is_fan_in_scaled():
    ref = build_refiner(NetworkConfig(channel_scale=SCALE))
    ref.init_random(7)
    w = ref.convs["refine3"].weight.detach()
    fan_in = w.shape[1] * w.shape[2] * w.shape[3]
    expected_std = (2.0 / fan_in) ** 0.5
    assert abs(float(w.std()) - expected_std) / expected_std < 0.15
    assert float(ref.convs["refine3"].bias.detach().abs().max()) == 0.0


def test_weights_roundtrip():
    ref = build_refiner(NetworkConfig(channel_scale=SCALE))
    ref.init_random(8)
    dump = ref.weights()
    other = build_refiner(NetworkConfig(channel_scale=SCALE))
    other.load_weights(dump)
    assert other.fingerprint() == ref.fingerprint()
