import numpy as np
import pytest
import torch

from aibnet.config import Config, ConfigError, ModelConfig
from aibnet.gradcheck import grad_check
from aibnet.network import (Encoder, SubDecoder, build_model, build_pretrain_decoder,
                            crop_image, init_parameters, pad_image)


def tiny_cfg(**kw):
    base = dict(base_channels=4, blocks_per_level=1, sub_decoders=1, enc_blocks_per_level=1)
    base.update(kw)
    return ModelConfig(**base)


def rand_image(shape, seed, dtype=torch.float32):
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.uniform(0, 1, size=shape)).to(dtype)


def test_encoder_scale_shapes():
    cfg = ModelConfig(base_channels=16, blocks_per_level=1, sub_decoders=1)
    enc = Encoder(cfg)
    shallow, feats = enc(rand_image((1, 3, 64, 64), seed=0))
    assert shallow.shape == (1, 16, 64, 64)
    expected = [(16, 64, 64), (32, 32, 32), (64, 16, 16), (128, 8, 8), (256, 4, 4)]
    assert [tuple(f.shape[1:]) for f in feats] == expected


def test_encoder_zero_weights_give_zero_features():
    enc = Encoder(tiny_cfg())
    with torch.no_grad():
        for p in enc.parameters():
            p.zero_()
    _, feats = enc(rand_image((1, 3, 16, 16), seed=1))
    for f in feats:
        assert torch.equal(f, torch.zeros_like(f))


def test_encoder_forward_is_pure():
    enc = Encoder(tiny_cfg())
    x = rand_image((1, 3, 16, 16), seed=2)
    _, a = enc(x)
    _, b = enc(x)
    for fa, fb in zip(a, b):
        assert torch.equal(fa, fb)


def test_sub_decoder_feature_shapes_mirror_encoder():
    cfg = tiny_cfg(base_channels=8)
    enc, dec = Encoder(cfg), SubDecoder(cfg)
    x = rand_image((1, 3, 32, 32), seed=3)
    _, skips = enc(x)
    feats, restored = dec(skips, skips, x)
    assert [tuple(f.shape) for f in feats] == [tuple(e.shape) for e in skips]
    assert restored.shape == x.shape


def test_sub_decoder_zero_head_is_identity():
    cfg = tiny_cfg()
    dec = SubDecoder(cfg)
    init_parameters(dec, seed=0)  # zeroes the residual head
    enc = Encoder(cfg)
    x = rand_image((1, 3, 16, 16), seed=4)
    _, skips = enc(x)
    _, restored = dec(skips, skips, x)
    assert torch.equal(restored, x)


def test_sub_decoder_scale_count_mismatch_raises():
    cfg = tiny_cfg()
    dec = SubDecoder(cfg)
    x = rand_image((1, 3, 16, 16), seed=5)
    _, skips = Encoder(cfg)(x)
    with pytest.raises(ConfigError):
        dec(skips[:4], skips, x)


def test_component_flags_disable_modules():
    on = SubDecoder(tiny_cfg(enable_sfem=True, enable_hfs=True))
    off = SubDecoder(tiny_cfg(enable_sfem=False, enable_hfs=False))
    assert on.stages[0][0].sfem is not None and on.hfs[0] is not None
    assert off.stages[0][0].sfem is None and all(h is None for h in off.hfs)
    finest_only = SubDecoder(tiny_cfg(hfs_every_scale=False))
    assert finest_only.hfs[0] is not None
    assert all(h is None for h in finest_only.hfs[1:])


def test_model_fresh_build_is_identity_restoration():
    model = build_model(tiny_cfg(sub_decoders=2), seed=0)
    x = rand_image((2, 3, 16, 16), seed=6)
    outs = model(x)
    assert len(outs) == 2
    for out in outs:
        assert torch.equal(out, x)


def test_model_single_sub_decoder_output_count():
    model = build_model(tiny_cfg(sub_decoders=1), seed=0)
    assert len(model(rand_image((1, 3, 16, 16), seed=7))) == 1


def test_model_variant_l_has_four_sub_decoders():
    model = build_model(tiny_cfg(sub_decoders=4), seed=0)
    assert len(model.sub_decoders) == 4


def test_default_blocks_per_level_is_eight():
    assert ModelConfig().blocks_per_level == 8
    model = build_model(tiny_cfg(blocks_per_level=3), seed=0)
    assert all(len(stage) == 3 for stage in model.sub_decoders[0].stages)


def test_chaining_matches_manual_composition():
    model = build_model(tiny_cfg(sub_decoders=2), seed=3)
    # make the chain non-trivial
    with torch.no_grad():
        for sd in model.sub_decoders:
            sd.head.weight.uniform_(-0.05, 0.05)
    x = rand_image((1, 3, 16, 16), seed=8)
    outs = model(x)
    _, skips = model.encoder(x)
    prev = skips
    manual = []
    for sd in model.sub_decoders:
        prev, out = sd(prev, skips, x)
        manual.append(out)
    for a, b in zip(outs, manual):
        assert torch.equal(a, b)


def test_build_model_deterministic():
    cfg = tiny_cfg(sub_decoders=2)
    a = build_model(cfg, seed=42)
    b = build_model(cfg, seed=42)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert torch.equal(pa, pb)
    c = build_model(cfg, seed=43)
    assert any(not torch.equal(pa, pc) for (_, pa), (_, pc)
               in zip(a.named_parameters(), c.named_parameters()))


def test_pretrain_decoder_is_baseline():
    dec = build_pretrain_decoder(tiny_cfg(), seed=0)
    assert dec.stages[0][0].sfem is None
    assert all(h is None for h in dec.hfs)


def test_scalar_parameter_initialization():
    cfg = tiny_cfg(n_masks=4)
    model = build_model(cfg, seed=0)
    block = model.sub_decoders[0].stages[0][0]
    assert block.fuse_weight.item() == 1.0
    assert block.sfem.temperature.item() == pytest.approx(2.0)  # sqrt(4)
    assert block.sfem.alpha_q1.item() == 0.0
    hfs = model.sub_decoders[0].hfs[0]
    assert torch.allclose(hfs.lambdas, torch.full((4,), 0.25))
    coarse = model.sub_decoders[0].stages[4][0]
    assert coarse.sfem.temperature.item() == pytest.approx(8.0)  # sqrt(64)


def test_pad_and_crop_roundtrip():
    x = rand_image((1, 3, 50, 70), seed=9)
    padded, size = pad_image(x)
    assert padded.shape[-2:] == (64, 80)
    assert size == (50, 70)
    assert torch.equal(crop_image(padded, size), x)
    already = rand_image((1, 3, 32, 32), seed=10)
    padded, _ = pad_image(already)
    assert padded is already
    with pytest.raises(ConfigError):
        pad_image(rand_image((1, 3, 8, 8), seed=11))


def test_model_output_shape_matches_input():
    model = build_model(tiny_cfg(), seed=0)
    for hw in ((16, 16), (32, 48)):
        x = rand_image((1, 3, *hw), seed=12)
        assert model(x)[0].shape == x.shape


def test_end_to_end_gradients():
    report = grad_check("end2end", seed=0)
    assert report.passed(1e-3), report.groups


def test_config_validation_rejects_bad_fields():
    cfg = Config()
    cfg.model.scales = 4
    with pytest.raises(ConfigError, match="scales"):
        from aibnet.config import validate
        validate(cfg)
