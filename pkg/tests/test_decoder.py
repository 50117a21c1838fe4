import numpy as np
import pytest
import torch

from conftest import desk_decoder_config
from pvkit.decoder import (DecoderConfig, StageSpec, build_decoder, decode,
                           load_checkpoint, save_checkpoint)
from pvkit.digests import digest_module
from pvkit.errors import ConfigurationError, ShapeError


class TestConfig:
    def test_full_scale_stage_count(self):
        # 7 -> 14 -> 28 -> 56 -> 112 -> 224
        cfg = DecoderConfig.for_shapes((7, 7, 2048), (224, 224, 3))
        assert len(cfg.stages) == 5

    def test_desk_scale_stage_count(self):
        cfg = DecoderConfig.for_shapes((4, 4, 64), (32, 32, 3))
        assert len(cfg.stages) == 3

    def test_insufficient_stages_rejected(self):
        with pytest.raises(ConfigurationError):
            DecoderConfig(latent_shape=(4, 4, 64), output_shape=(32, 32, 3),
                          stages=(StageSpec(16),))

    def test_nonpositive_slope_rejected(self):
        with pytest.raises(ConfigurationError):
            DecoderConfig(latent_shape=(4, 4, 8), output_shape=(8, 8, 3),
                          stages=(StageSpec(8),), leaky_slope=0.0)

    def test_roundtrip_dict(self):
        cfg = desk_decoder_config()
        assert DecoderConfig.from_dict(cfg.to_dict()) == cfg


class TestBuild:
    def test_seed_determinism(self):
        cfg = desk_decoder_config()
        d1 = build_decoder(cfg, seed=5)
        d2 = build_decoder(cfg, seed=5)
        assert digest_module(d1) == digest_module(d2)
        d3 = build_decoder(cfg, seed=6)
        assert digest_module(d1) != digest_module(d3)

    def test_architecture_constraints(self):
        dec = build_decoder(desk_decoder_config(), 0)
        for name, mod in dec.net.items():
            if isinstance(mod, (torch.nn.Conv2d, torch.nn.ConvTranspose2d)):
                assert mod.kernel_size == (3, 3)
            if isinstance(mod, torch.nn.LeakyReLU):
                assert mod.negative_slope == pytest.approx(0.2)
        # each transposed conv is immediately followed by batch norm
        order = dec._order
        for i, name in enumerate(order):
            if isinstance(dec.net[name], torch.nn.ConvTranspose2d):
                assert isinstance(dec.net[order[i + 1]], torch.nn.BatchNorm2d)
        assert isinstance(dec.net[order[-1]], torch.nn.Sigmoid)

    def test_layer_graph_is_single_chain(self):
        # no-skip guarantee: every node has exactly one predecessor and one
        # successor, so nothing can bypass an upsampling stage
        dec = build_decoder(desk_decoder_config(), 0)
        edges = dec.layer_graph()
        sources = [a for a, _ in edges]
        dests = [b for _, b in edges]
        assert len(set(sources)) == len(sources)
        assert len(set(dests)) == len(dests)
        for (_, mid), (nxt, _) in zip(edges, edges[1:]):
            assert mid == nxt


class TestDecode:
    def test_output_strictly_in_unit_interval(self):
        dec = build_decoder(desk_decoder_config(), 0)
        z = np.random.default_rng(0).normal(size=(4, 4, 64))
        r = decode(dec, z)
        assert r.values.shape == (32, 32, 3)
        assert r.values.min() > 0.0 and r.values.max() < 1.0

    def test_zero_latent_finite(self):
        dec = build_decoder(desk_decoder_config(), 0)
        r = decode(dec, np.zeros((4, 4, 64)))
        assert np.isfinite(r.values).all()

    def test_identical_weights_identical_outputs(self):
        z = np.random.default_rng(1).normal(size=(4, 4, 64))
        r1 = decode(build_decoder(desk_decoder_config(), 3), z)
        r2 = decode(build_decoder(desk_decoder_config(), 3), z)
        assert np.array_equal(r1.values, r2.values)
        assert r1.decoder_digest == r2.decoder_digest

    def test_shape_mismatch(self):
        dec = build_decoder(desk_decoder_config(), 0)
        with pytest.raises(ShapeError):
            decode(dec, np.zeros((2, 2, 64)))

    def test_overshoot_center_crop(self):
        # 5 * 2^? : 3 stages take 3x3 to 24x24; a 20x20 target forces a crop
        cfg = DecoderConfig(latent_shape=(3, 3, 4), output_shape=(20, 20, 3),
                            stages=(StageSpec(8, 1), StageSpec(8, 1),
                                    StageSpec(8, 1)))
        dec = build_decoder(cfg, 0)
        r = decode(dec, np.zeros((3, 3, 4)))
        assert r.values.shape == (20, 20, 3)


def test_checkpoint_roundtrip(tmp_path):
    dec = build_decoder(desk_decoder_config(), 11)
    prov = {"dataset_id": "demo", "seed": 11, "encoder_digest": "abc"}
    save_checkpoint(tmp_path / "d.pt", dec, prov, history=[{"epoch": 0}])
    loaded, prov2, hist = load_checkpoint(tmp_path / "d.pt")
    assert prov2 == prov
    assert hist == [{"epoch": 0}]
    assert digest_module(loaded) == digest_module(dec)
