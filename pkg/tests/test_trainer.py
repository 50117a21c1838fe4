import numpy as np
import pytest

from conftest import desk_decoder_config
from pvkit import synthetic
from pvkit.decoder import build_decoder
from pvkit.digests import digest_module
from pvkit.losses import LossWeights
from pvkit.trainer import TrainConfig, evaluate_reconstruction, train_decoder


class TestTrainConfig:
    def test_zero_epochs_rejected(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_bad_batch_and_lr(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0)
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=0.0)

    def test_roundtrip(self):
        cfg = TrainConfig(epochs=3, seed=9, dataset_id="x")
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg


class TestTraining:
    def test_desk_scale_regression(self, trained_checkpoint):
        # frozen regression from the reference desk run: loss at the last
        # epoch is at most half the epoch-1 loss
        hist = trained_checkpoint.history
        assert len(hist) == trained_checkpoint.config.epochs
        assert hist[-1].composite <= 0.5 * hist[0].composite

    def test_monotone_trend_not_required_but_final_below_first(
            self, trained_checkpoint):
        hist = trained_checkpoint.history
        assert hist[-1].composite < hist[0].composite

    def test_encoder_frozen(self, trained_checkpoint, desk_encoder):
        assert (trained_checkpoint.encoder_digest
                == desk_encoder.bundle.current_digest())

    def test_seed_reproducibility(self, desk_encoder):
        imgs = synthetic.images_in_memory(48, seed=3)
        digests = []
        for _ in range(2):
            dec = build_decoder(desk_decoder_config(), seed=4)
            cfg = TrainConfig(epochs=2, batch_size=16, seed=4,
                              learning_rate=1e-3)
            train_decoder(cfg, desk_encoder, dec, imgs)
            digests.append(digest_module(dec))
        assert digests[0] == digests[1]

    def test_empty_dataset_rejected(self, desk_encoder):
        dec = build_decoder(desk_decoder_config(), 0)
        with pytest.raises(Exception):
            train_decoder(TrainConfig(epochs=1), desk_encoder, dec,
                          np.zeros((0, 32, 32, 3)))

    def test_training_log_written(self, desk_encoder, tmp_path):
        import json

        imgs = synthetic.images_in_memory(32, seed=5)
        dec = build_decoder(desk_decoder_config(), 0)
        cfg = TrainConfig(epochs=1, batch_size=16, seed=0, learning_rate=1e-3)
        train_decoder(cfg, desk_encoder, dec, imgs, log_path=tmp_path / "log.jsonl")
        lines = (tmp_path / "log.jsonl").read_text().splitlines()
        assert len(lines) == 2  # 32 images / batch 16
        rec = json.loads(lines[0])
        assert set(rec) == {"step", "mse", "ssim_loss", "dsim", "composite", "mode"}

    def test_checkpoint_provenance(self, trained_checkpoint, tmp_path):
        path = tmp_path / "ck.pt"
        trained_checkpoint.save(path)
        from pvkit.decoder import load_checkpoint

        _, prov, hist = load_checkpoint(path)
        # enough to re-derive the exact training command
        assert prov["config"] == trained_checkpoint.config.to_dict()
        assert prov["encoder_digest"] == trained_checkpoint.encoder_digest
        assert len(hist) == trained_checkpoint.config.epochs


class TestEvaluateReconstruction:
    def test_identity_stub_is_perfect(self, desk_encoder):
        imgs = synthetic.images_in_memory(4, seed=6)
        rep = evaluate_reconstruction(desk_encoder, lambda x: x, imgs)
        assert rep.mse == pytest.approx(0.0, abs=1e-9)
        assert rep.ssim_loss == pytest.approx(-1.0, abs=1e-6)
        assert rep.dsim == pytest.approx(0.0, abs=1e-6)

    def test_trained_beats_mean_image_baseline(self, desk_encoder,
                                               trained_decoder, train_images,
                                               heldout_images):
        imgs = heldout_images[:40]
        mean_img = train_images.mean(axis=0)
        rep_trained = evaluate_reconstruction(desk_encoder, trained_decoder, imgs)
        rep_mean = evaluate_reconstruction(
            desk_encoder, lambda x: mean_img, imgs)
        assert rep_trained.mse < rep_mean.mse

    def test_report_composite_consistent(self, desk_encoder, trained_decoder,
                                         heldout_images):
        rep = evaluate_reconstruction(desk_encoder, trained_decoder,
                                      heldout_images[:8])
        w = LossWeights.default()
        expect = (w.alpha_mse * rep.mse + w.alpha_ssim * rep.ssim_loss
                  + w.alpha_dsim * rep.dsim)
        assert rep.composite == pytest.approx(expect, abs=1e-9)

    def test_empty_set_rejected(self, desk_encoder, trained_decoder):
        with pytest.raises(ValueError):
            evaluate_reconstruction(desk_encoder, trained_decoder,
                                    np.zeros((0, 32, 32, 3)))
