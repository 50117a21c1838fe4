"""Decoder training against a frozen encoder.

The optimizer only ever sees decoder parameters; the encoder's weights have
requires_grad disabled and its digest is asserted unchanged after the run.
Runs are reproducible given (seed, config, dataset).
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import losses
from .decoder import Decoder, save_checkpoint
from .errors import PvkitError, ShapeError
from .losses import LossReport, LossWeights, make_report
from .model_core import Encoder


@dataclass(frozen=True)
class TrainConfig:
    loss_weights: LossWeights = field(default_factory=LossWeights.default)
    batch_size: int = 16
    epochs: int = 30
    learning_rate: float = 1e-4
    seed: int = 0
    normalization_mode: str = losses.MEAN
    dataset_id: str = ""

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")

    def to_dict(self) -> dict:
        return {
            "loss_weights": [self.loss_weights.alpha_mse,
                             self.loss_weights.alpha_ssim,
                             self.loss_weights.alpha_dsim],
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
            "normalization_mode": self.normalization_mode,
            "dataset_id": self.dataset_id,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        w = d.pop("loss_weights", [0.2, 0.4, 0.4])
        return cls(loss_weights=LossWeights(*w), **d)


@dataclass
class Checkpoint:
    decoder: Decoder
    config: TrainConfig
    history: list[LossReport]
    encoder_digest: str
    wall_clock_s: float

    def save(self, path):
        save_checkpoint(path, self.decoder, provenance={
            "dataset_id": self.config.dataset_id,
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "encoder_digest": self.encoder_digest,
            "wall_clock_s": self.wall_clock_s,
        }, history=[json.loads(r.to_json_line()) for r in self.history])


class DivergenceError(PvkitError):
    """Training produced a non-finite loss; a diagnostic checkpoint was written."""

    def __init__(self, epoch: int, step: int):
        super().__init__(f"non-finite loss at epoch {epoch}, step {step}")
        self.epoch = epoch
        self.step = step


def _step_losses(enc: Encoder, dec: Decoder, xb: torch.Tensor, mode: str,
                 ssim_window: int = 11):
    """Forward pass: x -> z -> y, returning the three loss terms as tensors.

    xb is (b, 3, h, w). Latents are computed without grad (encoder frozen,
    decoder input detached by construction).
    """
    with torch.no_grad():
        zb = enc.forward_t(xb)
    yb = dec(zb)
    x_cl = xb.permute(0, 2, 3, 1)
    y_cl = yb.permute(0, 2, 3, 1)
    mse = losses.mse_loss(x_cl, y_cl, mode)
    ssim = losses.ssim_loss(x_cl, y_cl, mode, window_size=ssim_window)
    dsim = losses.dsim_loss(enc, y_cl, zb.permute(0, 2, 3, 1), mode)
    return mse, ssim, dsim


def train_decoder(cfg: TrainConfig, enc: Encoder, dec: Decoder,
                  images: np.ndarray, log_path=None,
                  ssim_window: int = 11) -> Checkpoint:
    """Minimize the composite loss over y = D(E(x)) with Adam.

    images: preprocessed stack (n, h, w, 3) in [0,1]. Shuffling is re-seeded
    each epoch from cfg.seed, so batch order is a pure function of the config.
    """
    if images.ndim != 4 or images.shape[0] == 0:
        raise ShapeError("images must be a non-empty (n, h, w, 3) stack")
    t0 = time.time()
    digest_before = enc.bundle.current_digest()
    xs = torch.as_tensor(np.transpose(images, (0, 3, 1, 2)), dtype=torch.float32)

    dec.train()
    opt = torch.optim.Adam(dec.parameters(), lr=cfg.learning_rate)
    n = xs.shape[0]
    step = 0
    history: list[LossReport] = []
    log_f = open(log_path, "w") if log_path else None
    try:
        for epoch in range(cfg.epochs):
            rng = np.random.default_rng(cfg.seed + epoch)
            order = rng.permutation(n)
            epoch_terms = []
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                xb = xs[idx]
                mse, ssim, dsim = _step_losses(enc, dec, xb, cfg.normalization_mode,
                                               ssim_window)
                loss = losses.composite_loss(cfg.loss_weights, (mse, ssim, dsim))
                if not torch.isfinite(loss):
                    ckpt = Checkpoint(dec, cfg, history, digest_before,
                                      time.time() - t0)
                    if log_path:
                        ckpt.save(Path(log_path).with_suffix(".diverged.pt"))
                    raise DivergenceError(epoch, step)
                opt.zero_grad()
                loss.backward()
                opt.step()
                terms = (float(mse.detach()), float(ssim.detach()),
                         float(dsim.detach()))
                epoch_terms.append(terms)
                if log_f:
                    rep = make_report(cfg.loss_weights, *terms,
                                      cfg.normalization_mode, len(idx))
                    log_f.write(rep.to_json_line(step) + "\n")
                step += 1
            means = np.mean(epoch_terms, axis=0)
            history.append(make_report(cfg.loss_weights, *means,
                                       cfg.normalization_mode, cfg.batch_size))
    finally:
        if log_f:
            log_f.close()
        dec.eval()

    digest_after = enc.bundle.current_digest()
    assert digest_after == digest_before, "encoder weights changed during training"
    return Checkpoint(decoder=dec, config=cfg, history=history,
                      encoder_digest=digest_before, wall_clock_s=time.time() - t0)


def evaluate_reconstruction(enc: Encoder, dec, images: np.ndarray,
                            weights: LossWeights | None = None,
                            ssim_window: int = 11) -> LossReport:
    """Mean-mode loss report over a held-out image stack.

    dec may be any callable image -> image (e.g. a test double); Decoder
    instances are routed through encode/decode.
    """
    if images.ndim != 4 or images.shape[0] == 0:
        raise ValueError("evaluation set must be a non-empty (n, h, w, 3) stack")
    weights = weights or LossWeights.default()
    from .decoder import decode
    from .model_core import encode

    recon = []
    lat = []
    for x in images:
        z = encode(enc, x)
        lat.append(z.values)
        if isinstance(dec, Decoder):
            recon.append(decode(dec, z).values)
        else:
            recon.append(np.asarray(dec(x)))
    Y = np.stack(recon)
    mse = losses.mse_loss(images, Y, losses.MEAN)
    ssim = losses.ssim_loss(images, Y, losses.MEAN, window_size=ssim_window)
    dsim = losses.dsim_loss(enc, Y, np.stack(lat), losses.MEAN)
    return make_report(weights, mse, ssim, dsim, losses.MEAN, images.shape[0])
