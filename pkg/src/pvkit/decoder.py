"""Inversion decoder: maps latent feature tensors back to image space.

Architecture constraints, all enforced at build time:
  - 3x3 kernels on every layer
  - leaky ReLU (slope 0.2) on hidden conv layers
  - transposed convolutions are linearly activated, each followed by batch norm
  - sigmoid output layer
  - strictly sequential: no skip connections, so the output depends on the
    latent representation alone
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .digests import digest_array, digest_module
from .errors import ConfigurationError, ShapeError

KERNEL = (3, 3)


@dataclass(frozen=True)
class StageSpec:
    channels_out: int
    conv_layers_per_stage: int = 2


@dataclass(frozen=True)
class DecoderConfig:
    latent_shape: tuple[int, int, int]  # (h~, w~, d)
    output_shape: tuple[int, int, int]  # (h, w, 3)
    stages: tuple[StageSpec, ...]
    leaky_slope: float = 0.2

    def __post_init__(self):
        if self.leaky_slope <= 0:
            raise ConfigurationError("leaky_slope must be positive")
        if self.output_shape[2] != 3:
            raise ConfigurationError("decoder output must be 3-channel RGB")
        h = self.latent_shape[0] * 2 ** len(self.stages)
        w = self.latent_shape[1] * 2 ** len(self.stages)
        if h < self.output_shape[0] or w < self.output_shape[1]:
            raise ConfigurationError(
                f"{len(self.stages)} doubling stages reach {(h, w)}, "
                f"short of output {self.output_shape[:2]}")

    @classmethod
    def for_shapes(cls, latent_shape, output_shape, channels=None,
                   conv_layers_per_stage: int = 2) -> "DecoderConfig":
        """Stage layout from shapes alone: double until the output fits,
        halving channels per stage by default."""
        n_stages = 0
        h, w = latent_shape[0], latent_shape[1]
        while h < output_shape[0] or w < output_shape[1]:
            h, w = h * 2, w * 2
            n_stages += 1
        if channels is None:
            # full-scale default: 2048 -> 512 -> 256 -> 128 -> 64 -> 32 -> 3
            d = latent_shape[2]
            channels = [max(d // 2 ** (i + 2), 8) for i in range(n_stages)]
        if len(channels) != n_stages:
            raise ConfigurationError(
                f"need {n_stages} stage channel counts, got {len(channels)}")
        stages = tuple(StageSpec(c, conv_layers_per_stage) for c in channels)
        return cls(latent_shape=tuple(latent_shape),
                   output_shape=tuple(output_shape), stages=stages)

    def to_dict(self) -> dict:
        return {
            "latent_shape": list(self.latent_shape),
            "output_shape": list(self.output_shape),
            "stages": [[s.channels_out, s.conv_layers_per_stage] for s in self.stages],
            "leaky_slope": self.leaky_slope,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DecoderConfig":
        return cls(latent_shape=tuple(d["latent_shape"]),
                   output_shape=tuple(d["output_shape"]),
                   stages=tuple(StageSpec(*s) for s in d["stages"]),
                   leaky_slope=d.get("leaky_slope", 0.2))


@dataclass
class Reconstruction:
    values: np.ndarray  # (h, w, 3), strictly inside (0, 1)
    source_latent_digest: str
    decoder_digest: str


class Decoder(nn.Module):
    """Sequential upsampling decoder. Exposes its layer graph so tests can
    verify the no-skip structure."""

    def __init__(self, cfg: DecoderConfig):
        super().__init__()
        self.cfg = cfg
        layers: list[tuple[str, nn.Module]] = []
        in_ch = cfg.latent_shape[2]
        for i, stage in enumerate(cfg.stages):
            for j in range(stage.conv_layers_per_stage):
                layers.append((f"stage{i}_conv{j}",
                               nn.Conv2d(in_ch, stage.channels_out, KERNEL, padding=1)))
                layers.append((f"stage{i}_act{j}", nn.LeakyReLU(cfg.leaky_slope)))
                in_ch = stage.channels_out
            # linear transposed conv (no activation), then batch norm
            layers.append((f"stage{i}_up",
                           nn.ConvTranspose2d(in_ch, in_ch, KERNEL, stride=2,
                                              padding=1, output_padding=1)))
            layers.append((f"stage{i}_bn", nn.BatchNorm2d(in_ch)))
        layers.append(("out_conv", nn.Conv2d(in_ch, 3, KERNEL, padding=1)))
        layers.append(("out_act", nn.Sigmoid()))
        self._order = [name for name, _ in layers]
        self.net = nn.ModuleDict(dict(layers))

    def forward(self, z: torch.Tensor) -> torch.Tensor:
        x = z
        for name in self._order:
            x = self.net[name](x)
        # doubling can overshoot a non-power-of-two target; center-crop to fit
        th, tw = self.cfg.output_shape[:2]
        if x.shape[2] != th or x.shape[3] != tw:
            top = (x.shape[2] - th) // 2
            left = (x.shape[3] - tw) // 2
            x = x[:, :, top:top + th, left:left + tw]
        return x

    def layer_graph(self) -> list[tuple[str, str]]:
        """Edges of the computation graph: a single chain by construction."""
        return list(zip(["input"] + self._order, self._order + ["output"]))


def build_decoder(cfg: DecoderConfig, seed: int) -> Decoder:
    """Deterministically initialized decoder in evaluation mode (frozen batch
    norm statistics, so decoding is a pure function of weights and latent)."""
    torch.manual_seed(seed)
    dec = Decoder(cfg)
    dec.eval()
    return dec


def decode(dec: Decoder, z) -> Reconstruction:
    """Run the decoder on one latent tensor (channel-last (h~, w~, d))."""
    from .model_core import LatentTensor

    values = z.values if isinstance(z, LatentTensor) else np.asarray(z)
    if tuple(values.shape) != tuple(dec.cfg.latent_shape):
        raise ShapeError(
            f"latent shape {values.shape} != configured {dec.cfg.latent_shape}")
    t = torch.as_tensor(values, dtype=torch.float32).permute(2, 0, 1)[None]
    was_training = dec.training
    dec.eval()
    try:
        with torch.no_grad():
            out = dec(t)
    finally:
        dec.train(was_training)
    img = out[0].permute(1, 2, 0).numpy().astype(np.float64)
    return Reconstruction(values=img,
                          source_latent_digest=digest_array(values),
                          decoder_digest=digest_module(dec))


def save_checkpoint(path, dec: Decoder, provenance: dict, history=None):
    """Checkpoint = weights + config + training provenance.

    Provenance (dataset id, loss weights, seed, encoder digest) is what the
    decoder-invariance comparison keys on.
    """
    torch.save({
        "state_dict": dec.state_dict(),
        "config": dec.cfg.to_dict(),
        "provenance": provenance,
        "history": history or [],
    }, Path(path))


def load_checkpoint(path) -> tuple[Decoder, dict, list]:
    blob = torch.load(Path(path), map_location="cpu", weights_only=False)
    cfg = DecoderConfig.from_dict(blob["config"])
    dec = Decoder(cfg)
    dec.load_state_dict(blob["state_dict"])
    dec.eval()
    return dec, blob["provenance"], blob.get("history", [])
