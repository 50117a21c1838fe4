"""Decoder training losses: pixel MSE, structural similarity, and latent-space
similarity (DSIM), combined as a convex-weighted sum.

Two normalization modes exist because the loss definitions are raw sums over
batch and pixels, which at full image scale would let the MSE term dwarf the
bounded SSIM term. "paper_sum" is the literal sum; "mean" divides each
component by its element count and is the training default. The mode is
recorded in every LossReport.
"""

import json
import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ProvenanceError, ShapeError

PAPER_SUM = "paper_sum"
MEAN = "mean"
_MODES = (PAPER_SUM, MEAN)

_CHANNELS = {"R": 0, "G": 1, "B": 2}

SSIM_K1 = 0.01
SSIM_K2 = 0.03


@dataclass(frozen=True)
class LossWeights:
    alpha_mse: float
    alpha_ssim: float
    alpha_dsim: float

    def __post_init__(self):
        a = (self.alpha_mse, self.alpha_ssim, self.alpha_dsim)
        if any(w < 0 for w in a):
            raise ValueError(f"loss weights must be nonnegative, got {a}")
        if abs(sum(a) - 1.0) > 1e-9:
            raise ValueError(f"loss weights must sum to 1, got sum {sum(a)!r}")

    @classmethod
    def default(cls) -> "LossWeights":
        return cls(0.2, 0.4, 0.4)


@dataclass
class LossReport:
    mse: float
    ssim_loss: float
    dsim: float
    composite: float
    normalization_mode: str
    batch_size: int

    def to_json_line(self, step: int | None = None) -> str:
        rec = {
            "mse": self.mse,
            "ssim_loss": self.ssim_loss,
            "dsim": self.dsim,
            "composite": self.composite,
            "mode": self.normalization_mode,
        }
        if step is not None:
            rec = {"step": step, **rec}
        return json.dumps(rec)


def _as_batch_t(x) -> torch.Tensor:
    """Accept (h,w,3) / (b,h,w,3) numpy or torch, return (b,h,w,3) tensor."""
    t = x if isinstance(x, torch.Tensor) else torch.as_tensor(np.asarray(x))
    if t.ndim == 3:
        t = t[None]
    if t.ndim != 4 or t.shape[-1] != 3:
        raise ShapeError(f"expected (b, h, w, 3) image batch, got {tuple(t.shape)}")
    return t


def _check_mode(mode: str):
    if mode not in _MODES:
        raise ValueError(f"normalization mode must be one of {_MODES}, got {mode!r}")


def mse_loss(X, Y, mode: str = PAPER_SUM):
    """Squared-error reconstruction loss between image batches."""
    _check_mode(mode)
    X, Y = _as_batch_t(X), _as_batch_t(Y)
    if X.shape != Y.shape:
        raise ShapeError(f"shape mismatch: {tuple(X.shape)} vs {tuple(Y.shape)}")
    total = ((Y - X) ** 2).sum()
    if mode == MEAN:
        total = total / X.numel()
    return total if total.requires_grad else float(total)


def _gaussian_window(size: int, sigma: float, dtype, device) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2 * sigma ** 2))
    g = g / g.sum()
    return (g[:, None] * g[None, :])[None, None]  # (1,1,size,size)


def ssim_index(x, y, channel: str = "R", window_size: int = 11,
               sigma: float = 1.5):
    """Mean local SSIM over one color channel of a single image pair.

    Gaussian-weighted 11x11 windows, stability constants C1=(K1*L)^2 and
    C2=(K2*L)^2 with dynamic range L=1. Shrinking the window below the image
    size must be done explicitly via window_size.
    """
    if channel not in _CHANNELS:
        raise ValueError(f"channel must be one of R, G, B, got {channel!r}")
    X, Y = _as_batch_t(x), _as_batch_t(y)
    if X.shape != Y.shape:
        raise ShapeError(f"shape mismatch: {tuple(X.shape)} vs {tuple(Y.shape)}")
    c = _CHANNELS[channel]
    val = _ssim_channel(X[..., c], Y[..., c], window_size, sigma).mean()
    return val if val.requires_grad else float(val)


def _ssim_channel(px: torch.Tensor, py: torch.Tensor, window_size: int,
                  sigma: float) -> torch.Tensor:
    """Per-image mean SSIM for (b, h, w) single-channel planes."""
    if px.shape[1] < window_size or px.shape[2] < window_size:
        raise ValueError(
            f"image {tuple(px.shape[1:])} smaller than SSIM window {window_size}; "
            "pass a smaller window_size explicitly")
    dtype = px.dtype if px.is_floating_point() else torch.float64
    px, py = px.to(dtype), py.to(dtype)
    w = _gaussian_window(window_size, sigma, dtype, px.device)
    px, py = px[:, None], py[:, None]
    mu_x = F.conv2d(px, w)
    mu_y = F.conv2d(py, w)
    var_x = F.conv2d(px * px, w) - mu_x ** 2
    var_y = F.conv2d(py * py, w) - mu_y ** 2
    cov = F.conv2d(px * py, w) - mu_x * mu_y
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2))
    return ssim_map.mean(dim=(1, 2, 3))


def ssim_loss(X, Y, mode: str = PAPER_SUM, window_size: int = 11,
              sigma: float = 1.5):
    """Negated SSIM summed over batch and the three color channels.

    Perfect reconstruction scores -3b in paper_sum mode and -1 in mean mode.
    """
    _check_mode(mode)
    Xb, Yb = _as_batch_t(X), _as_batch_t(Y)
    if Xb.shape != Yb.shape:
        raise ShapeError(f"shape mismatch: {tuple(Xb.shape)} vs {tuple(Yb.shape)}")
    total = 0.0
    for c in range(3):
        total = total - _ssim_channel(Xb[..., c], Yb[..., c], window_size, sigma).sum()
    if mode == MEAN:
        total = total / (3 * Xb.shape[0])
    return total if isinstance(total, torch.Tensor) and total.requires_grad else float(total)


def dsim_loss(enc, Y, Z, mode: str = PAPER_SUM):
    """Squared L2 distance between the reconstruction's latent and the original.

    Gradients flow through the encoder into Y, but encoder weights stay frozen
    (they are excluded from any optimizer and have requires_grad disabled).
    Z must carry the encoder's weight digest.
    """
    _check_mode(mode)
    from .model_core import LatentTensor

    if isinstance(Z, LatentTensor):
        if Z.source_digest != enc.weight_digest:
            raise ProvenanceError(
                "latent batch was produced by a different encoder "
                f"({Z.source_digest[:12]} vs {enc.weight_digest[:12]})")
        zv = torch.as_tensor(Z.values)
    else:
        zv = Z if isinstance(Z, torch.Tensor) else torch.as_tensor(np.asarray(Z))
    if zv.ndim == 3:
        zv = zv[None]
    Yb = _as_batch_t(Y)
    enc_dtype = next(enc.bundle.classifier.parameters()).dtype
    yt = Yb.permute(0, 3, 1, 2).to(enc_dtype)
    with enc.bundle.gradient_lock:
        ey = enc.forward_t(yt)
    ey = ey.permute(0, 2, 3, 1)  # back to channel-last to match latent layout
    if ey.shape != zv.shape:
        raise ShapeError(f"latent shape mismatch: {tuple(ey.shape)} vs {tuple(zv.shape)}")
    total = ((ey - zv.to(ey.dtype)) ** 2).sum()
    if mode == MEAN:
        total = total / ey.numel()
    return total if total.requires_grad else float(total)


def composite_loss(w: LossWeights, components):
    """Weighted sum of (mse, ssim_loss, dsim); exactly linear in both."""
    mse, ssim, dsim = components
    return w.alpha_mse * mse + w.alpha_ssim * ssim + w.alpha_dsim * dsim


def make_report(w: LossWeights, mse: float, ssim: float, dsim: float,
                mode: str, batch_size: int) -> LossReport:
    return LossReport(
        mse=float(mse), ssim_loss=float(ssim), dsim=float(dsim),
        composite=float(composite_loss(w, (mse, ssim, dsim))),
        normalization_mode=mode, batch_size=batch_size)
