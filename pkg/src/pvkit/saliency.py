"""Class-discriminative saliency maps. Grad-CAM is the only shipped backend.

The backend is pluggable in principle; anything that produces a [0,1] map at
input resolution can feed the compositing step.
"""

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .errors import ShapeError
from .model_core import ModelBundle, _to_batch


@dataclass
class SaliencyMap:
    values: np.ndarray  # (h, w) in [0, 1]
    class_index: int
    backend: str
    # "logit" when gradients target the pre-activation score, else "posterior"
    target: str = "logit"

    def __post_init__(self):
        v = self.values
        if v.min() < 0 or v.max() > 1:
            raise ShapeError("saliency values outside [0, 1]")


def normalize_map(raw: np.ndarray) -> np.ndarray:
    """Divide a nonnegative map by its max; all-zero maps pass through as zero."""
    raw = np.asarray(raw, dtype=np.float64)
    if np.isnan(raw).any():
        raise ValueError("NaN in saliency map")
    if (raw < 0).any():
        raise ValueError("normalize_map expects a nonnegative array")
    peak = raw.max()
    if peak == 0:
        return np.zeros_like(raw)
    return raw / peak


def upsample_map(map_: np.ndarray, target: tuple[int, int]) -> np.ndarray:
    """Bilinear upsampling of a saliency map to the input's spatial shape."""
    map_ = np.asarray(map_, dtype=np.float32)
    th, tw = target
    if th < map_.shape[0] or tw < map_.shape[1]:
        raise ValueError("target must be >= source in both dimensions")
    t = torch.from_numpy(map_)[None, None]
    out = F.interpolate(t, size=(th, tw), mode="bilinear", align_corners=False)
    return out[0, 0].numpy().astype(np.float64)


def grad_cam(bundle: ModelBundle, x: np.ndarray, c: int) -> SaliencyMap:
    """Grad-CAM at the bundle's latent layer.

    Channel weights are the spatial means of d(score_c)/dA_k over the latent
    feature maps; the raw map is ReLU of the weighted channel sum, then
    upsampled to input resolution and normalized by its max. The score is the
    pre-activation logit for class c.
    """
    if not 0 <= c < bundle.n_classes:
        raise IndexError(f"class index {c} out of range [0, {bundle.n_classes})")
    batch, single = _to_batch(x, bundle.input_shape)
    if not single:
        raise ShapeError("grad_cam takes a single image")
    clf = bundle.classifier
    with bundle.gradient_lock:
        latent = clf.features_to(batch, bundle.latent_layer_id)
        latent = latent.detach().requires_grad_(True)
        logits = clf.logits_from(latent, bundle.latent_layer_id)
        score = logits[0, c]
        grads, = torch.autograd.grad(score, latent)
    weights = grads.mean(dim=(2, 3))  # (1, d)
    raw = torch.relu((weights[:, :, None, None] * latent.detach()).sum(dim=1))
    raw = raw[0].numpy()
    up = upsample_map(raw, bundle.input_shape)
    return SaliencyMap(values=normalize_map(up), class_index=c, backend="grad_cam")


def to_png_bytes(m: SaliencyMap) -> bytes:
    """8-bit grayscale PNG encoding, value = round(255 * m)."""
    from io import BytesIO

    from PIL import Image

    arr = np.round(m.values * 255).astype(np.uint8)
    buf = BytesIO()
    Image.fromarray(arr, mode="L").save(buf, format="PNG")
    return buf.getvalue()
