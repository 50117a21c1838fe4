"""Frozen classifier wrapper: prediction, encoder truncation, latent extraction.

The classifier under inspection is never trained or mutated here. A weight
digest is taken at load time; callers can re-check it at any point to prove
the model is untouched. Gradient-recording operations (saliency, DSIM) must
hold the bundle's exclusivity lock.
"""

import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .digests import digest_module
from .errors import ConfigurationError, ModelLoadError, ShapeError


class ConvStackClassifier(nn.Module):
    """Plain convolutional classifier built from a JSON descriptor.

    Layers are an ordered stack of 3x3 conv blocks (conv -> optional batch
    norm -> ReLU), followed by global average pooling, a linear layer and a
    per-class activation. Multi-label heads use sigmoid so posteriors are
    independent; single-label heads use softmax.
    """

    def __init__(self, descriptor: dict):
        super().__init__()
        self.descriptor = descriptor
        self.layer_ids = [spec["id"] for spec in descriptor["layers"]]
        if len(set(self.layer_ids)) != len(self.layer_ids):
            raise ConfigurationError("duplicate layer ids in descriptor")
        blocks = {}
        in_ch = 3
        for spec in descriptor["layers"]:
            mods = [nn.Conv2d(in_ch, spec["out_channels"], kernel_size=3,
                              stride=spec.get("stride", 1), padding=1)]
            if spec.get("batch_norm", False):
                mods.append(nn.BatchNorm2d(spec["out_channels"]))
            act = spec.get("activation", "relu")
            if act == "relu":
                mods.append(nn.ReLU())
            elif act != "linear":
                raise ConfigurationError(f"unknown activation: {act}")
            blocks[spec["id"]] = nn.Sequential(*mods)
            in_ch = spec["out_channels"]
        self.blocks = nn.ModuleDict(blocks)
        n_classes = len(descriptor["class_names"])
        self.fc = nn.Linear(in_ch, n_classes)
        self.head = descriptor.get("head", "sigmoid")
        if self.head not in ("sigmoid", "softmax"):
            raise ConfigurationError(f"unknown head activation: {self.head}")

    def features_to(self, x: torch.Tensor, layer_id: str) -> torch.Tensor:
        """Run the conv stack up to and including ``layer_id``."""
        for lid in self.layer_ids:
            x = self.blocks[lid](x)
            if lid == layer_id:
                return x
        raise ConfigurationError(f"layer '{layer_id}' not in descriptor")

    def logits_from(self, latent: torch.Tensor, layer_id: str) -> torch.Tensor:
        """Finish the forward pass from the activations at ``layer_id``."""
        seen = False
        x = latent
        for lid in self.layer_ids:
            if seen:
                x = self.blocks[lid](x)
            if lid == layer_id:
                seen = True
        if not seen:
            raise ConfigurationError(f"layer '{layer_id}' not in descriptor")
        x = x.mean(dim=(2, 3))
        return self.fc(x)

    def activate(self, logits: torch.Tensor) -> torch.Tensor:
        if self.head == "sigmoid":
            return torch.sigmoid(logits)
        return torch.softmax(logits, dim=-1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for lid in self.layer_ids:
            x = self.blocks[lid](x)
        x = x.mean(dim=(2, 3))
        return self.activate(self.fc(x))


@dataclass
class ClassScores:
    """Per-class posteriors; independent probabilities for multi-label heads."""

    posteriors: np.ndarray

    def top_class(self) -> int:
        # argmax; numpy breaks ties by lowest index, which is the documented rule
        return int(np.argmax(self.posteriors))


@dataclass
class LatentTensor:
    values: np.ndarray  # (h~, w~, d), channel-last
    source_digest: str

    def __post_init__(self):
        if not np.isfinite(self.values).all():
            raise ShapeError("latent contains non-finite values")


@dataclass
class ModelBundle:
    classifier: ConvStackClassifier
    class_names: list[str]
    latent_layer_id: str
    input_shape: tuple[int, int]  # (h, w)
    weight_digest: str
    # gradient-recording ops (Grad-CAM, DSIM) must hold this lock
    gradient_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def current_digest(self) -> str:
        return digest_module(self.classifier)

    def assert_unmodified(self):
        now = self.current_digest()
        if now != self.weight_digest:
            raise ModelLoadError(
                f"classifier weights changed: {self.weight_digest[:12]} -> {now[:12]}")


def new_classifier(descriptor: dict, seed: int = 0) -> ConvStackClassifier:
    """Fresh classifier with seeded initialization (used to create weight files)."""
    torch.manual_seed(seed)
    model = ConvStackClassifier(descriptor)
    model.eval()
    return model


def load_descriptor(source) -> dict:
    if isinstance(source, dict):
        return source
    return json.loads(Path(source).read_text())


def load_classifier(weights_source, arch_descriptor) -> ModelBundle:
    """Load a frozen classifier from a checkpoint plus its descriptor.

    The returned bundle is in evaluation mode (frozen normalization stats, no
    stochastic layers) so every inference is deterministic and repeatable.
    """
    descriptor = load_descriptor(arch_descriptor)
    path = Path(weights_source)
    if not path.exists():
        raise ModelLoadError(f"weights file not found: {path}")
    model = ConvStackClassifier(descriptor)
    state = torch.load(path, map_location="cpu", weights_only=True)
    try:
        model.load_state_dict(state, strict=True)
    except RuntimeError as exc:
        raise ModelLoadError(f"weights do not match descriptor: {exc}") from exc
    latent_id = descriptor["latent_layer_id"]
    if latent_id not in model.layer_ids:
        raise ConfigurationError(f"latent_layer_id '{latent_id}' not present in layer list")
    model.eval()
    for p in model.parameters():
        p.requires_grad_(False)
    return ModelBundle(
        classifier=model,
        class_names=list(descriptor["class_names"]),
        latent_layer_id=latent_id,
        input_shape=tuple(descriptor["input_shape"]),
        weight_digest=digest_module(model),
    )


def _to_batch(x: np.ndarray, input_shape: tuple[int, int]) -> tuple[torch.Tensor, bool]:
    """(h,w,3) or (b,h,w,3) numpy in [0,1] -> NCHW float tensor."""
    arr = np.asarray(x, dtype=np.float32)
    single = arr.ndim == 3
    if single:
        arr = arr[None]
    if arr.ndim != 4 or arr.shape[3] != 3 or arr.shape[1:3] != tuple(input_shape):
        raise ShapeError(
            f"expected image of shape {tuple(input_shape) + (3,)}, got {x.shape}")
    return torch.from_numpy(np.transpose(arr, (0, 3, 1, 2))).contiguous(), single


class Encoder:
    """Truncation of the classifier at the latent layer (shared weights)."""

    def __init__(self, bundle: ModelBundle):
        self.bundle = bundle
        self.latent_layer_id = bundle.latent_layer_id
        self.weight_digest = bundle.weight_digest

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        h, w = self.bundle.input_shape
        with torch.no_grad():
            z = self.forward_t(torch.zeros(1, 3, h, w))
        return (z.shape[2], z.shape[3], z.shape[1])

    def forward_t(self, x: torch.Tensor) -> torch.Tensor:
        """Torch-level forward (keeps the autograd graph when enabled)."""
        return self.bundle.classifier.features_to(x, self.latent_layer_id)

    def __call__(self, x: np.ndarray) -> LatentTensor:
        return encode(self, x)


def truncate_encoder(bundle: ModelBundle) -> Encoder:
    return Encoder(bundle)


def encode(enc: Encoder, x: np.ndarray) -> LatentTensor:
    batch, single = _to_batch(x, enc.bundle.input_shape)
    with torch.no_grad():
        z = enc.forward_t(batch)
    vals = np.transpose(z.numpy(), (0, 2, 3, 1))
    if single:
        vals = vals[0]
    return LatentTensor(values=vals, source_digest=enc.weight_digest)


def predict(bundle: ModelBundle, x: np.ndarray) -> ClassScores:
    batch, single = _to_batch(x, bundle.input_shape)
    with torch.no_grad():
        scores = bundle.classifier(batch).numpy()
    return ClassScores(posteriors=scores[0] if single else scores)


def prediction_set(scores: ClassScores, threshold: float = 0.5) -> set[int]:
    """Classes whose posterior meets the threshold (inclusive)."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    post = np.asarray(scores.posteriors)
    return {int(i) for i in np.nonzero(post >= threshold)[0]}
