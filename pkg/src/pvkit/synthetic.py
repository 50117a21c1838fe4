"""Desk-scale synthetic dataset and reference classifier.

Full-scale experiments need a large pretrained backbone; everything in this
repo is instead verified on a small 10-class, 32x32 multi-label set of
colored shapes, with a 6-conv-layer classifier whose latent is (4, 4, 64).
"""

import json
from pathlib import Path

import numpy as np
import torch
from PIL import Image, ImageDraw

from .model_core import ConvStackClassifier, load_classifier, new_classifier

DESK_CLASSES = ["red-disc", "green-disc", "blue-disc", "yellow-disc",
                "red-box", "green-box", "blue-box", "yellow-box",
                "white-cross", "magenta-ring"]

_COLORS = {"red": (220, 40, 40), "green": (40, 200, 60), "blue": (50, 80, 230),
           "yellow": (230, 210, 40), "white": (240, 240, 240),
           "magenta": (220, 50, 200)}

# 6 conv layers, stride-2 downsampling x3: 32 -> 16 -> 8 -> 4, depth 64
DESK_DESCRIPTOR = {
    "name": "desk-conv6",
    "input_shape": [32, 32],
    "class_names": DESK_CLASSES,
    "latent_layer_id": "conv6",
    "head": "sigmoid",
    "layers": [
        {"id": "conv1", "out_channels": 16, "stride": 1},
        {"id": "conv2", "out_channels": 16, "stride": 2},
        {"id": "conv3", "out_channels": 32, "stride": 1},
        {"id": "conv4", "out_channels": 32, "stride": 2},
        {"id": "conv5", "out_channels": 64, "stride": 2},
        {"id": "conv6", "out_channels": 64, "stride": 1},
    ],
}


def _draw_shape(draw: ImageDraw.ImageDraw, cls: str, cx: int, cy: int, r: int):
    kind = cls.split("-")[1]
    color = _COLORS[cls.split("-")[0]]
    box = (cx - r, cy - r, cx + r, cy + r)
    if kind == "disc":
        draw.ellipse(box, fill=color)
    elif kind == "box":
        draw.rectangle(box, fill=color)
    elif kind == "cross":
        draw.line((cx - r, cy, cx + r, cy), fill=color, width=3)
        draw.line((cx, cy - r, cx, cy + r), fill=color, width=3)
    elif kind == "ring":
        draw.ellipse(box, outline=color, width=3)


def render_sample(labels: list[int], rng: np.random.Generator,
                  size: int = 32) -> np.ndarray:
    """One image containing the given shape classes at random positions."""
    bg = tuple(rng.integers(25, 45, 3).tolist())
    img = Image.new("RGB", (size, size), bg)
    draw = ImageDraw.Draw(img)
    for lbl in labels:
        r = int(rng.integers(7, 12))
        cx = int(rng.integers(r, size - r))
        cy = int(rng.integers(r, size - r))
        _draw_shape(draw, DESK_CLASSES[lbl], cx, cy, r)
    arr = np.asarray(img, dtype=np.float64)
    noise = rng.normal(0, 2, arr.shape)
    return np.clip((arr + noise) / 255.0, 0.0, 1.0)


def _draw_labels(rng: np.random.Generator) -> list[int]:
    # mostly single-label images; exact set match stays achievable while the
    # multi-label pathway is still exercised
    n_labels = int(rng.choice([1, 1, 1, 2, 2, 3]))
    return sorted(rng.choice(len(DESK_CLASSES), n_labels, replace=False).tolist())


def make_dataset(root, n: int, seed: int = 0, split: str = "train",
                 size: int = 32, append: bool = False):
    """Write a synthetic dataset in the standard on-disk layout."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    mode = "a" if append else "w"
    if not append:
        (root / "classes.txt").write_text("\n".join(DESK_CLASSES) + "\n")
    with open(root / "annotations.jsonl", mode) as f:
        for i in range(n):
            labels = _draw_labels(rng)
            arr = render_sample(labels, rng, size)
            sid = f"{split}-{seed:04d}-{i:05d}"
            fname = f"{sid}.png"
            Image.fromarray(np.round(arr * 255).astype(np.uint8)).save(
                root / "images" / fname)
            f.write(json.dumps({
                "id": sid, "file": fname, "split": split,
                "labels": [DESK_CLASSES[j] for j in labels]}) + "\n")


def images_in_memory(n: int, seed: int, size: int = 32) -> np.ndarray:
    """Image stack without touching disk (for loss/invariance checks)."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        out.append(render_sample(_draw_labels(rng), rng, size))
    return np.stack(out)


def train_desk_classifier(weights_path, seed: int = 0, n_images: int = 600,
                          epochs: int = 8, lr: float = 2e-3):
    """Train the reference classifier on synthetic data and save its weights.

    Accuracy only needs to be good enough that prediction outcomes split into
    correct / incorrect / mixed pools; this is a fixture, not an experiment.
    """
    torch.manual_seed(seed)
    model = new_classifier(DESK_DESCRIPTOR, seed)
    model.train()
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for _ in range(n_images):
        labels = _draw_labels(rng)
        xs.append(render_sample(labels, rng))
        y = np.zeros(len(DESK_CLASSES), dtype=np.float32)
        y[labels] = 1.0
        ys.append(y)
    X = torch.as_tensor(np.transpose(np.stack(xs), (0, 3, 1, 2)),
                        dtype=torch.float32)
    Y = torch.as_tensor(np.stack(ys))
    opt = torch.optim.Adam(model.parameters(), lr=lr)
    bce = torch.nn.BCELoss()
    for epoch in range(epochs):
        order = np.random.default_rng(seed + epoch).permutation(n_images)
        for start in range(0, n_images, 32):
            idx = order[start:start + 32]
            opt.zero_grad()
            loss = bce(model(X[idx]), Y[idx])
            loss.backward()
            opt.step()
    model.eval()
    weights_path = Path(weights_path)
    weights_path.parent.mkdir(parents=True, exist_ok=True)
    torch.save(model.state_dict(), weights_path)
    return weights_path


def desk_bundle(weights_path):
    return load_classifier(weights_path, DESK_DESCRIPTOR)
