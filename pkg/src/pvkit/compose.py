"""Compositing of saliency mask and reconstruction into the final explanation.

The rule is a pixelwise convex combination of a white canvas and the
reconstruction, weighted by the saliency mask:

    p(i,j,k) = (1 - m(i,j)) + m(i,j) * y(i,j,k)

Regions the model ignores (m=0) render white; fully salient regions (m=1)
show the reconstruction untouched. All math stays in floating point;
quantization to 8 bits happens only when writing PNGs.
"""

from dataclasses import dataclass
from io import BytesIO

import numpy as np
from PIL import Image, ImageDraw

from .data import OutcomePartition
from .decoder import Decoder, Reconstruction, decode
from .digests import digest_array
from .errors import ShapeError, StageError
from .model_core import (ClassScores, Encoder, ModelBundle, encode, predict,
                         prediction_set)
from .saliency import SaliencyMap, grad_cam


@dataclass
class PVExplanation:
    values: np.ndarray  # (h, w, 3) in [0, 1]
    class_index: int
    saliency_ref: str
    reconstruction_ref: str
    sample_id: str = ""


@dataclass
class ExplanationRecord:
    sample_id: str
    input_image: np.ndarray
    scores: ClassScores
    top_class: int
    targets: frozenset[int]
    saliency: SaliencyMap
    reconstruction: Reconstruction
    pv: PVExplanation
    outcome: str = ""  # correct / incorrect / mixed, when a partition is known


def compose_pv(m: SaliencyMap, y: Reconstruction,
               sample_id: str = "") -> PVExplanation:
    mv = np.asarray(m.values, dtype=np.float64)
    yv = np.asarray(y.values, dtype=np.float64)
    if mv.shape != yv.shape[:2]:
        raise ShapeError(f"saliency {mv.shape} does not align with image {yv.shape}")
    p = (1.0 - mv)[:, :, None] + mv[:, :, None] * yv
    return PVExplanation(values=p, class_index=m.class_index,
                         saliency_ref=digest_array(mv),
                         reconstruction_ref=digest_array(yv),
                         sample_id=sample_id)


def explain(bundle: ModelBundle, enc: Encoder, dec: Decoder, x: np.ndarray,
            c: int | None = None, sample_id: str = "",
            threshold: float = 0.5,
            targets: frozenset[int] = frozenset()) -> ExplanationRecord:
    """Full pipeline for one image: predict, encode, saliency, decode, compose.

    c defaults to the top predicted class. Component failures are re-raised
    with the stage that produced them.
    """
    def stage(name, fn):
        try:
            return fn()
        except Exception as exc:
            raise StageError(name, exc) from exc

    scores = stage("predict", lambda: predict(bundle, x))
    top = scores.top_class()
    cls = top if c is None else c
    if not 0 <= cls < bundle.n_classes:
        raise IndexError(f"class index {cls} out of range")
    m = stage("saliency", lambda: grad_cam(bundle, x, cls))
    z = stage("encode", lambda: encode(enc, x))
    y = stage("decode", lambda: decode(dec, z))
    pv = stage("compose", lambda: compose_pv(m, y, sample_id))

    outcome = ""
    if targets:
        pred = prediction_set(scores, threshold)
        if pred == set(targets):
            outcome = "correct"
        elif not pred & set(targets):
            outcome = "incorrect"
        else:
            outcome = "mixed"
    return ExplanationRecord(sample_id=sample_id, input_image=np.asarray(x),
                             scores=scores, top_class=top, targets=targets,
                             saliency=m, reconstruction=y, pv=pv,
                             outcome=outcome)


def to_image(arr: np.ndarray) -> Image.Image:
    """Quantize a [0,1] float image to an 8-bit PIL image."""
    return Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8))


def png_bytes(arr: np.ndarray) -> bytes:
    buf = BytesIO()
    to_image(arr).save(buf, format="PNG")
    return buf.getvalue()


def png_bytes_from_image(img: Image.Image) -> bytes:
    buf = BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


OVERLAY_OPACITY = 0.4
_CAPTION_H = 18


def saliency_overlay(x: np.ndarray, m: SaliencyMap) -> np.ndarray:
    """Input image with the saliency map blended on top at fixed 40% opacity,
    using the matplotlib 'jet' colormap."""
    from matplotlib import cm

    heat = cm.jet(m.values)[:, :, :3]
    alpha = OVERLAY_OPACITY * m.values[:, :, None]
    return (1 - alpha) * np.asarray(x) + alpha * heat


def render_panel(record: ExplanationRecord, layout: str = "triptych",
                 class_names: list[str] | None = None) -> Image.Image:
    """Raster figure for a record.

    'triptych' lays out input | saliency overlay | PV side by side with a
    caption strip; 'pv' is the bare explanation image.
    """
    if layout == "pv":
        return to_image(record.pv.values)
    if layout != "triptych":
        raise ValueError(f"unknown layout: {layout}")
    panes = [record.input_image,
             saliency_overlay(record.input_image, record.saliency),
             record.pv.values]
    h, w = record.input_image.shape[:2]
    canvas = Image.new("RGB", (3 * w, h + _CAPTION_H), "white")
    for i, pane in enumerate(panes):
        canvas.paste(to_image(pane), (i * w, 0))
    cname = (class_names[record.pv.class_index]
             if class_names else str(record.pv.class_index))
    draw = ImageDraw.Draw(canvas)
    draw.text((2, h + 3), f"{record.sample_id}  input | saliency | pv  class={cname}",
              fill="black")
    return canvas
