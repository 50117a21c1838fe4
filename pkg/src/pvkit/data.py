"""Multi-label dataset loading, preprocessing, and outcome partitioning.

Dataset layout on disk:
    root/images/*            image files
    root/annotations.jsonl   one record per sample: {"id", "file", "labels": [names]}
    root/classes.txt         ordered class names, one per line
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .digests import digest_bytes
from .errors import IngestionError
from .model_core import ModelBundle, predict, prediction_set


@dataclass(frozen=True)
class Sample:
    sample_id: str
    image_path: Path
    targets: frozenset[int]  # class indices
    split: str = "train"


@dataclass
class DatasetManifest:
    root: Path
    samples: list[Sample]
    class_names: list[str]

    def __post_init__(self):
        ids = [s.sample_id for s in self.samples]
        if len(set(ids)) != len(ids):
            raise IngestionError("duplicate sample ids in manifest")

    def by_id(self, sample_id: str) -> Sample:
        for s in self.samples:
            if s.sample_id == sample_id:
                return s
        raise KeyError(sample_id)

    def split(self, tag: str) -> list[Sample]:
        return [s for s in self.samples if s.split == tag]

    def digest(self) -> str:
        payload = json.dumps([
            [s.sample_id, str(s.image_path.relative_to(self.root)),
             sorted(s.targets), s.split]
            for s in self.samples] + [self.class_names])
        return digest_bytes(payload.encode())


@dataclass
class OutcomePartition:
    correct: list[str]
    incorrect: list[str]
    mixed: list[str]
    threshold: float

    def outcome_of(self, sample_id: str) -> str:
        for name in ("correct", "incorrect", "mixed"):
            if sample_id in getattr(self, name):
                return name
        raise KeyError(sample_id)

    @property
    def all_ids(self) -> list[str]:
        return self.correct + self.incorrect + self.mixed


def load_manifest(root) -> DatasetManifest:
    root = Path(root)
    ann_path = root / "annotations.jsonl"
    classes_path = root / "classes.txt"
    if not ann_path.exists() or not classes_path.exists():
        raise IngestionError(f"{root} must contain annotations.jsonl and classes.txt")
    class_names = [ln.strip() for ln in classes_path.read_text().splitlines() if ln.strip()]
    name_to_idx = {n: i for i, n in enumerate(class_names)}

    samples = []
    problems = []
    seen = set()
    for lineno, line in enumerate(ann_path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        rec = json.loads(line)
        sid = rec["id"]
        if sid in seen:
            problems.append(f"duplicate id '{sid}' (line {lineno})")
            continue
        seen.add(sid)
        img = root / "images" / rec["file"]
        if not img.exists():
            problems.append(f"sample '{sid}': missing image {rec['file']}")
            continue
        try:
            targets = frozenset(name_to_idx[n] for n in rec["labels"])
        except KeyError as exc:
            problems.append(f"sample '{sid}': unknown label {exc}")
            continue
        samples.append(Sample(sample_id=sid, image_path=img, targets=targets,
                              split=rec.get("split", "train")))
    if problems:
        raise IngestionError("manifest errors: " + "; ".join(problems))
    samples.sort(key=lambda s: s.sample_id)
    return DatasetManifest(root=root, samples=samples, class_names=class_names)


def preprocess(image_file, target_shape: tuple[int, int] = (224, 224)) -> np.ndarray:
    """Decode, center-crop to square, resize, scale to [0,1].

    Grayscale files are promoted to 3 channels by replication.
    """
    try:
        img = Image.open(image_file)
        img.load()
    except Exception as exc:
        raise IngestionError(f"cannot decode image {image_file}: {exc}") from exc
    img = img.convert("RGB")
    w, h = img.size
    side = min(w, h)
    left = (w - side) // 2
    top = (h - side) // 2
    img = img.crop((left, top, left + side, top + side))
    th, tw = target_shape
    if img.size != (tw, th):
        img = img.resize((tw, th), Image.BILINEAR)
    return np.asarray(img, dtype=np.float64) / 255.0


def load_images(manifest: DatasetManifest, samples: list[Sample],
                input_shape: tuple[int, int]) -> np.ndarray:
    """Preprocessed image stack (b, h, w, 3) for a list of samples."""
    return np.stack([preprocess(s.image_path, input_shape) for s in samples])


def partition_by_outcome(bundle: ModelBundle, manifest: DatasetManifest,
                         threshold: float = 0.5,
                         samples: list[Sample] | None = None) -> OutcomePartition:
    """Split samples by how the prediction set relates to the target set.

    correct: prediction set equals targets. incorrect: no overlap at all
    (this includes an empty prediction set against non-empty targets).
    mixed: everything else.
    """
    correct, incorrect, mixed = [], [], []
    for s in samples if samples is not None else manifest.samples:
        x = preprocess(s.image_path, bundle.input_shape)
        pred = prediction_set(predict(bundle, x), threshold)
        if pred == set(s.targets):
            correct.append(s.sample_id)
        elif not pred & set(s.targets):
            incorrect.append(s.sample_id)
        else:
            mixed.append(s.sample_id)
    return OutcomePartition(correct=correct, incorrect=incorrect, mixed=mixed,
                            threshold=threshold)
