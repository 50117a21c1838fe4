"""HTTP facade for the workbench UI.

Reads (sample listing, assets) are served concurrently from the cache;
explanation jobs are funneled through a single worker lock because gradient
recording requires exclusive model access. Assets are content-addressed PNGs,
so repeated requests for the same (sample, class) hit the same bytes.
"""

import json
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse
from pydantic import BaseModel

from . import compose, saliency
from .data import load_manifest, partition_by_outcome, preprocess
from .decoder import load_checkpoint
from .digests import digest_bytes, digest_module
from .errors import StageError
from .model_core import load_classifier, predict, prediction_set, truncate_encoder


@dataclass
class ServiceConfig:
    model_weights: str
    descriptor: str
    decoder_checkpoint: str
    dataset_root: str
    asset_dir: str = "assets"
    threshold: float = 0.5
    host: str = "127.0.0.1"
    port: int = 8000

    @classmethod
    def load(cls, path) -> "ServiceConfig":
        cfg = json.loads(Path(path).read_text())
        cfg = {k: v for k, v in cfg.items() if k in cls.__dataclass_fields__}
        env = {
            "model_weights": "PVKIT_MODEL",
            "decoder_checkpoint": "PVKIT_DECODER",
            "dataset_root": "PVKIT_DATASET",
            "asset_dir": "PVKIT_ASSETS",
            "port": "PVKIT_PORT",
        }
        for key, var in env.items():
            if os.environ.get(var):
                cfg[key] = int(os.environ[var]) if key == "port" else os.environ[var]
        return cls(**cfg)


class ExplainRequest(BaseModel):
    sample_id: str
    class_index: int | None = None


class WorkbenchContext:
    """Loaded model, decoder, dataset, and the explanation job cache."""

    def __init__(self, cfg: ServiceConfig):
        self.cfg = cfg
        self.bundle = load_classifier(cfg.model_weights, cfg.descriptor)
        self.encoder = truncate_encoder(self.bundle)
        self.decoder, self.dec_provenance, _ = load_checkpoint(cfg.decoder_checkpoint)
        self.manifest = load_manifest(cfg.dataset_root)
        self.asset_dir = Path(cfg.asset_dir)
        self.asset_dir.mkdir(parents=True, exist_ok=True)
        self.jobs: dict[str, dict] = {}
        self.job_keys: dict[tuple, str] = {}
        self.worker_lock = threading.Lock()
        self.sample_info: dict[str, dict] = {}
        self.partition = None

    def evaluate_samples(self):
        """Run predictions over the whole manifest; fills the outcome partition."""
        self.partition = partition_by_outcome(self.bundle, self.manifest,
                                              self.cfg.threshold)
        for s in self.manifest.samples:
            x = preprocess(s.image_path, self.bundle.input_shape)
            scores = predict(self.bundle, x)
            pset = prediction_set(scores, self.cfg.threshold)
            self.sample_info[s.sample_id] = {
                "sample_id": s.sample_id,
                "outcome": self.partition.outcome_of(s.sample_id),
                "targets": sorted(s.targets),
                "top_class": scores.top_class(),
                "prediction_set": sorted(pset),
            }

    def _store_asset(self, data: bytes) -> str:
        digest = digest_bytes(data)
        path = self.asset_dir / f"{digest}.png"
        if not path.exists():
            path.write_bytes(data)
        return digest

    def run_explanation(self, sample_id: str, class_index: int | None) -> dict:
        try:
            sample = self.manifest.by_id(sample_id)
        except KeyError:
            raise HTTPException(404, f"unknown sample: {sample_id}")
        if class_index is not None and not 0 <= class_index < self.bundle.n_classes:
            raise HTTPException(422, f"invalid class index: {class_index}")

        with self.worker_lock:
            x = preprocess(sample.image_path, self.bundle.input_shape)
            if class_index is None:
                class_index = predict(self.bundle, x).top_class()
            key = (sample_id, class_index)
            if key in self.job_keys:
                return self.jobs[self.job_keys[key]]

            job_id = digest_bytes(
                f"{sample_id}:{class_index}:{self.bundle.weight_digest}"
                f":{digest_module(self.decoder)}".encode())[:16]
            job = {"id": job_id, "sample_id": sample_id,
                   "class_index": class_index, "status": "running",
                   "assets": {}, "scores": None, "error": None}
            self.jobs[job_id] = job
            self.job_keys[key] = job_id
            try:
                record = compose.explain(
                    self.bundle, self.encoder, self.decoder, x,
                    c=class_index, sample_id=sample_id,
                    threshold=self.cfg.threshold, targets=sample.targets)
                job["assets"] = {
                    "input": self._store_asset(compose.png_bytes(record.input_image)),
                    "saliency": self._store_asset(saliency.to_png_bytes(record.saliency)),
                    "reconstruction": self._store_asset(
                        compose.png_bytes(record.reconstruction.values)),
                    "pv": self._store_asset(compose.png_bytes(record.pv.values)),
                    "panel": self._store_asset(compose.png_bytes_from_image(
                        compose.render_panel(record, class_names=self.manifest.class_names))),
                }
                job["scores"] = [float(v) for v in record.scores.posteriors]
                job["status"] = "done"
            except StageError as exc:
                job["status"] = "failed"
                job["error"] = str(exc)
                raise HTTPException(500, f"explanation failed at {exc.stage}: {exc}")
            return job


def _job_payload(job: dict) -> dict:
    out = dict(job)
    out["asset_urls"] = {k: f"/assets/{d}.png" for k, d in job["assets"].items()}
    return out


def create_app(ctx: WorkbenchContext | None) -> FastAPI:
    app = FastAPI(title="pvkit workbench")

    def require_ctx() -> WorkbenchContext:
        if ctx is None:
            raise HTTPException(503, "model not loaded")
        return ctx

    @app.get("/api/classes")
    def classes():
        return require_ctx().manifest.class_names

    @app.get("/api/samples")
    def samples(outcome: str | None = None,
                cls: str | None = Query(None, alias="class"),
                page: int = 0, page_size: int = 24):
        c = require_ctx()
        if not c.sample_info:
            c.evaluate_samples()
        items = list(c.sample_info.values())
        if outcome is not None:
            if outcome not in ("correct", "incorrect", "mixed"):
                raise HTTPException(400, f"unknown outcome filter: {outcome}")
            items = [s for s in items if s["outcome"] == outcome]
        if cls is not None:
            names = c.manifest.class_names
            if cls.isdigit():
                ci = int(cls)
            elif cls in names:
                ci = names.index(cls)
            else:
                raise HTTPException(400, f"unknown class filter: {cls}")
            if not 0 <= ci < len(names):
                raise HTTPException(400, f"unknown class filter: {cls}")
            items = [s for s in items
                     if ci in s["targets"] or ci in s["prediction_set"]]
        items.sort(key=lambda s: s["sample_id"])
        total = len(items)
        start = page * page_size
        return {"items": items[start:start + page_size], "total": total,
                "page": page, "page_size": page_size}

    @app.post("/api/explanations")
    def post_explanation(req: ExplainRequest):
        c = require_ctx()
        return _job_payload(c.run_explanation(req.sample_id, req.class_index))

    @app.get("/api/explanations/{job_id}")
    def get_explanation(job_id: str):
        c = require_ctx()
        job = c.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job: {job_id}")
        return _job_payload(job)

    @app.get("/assets/{name}")
    def asset(name: str):
        c = require_ctx()
        path = (c.asset_dir / name).resolve()
        if path.parent != c.asset_dir.resolve() or not path.exists():
            raise HTTPException(404, "no such asset")
        return FileResponse(path, media_type="image/png")

    return app


def serve(cfg: ServiceConfig):
    import uvicorn

    ctx = WorkbenchContext(cfg)
    ctx.evaluate_samples()
    uvicorn.run(create_app(ctx), host=cfg.host, port=cfg.port)
