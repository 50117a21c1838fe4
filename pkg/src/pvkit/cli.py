"""Batch entry points. Each subcommand is a thin mapping onto the library:
train, explain, report, quiz, eval, serve.

All subcommands read the same JSON config file (model/decoder/dataset paths,
training settings) and write their outputs under --out with a manifest.json
index. Exit codes: 0 success, 1 validation error, 2 runtime failure.
"""

import json
import sys
from pathlib import Path

import click
import numpy as np

from . import compose, evaluation, synthetic
from .data import load_images, load_manifest, partition_by_outcome, preprocess
from .decoder import DecoderConfig, build_decoder, load_checkpoint
from .errors import PvkitError
from .losses import LossWeights
from .model_core import load_classifier, predict, truncate_encoder
from .trainer import TrainConfig, evaluate_reconstruction, train_decoder


def _load_cfg(config_path) -> dict:
    return json.loads(Path(config_path).read_text())


def _load_stack(cfg: dict):
    bundle = load_classifier(cfg["model_weights"], cfg["descriptor"])
    enc = truncate_encoder(bundle)
    manifest = load_manifest(cfg["dataset_root"])
    return bundle, enc, manifest


def _load_decoder(cfg: dict):
    dec, provenance, _ = load_checkpoint(cfg["decoder_checkpoint"])
    return dec, provenance


def _write_manifest(out: Path, entries: dict):
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(entries, indent=2))


@click.group()
def cli():
    """Latent-inversion explanation toolkit."""


@cli.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--decoder-seed", default=0, show_default=True)
def train(config, out, decoder_seed):
    """Train an inversion decoder against the frozen classifier."""
    cfg = _load_cfg(config)
    bundle, enc, manifest = _load_stack(cfg)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tcfg = TrainConfig.from_dict({**cfg.get("train", {}),
                                  "dataset_id": manifest.digest()[:16]})
    images = load_images(manifest, manifest.split("train"), bundle.input_shape)
    dcfg = DecoderConfig.for_shapes(enc.latent_shape, (*bundle.input_shape, 3))
    dec = build_decoder(dcfg, decoder_seed)
    ckpt = train_decoder(tcfg, enc, dec, images,
                         log_path=out / "train_log.jsonl",
                         ssim_window=cfg.get("ssim_window", 11))
    ckpt.save(out / "decoder.pt")
    bundle.assert_unmodified()
    _write_manifest(out, {"decoder": "decoder.pt", "log": "train_log.jsonl",
                          "epochs": len(ckpt.history),
                          "final_composite": ckpt.history[-1].composite})
    click.echo(f"trained {tcfg.epochs} epochs, "
               f"final composite {ckpt.history[-1].composite:.4f}")


def _explain_record(cfg, bundle, enc, dec, manifest, sample_id, class_index):
    sample = manifest.by_id(sample_id)
    x = preprocess(sample.image_path, bundle.input_shape)
    return compose.explain(bundle, enc, dec, x, c=class_index,
                           sample_id=sample_id,
                           threshold=cfg.get("threshold", 0.5),
                           targets=sample.targets)


@cli.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--sample", "sample_id", required=True)
@click.option("--class-index", "class_index", type=int, default=None,
              help="Target class; defaults to the top predicted class.")
def explain(config, out, sample_id, class_index):
    """Explain one sample: panel PNG plus a JSON record."""
    cfg = _load_cfg(config)
    bundle, enc, manifest = _load_stack(cfg)
    dec, _ = _load_decoder(cfg)
    record = _explain_record(cfg, bundle, enc, dec, manifest, sample_id, class_index)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    panel = compose.render_panel(record, class_names=manifest.class_names)
    panel.save(out / f"{sample_id}_panel.png")
    compose.to_image(record.pv.values).save(out / f"{sample_id}_pv.png")
    rec = {
        "sample_id": sample_id,
        "class_index": record.pv.class_index,
        "top_class": record.top_class,
        "posteriors": [float(v) for v in record.scores.posteriors],
        "targets": sorted(record.targets),
        "outcome": record.outcome,
        "saliency_ref": record.pv.saliency_ref,
        "reconstruction_ref": record.pv.reconstruction_ref,
    }
    (out / f"{sample_id}_record.json").write_text(json.dumps(rec, indent=2))
    _write_manifest(out, {"panel": f"{sample_id}_panel.png",
                          "pv": f"{sample_id}_pv.png",
                          "record": f"{sample_id}_record.json"})
    click.echo(f"explained {sample_id} for class {record.pv.class_index}")


@cli.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--outcome", type=click.Choice(["correct", "incorrect", "mixed"]),
              default=None)
@click.option("--limit", default=20, show_default=True)
def report(config, out, outcome, limit):
    """HTML gallery over the outcome partition (input | saliency | PV rows)."""
    cfg = _load_cfg(config)
    bundle, enc, manifest = _load_stack(cfg)
    dec, _ = _load_decoder(cfg)
    partition = partition_by_outcome(bundle, manifest, cfg.get("threshold", 0.5))
    ids = getattr(partition, outcome) if outcome else partition.all_ids
    ids = ids[:limit]
    out = Path(out)
    (out / "panels").mkdir(parents=True, exist_ok=True)
    rows = []
    for sid in ids:
        record = _explain_record(cfg, bundle, enc, dec, manifest, sid, None)
        fname = f"panels/{sid}.png"
        compose.render_panel(record, class_names=manifest.class_names).save(out / fname)
        rows.append(
            f"<tr><td>{sid}</td><td>{record.outcome}</td>"
            f"<td>{manifest.class_names[record.top_class]}</td>"
            f"<td><img src='{fname}'></td></tr>")
    html = ("<html><body><h1>Explanation gallery</h1>"
            "<table border=1><tr><th>sample</th><th>outcome</th>"
            "<th>top class</th><th>input | saliency | PV</th></tr>"
            + "".join(rows) + "</table></body></html>")
    (out / "report.html").write_text(html)
    _write_manifest(out, {"report": "report.html", "rows": len(rows)})
    click.echo(f"wrote gallery with {len(rows)} rows")


@cli.command()
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--n-correct", default=16, show_default=True)
@click.option("--n-incorrect", default=14, show_default=True)
@click.option("--seed", default=0, show_default=True)
def quiz(config, out, n_correct, n_incorrect, seed):
    """Build the simulatability quiz: question JSON plus panel assets."""
    cfg = _load_cfg(config)
    bundle, enc, manifest = _load_stack(cfg)
    dec, _ = _load_decoder(cfg)
    partition = partition_by_outcome(bundle, manifest, cfg.get("threshold", 0.5))
    predictions = {}
    for s in manifest.samples:
        x = preprocess(s.image_path, bundle.input_shape)
        top = predict(bundle, x).top_class()
        predictions[s.sample_id] = (manifest.class_names[top],
                                    [manifest.class_names[i] for i in sorted(s.targets)])
    out = Path(out)
    (out / "assets").mkdir(parents=True, exist_ok=True)
    questions = evaluation.build_quiz(partition, predictions,
                                      manifest.class_names, n_correct,
                                      n_incorrect, seed)
    digests = {}
    for q in questions:
        record = _explain_record(cfg, bundle, enc, dec, manifest, q.sample_id, None)
        data = compose.png_bytes_from_image(
            compose.render_panel(record, class_names=manifest.class_names))
        from .digests import digest_bytes
        d = digest_bytes(data)
        (out / "assets" / f"{d}.png").write_bytes(data)
        digests[q.sample_id] = d
        q.asset_digest = d
    evaluation.export_quiz(questions, out / "quiz.json")
    _write_manifest(out, {"quiz": "quiz.json", "questions": len(questions)})
    click.echo(f"exported {len(questions)} questions")


@cli.command(name="eval")
@click.option("--config", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.option("--invariance-b", type=click.Path(exists=True), default=None,
              help="Second decoder checkpoint for the invariance comparison.")
@click.option("--untrained-seed", default=999, show_default=True)
def eval_cmd(config, out, invariance_b, untrained_seed):
    """Held-out reconstruction metrics, optionally decoder invariance."""
    cfg = _load_cfg(config)
    bundle, enc, manifest = _load_stack(cfg)
    dec, _ = _load_decoder(cfg)
    eval_samples = manifest.split("eval") or manifest.samples
    images = load_images(manifest, eval_samples, bundle.input_shape)
    report = evaluate_reconstruction(enc, dec, images,
                                     ssim_window=cfg.get("ssim_window", 11))
    result = {"reconstruction": json.loads(report.to_json_line())}
    if invariance_b:
        dec_b, _, _ = load_checkpoint(invariance_b)
        dec_u = build_decoder(dec.cfg, untrained_seed)
        inv = evaluation.decoder_invariance(dec, dec_b, dec_u, enc, images,
                                            ssim_window=cfg.get("ssim_window", 11))
        result["invariance"] = inv.to_dict()
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(result, indent=2))
    _write_manifest(out, {"metrics": "metrics.json"})
    click.echo(json.dumps(result["reconstruction"]))


@cli.command()
@click.option("--config", required=True, type=click.Path(exists=True))
def serve(config):
    """Run the workbench HTTP service."""
    from .service import ServiceConfig, serve as run_service

    run_service(ServiceConfig.load(config))


@cli.command(name="make-desk-data")
@click.option("--out", required=True, type=click.Path())
@click.option("--n-train", default=400, show_default=True)
@click.option("--n-eval", default=60, show_default=True)
@click.option("--seed", default=0, show_default=True)
def make_desk_data(out, n_train, n_eval, seed):
    """Generate the synthetic desk-scale dataset and reference classifier."""
    synthetic.make_dataset(out, n_train, seed=seed, split="train")
    synthetic.make_dataset(out, n_eval, seed=seed + 1, split="eval", append=True)
    synthetic.train_desk_classifier(Path(out) / "classifier.pt", seed=seed)
    (Path(out) / "descriptor.json").write_text(
        json.dumps(synthetic.DESK_DESCRIPTOR, indent=2))
    click.echo(f"desk dataset and classifier written to {out}")


def main(argv=None):
    json_errors = False
    args = list(sys.argv[1:] if argv is None else argv)
    if "--json-errors" in args:
        json_errors = True
        args.remove("--json-errors")

    def report_error(exc, code):
        if json_errors:
            click.echo(json.dumps({"error": str(exc),
                                   "type": type(exc).__name__}), err=True)
        else:
            click.echo(f"error: {exc}", err=True)
        return code

    try:
        cli.main(args=args, standalone_mode=False)
        return 0
    except click.ClickException as exc:
        return report_error(exc.format_message(), 1)
    except click.exceptions.Abort:
        return 1
    except (PvkitError, ValueError, KeyError) as exc:
        return report_error(exc, 2)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
