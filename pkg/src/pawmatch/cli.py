"""Command-line entry point orchestrating every pipeline stage.

Every randomized stage takes an explicit seed (directly or through the
train config); nothing is seeded from the clock. Exit codes: 0 success,
1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from .errors import PawmatchError

log = logging.getLogger(__name__)


def _load_backbone(backbone_config: str, seed: int, features: str | None):
    from .model.backbone import (
        KIND_PRECOMPUTED,
        BackboneConfig,
        PrecomputedBackbone,
        ToyViT,
    )
    from .model.checkpoint import read_embeddings
    from .rng import derive

    with open(backbone_config, "r", encoding="utf-8") as fh:
        cfg = BackboneConfig.from_dict(json.load(fh))
    if cfg.kind == KIND_PRECOMPUTED:
        if features is None:
            raise click.UsageError("--features is required for a precomputed backbone")
        dim, table = read_embeddings(features)
        if dim != cfg.feature_dim:
            raise PawmatchError(
                f"feature file dimension {dim} does not match backbone width {cfg.feature_dim}"
            )
        return PrecomputedBackbone(cfg, table)
    return ToyViT.create(cfg, derive(seed, "backbone-init"))


def _policies_from_names(names: tuple[str, ...]):
    from .imaging import BUILTIN_POLICY_NAMES, builtin_policies, builtin_policy, load_policy

    if not names:
        return builtin_policies()
    loaded = []
    for name in names:
        if name in BUILTIN_POLICY_NAMES:
            loaded.append(builtin_policy(name))
        else:
            loaded.append(load_policy(name))
    return loaded


@click.group()
@click.option("-v", "--verbose", is_flag=True, help="Enable info-level logging.")
def cli(verbose: bool):
    """Pet re-identification pipeline: ingest, pairs, train, evaluate, serve."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )


@cli.command()
@click.option("--input", "input_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--detector", default="stub", show_default=True,
              help="'stub' or the URL of a remote detector.")
@click.option("--seed", required=True, type=int)
@click.option("--heldout-fraction", default=0.0, show_default=True, type=float)
@click.option("--image-side", default=384, show_default=True, type=int)
@click.option("--policy", "policies", multiple=True,
              help="Builtin policy name or policy JSON path; repeatable. "
                   "Defaults to CIFAR10+ImageNet+SVHN.")
def ingest(input_dir, out_dir, detector, seed, heldout_fraction, image_side, policies):
    """Build the cropped/padded/augmented corpus and its manifest."""
    from .ingest import build_corpus, make_detector

    skip_log: dict = {}
    manifest = build_corpus(
        input_dir, out_dir, make_detector(detector), _policies_from_names(policies),
        seed=seed, heldout_fraction=heldout_fraction, image_side=image_side,
        skip_log=skip_log,
    )
    click.echo(
        f"wrote {manifest.image_count} records for {manifest.pet_count} pets "
        f"({manifest.mean_images_per_pet:.2f} sources/pet) to {out_dir}; "
        f"skipped: {skip_log}"
    )


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--count", required=True, type=int)
@click.option("--p-same", default=0.5, show_default=True, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--split", default="train", show_default=True,
              type=click.Choice(["train", "heldout"]))
def pairs(manifest_path, count, p_same, seed, out_path, split):
    """Export a deterministic pair list as JSON lines for audit."""
    from .ingest import Manifest
    from .pairs import pair_stream, write_pairs_jsonl

    manifest = Manifest.read_jsonl(manifest_path)
    sampled = pair_stream(manifest, split, p_same, seed, count)
    write_pairs_jsonl(sampled, out_path)
    same = sum(1 for p in sampled if p.label == "same")
    click.echo(f"wrote {count} pairs ({same} same / {count - same} different) to {out_path}")


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--backbone-config", required=True, type=click.Path(exists=True))
@click.option("--features", type=click.Path(exists=True),
              help="Embedding file for a precomputed backbone.")
@click.option("--out-checkpoint", required=True, type=click.Path())
@click.option("--logs", "logs_path", required=True, type=click.Path())
@click.option("--split", default="train", show_default=True)
def train(manifest_path, config_path, backbone_config, features, out_checkpoint,
          logs_path, split):
    """Train the projection head and write a checkpoint plus epoch logs."""
    from .ingest import Manifest
    from .model.checkpoint import save_checkpoint
    from .training import TrainConfig, train as run_train, write_logs_csv

    manifest = Manifest.read_jsonl(manifest_path)
    cfg = TrainConfig.from_json(config_path)
    backbone = _load_backbone(backbone_config, cfg.seed, features)
    result = run_train(manifest, cfg, backbone, split=split)
    save_checkpoint(out_checkpoint, result.head, backbone)
    write_logs_csv(result.logs, logs_path)
    last = result.logs[-1]
    click.echo(
        f"trained {cfg.epochs} epochs; final loss {last.train_loss:.4f}, "
        f"val acc {last.val_acc:.4f}; checkpoint -> {out_checkpoint}"
    )


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--backbone-config", required=True, type=click.Path(exists=True))
@click.option("--features", type=click.Path(exists=True),
              help="Embedding file for a precomputed backbone.")
@click.option("--k", default=3, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path())
def crossval(manifest_path, config_path, backbone_config, features, k, out_dir):
    """k-fold cross-validation: per-fold checkpoints, curves, and a report."""
    from .evaluation import cross_validate, emit_report, report_dict
    from .ingest import Manifest
    from .model.checkpoint import save_checkpoint
    from .training import TrainConfig

    manifest = Manifest.read_jsonl(manifest_path)
    cfg = TrainConfig.from_json(config_path)
    backbone = _load_backbone(backbone_config, cfg.seed, features)
    result = cross_validate(manifest, cfg, backbone, k=k)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_report(report_dict(result), result.logs, out)
    for i, fold_result in enumerate(result.fold_results):
        save_checkpoint(out / f"fold{i}.ckpt", fold_result.head, backbone)
    click.echo(
        f"cross-validation done: mean accuracy {result.mean.accuracy:.4f}, "
        f"mean F1 {result.mean.f1:.4f}; report -> {out / 'report.json'}"
    )


@cli.command("eval")
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--split", default="heldout", show_default=True,
              type=click.Choice(["train", "heldout"]))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--seed", required=True, type=int)
@click.option("--count", default=1024, show_default=True, type=int)
@click.option("--p-same", default=0.5, show_default=True, type=float)
@click.option("--margin", default=1.66, show_default=True, type=float)
@click.option("--tau", default=None, type=float, help="Decision threshold; defaults to margin/2.")
def eval_cmd(manifest_path, checkpoint_path, split, out_path, seed, count, p_same,
             margin, tau):
    """Evaluate a checkpoint on pairs sampled from one split."""
    from .evaluation import evaluate_model
    from .ingest import Manifest
    from .model.siamese import SiameseModel
    from .pairs import pair_stream

    manifest = Manifest.read_jsonl(manifest_path)
    model = SiameseModel.load(checkpoint_path, margin=margin, tau=tau)
    sampled = pair_stream(manifest, split, p_same, seed, count)
    counts, report = evaluate_model(model, manifest, sampled)
    payload = {
        "split": split,
        "pairs": count,
        "counts": {"tp": counts.tp, "fp": counts.fp, "tn": counts.tn, "fn": counts.fn},
        "metrics": report.to_dict(),
    }
    with open(out_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(
        f"{split}: accuracy {report.accuracy:.4f}, f1 {report.f1:.4f} -> {out_path}"
    )


@cli.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True))
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def embed(manifest_path, checkpoint_path, out_path):
    """Write latent vectors for every manifest image to an embedding file."""
    from .ingest import Manifest
    from .model.checkpoint import write_embeddings
    from .model.siamese import SiameseModel

    manifest = Manifest.read_jsonl(manifest_path)
    model = SiameseModel.load(checkpoint_path)
    table = {}
    for rec in sorted(manifest.records, key=lambda r: r.image_id):
        table[rec.image_id] = model.embed_image(manifest.load_image(rec))
    write_embeddings(out_path, model.latent_size, table)
    click.echo(f"wrote {len(table)} embeddings of size {model.latent_size} to {out_path}")


@cli.command()
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(exists=True))
@click.option("--store", "store_dir", required=True, type=click.Path())
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--detector", default="stub", show_default=True)
@click.option("--margin", default=1.66, show_default=True, type=float)
def serve(checkpoint_path, store_dir, port, host, detector, margin):
    """Run the matching service HTTP API."""
    import uvicorn

    from .ingest import make_detector
    from .matchd import MatchService, MatchStore, create_app
    from .model.siamese import SiameseModel

    model = SiameseModel.load(checkpoint_path, margin=margin)
    store = MatchStore(store_dir, model.latent_size)
    service = MatchService(
        model, store, make_detector(detector), checkpoint_name=str(checkpoint_path)
    )
    app = create_app(service)
    click.echo(f"serving on http://{host}:{port} with {len(store)} stored sightings")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return 0 if exc.exit_code == 0 else 1
    except click.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 2
    except click.Abort:
        click.echo("aborted", err=True)
        return 2
    except PawmatchError as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    except Exception as exc:  # runtime failures map to exit 2
        log.exception("command failed")
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
