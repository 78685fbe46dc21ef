"""Confusion accounting, the metric suite, k-fold orchestration, and reports.

The positive class is "same". Type I and type II errors are fractions of
ALL evaluated pairs (false positives / total and false negatives / total),
so accuracy + type1 + type2 = 1; this is the reading under which the
published accuracy/error tables are internally consistent.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .ingest import Manifest
from .model.backbone import PrecomputedBackbone, ToyViT
from .model.head import HeadParams, head_forward
from .model.loss import pair_distances
from .model.siamese import SiameseModel
from .pairs import SAME, PairSample, pair_stream
from .rng import derive
from .training import ConfusionTally as ConfusionCounts
from .training import EpochLog, TrainConfig, TrainResult, compute_features, train

log = logging.getLogger(__name__)

SMOOTH_WINDOW = 5

METRIC_FIELDS = ("accuracy", "type1", "type2", "precision", "recall", "f1")


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    type1: float
    type2: float
    precision: float
    recall: float
    f1: float

    def to_dict(self) -> dict:
        return asdict(self)


def metrics(c: ConfusionCounts) -> MetricsReport:
    """Metric suite over confusion counts; zero-denominator ratios become 0."""
    total = c.total
    if total < 1:
        raise ValueError("metrics need at least one evaluated pair")
    precision = c.tp / (c.tp + c.fp) if (c.tp + c.fp) > 0 else 0.0
    recall = c.tp / (c.tp + c.fn) if (c.tp + c.fn) > 0 else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(
        accuracy=(c.tp + c.tn) / total,
        type1=c.fp / total,
        type2=c.fn / total,
        precision=precision,
        recall=recall,
        f1=f1,
    )


def counts_from_rates(
    type1: float, type2: float, prevalence: float = 0.5, total: int = 1_000_000
) -> ConfusionCounts:
    """Integer confusion counts scaled from overall error rates.

    ``prevalence`` is the fraction of actually-same pairs. Useful for
    checking that a published (accuracy, type1, type2, f1) row is
    internally consistent.
    """
    fp = round(type1 * total)
    fn = round(type2 * total)
    tp = round(prevalence * total) - fn
    tn = total - round(prevalence * total) - fp
    if min(tp, fp, tn, fn) < 0:
        raise ValueError("rates are inconsistent with the prevalence")
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def evaluate_latents(
    latent_of: Callable[[str], np.ndarray],
    pairs: Sequence[PairSample],
    tau: float,
) -> tuple[ConfusionCounts, MetricsReport]:
    """Decide every pair from its embedding distance and tally the confusion."""
    if len(pairs) == 0:
        raise ValueError("cannot evaluate an empty pair list")
    za = np.stack([latent_of(p.a) for p in pairs])
    zb = np.stack([latent_of(p.b) for p in pairs])
    d = pair_distances(za, zb)
    same = np.array([p.label == SAME for p in pairs], dtype=bool)
    counts = ConfusionCounts()
    counts.add(d < tau, same)
    return counts, metrics(counts)


def evaluate_features(
    head: HeadParams,
    features: dict[str, np.ndarray],
    pairs: Sequence[PairSample],
    tau: float,
) -> tuple[ConfusionCounts, MetricsReport]:
    """Evaluate pairs given precomputed backbone features."""
    ids = sorted({p.a for p in pairs} | {p.b for p in pairs})
    latents = dict(zip(ids, head_forward(head, np.stack([features[i] for i in ids]))))
    return evaluate_latents(lambda image_id: latents[image_id], pairs, tau)


def evaluate_model(
    model: SiameseModel,
    manifest: Manifest,
    pairs: Sequence[PairSample],
    tau: float | None = None,
) -> tuple[ConfusionCounts, MetricsReport]:
    """Evaluate pairs by embedding manifest images through the full model."""
    by_id = manifest.by_image_id()
    cache: dict[str, np.ndarray] = {}

    def latent_of(image_id: str) -> np.ndarray:
        if image_id not in cache:
            cache[image_id] = model.embed_image(manifest.load_image(by_id[image_id]))
        return cache[image_id]

    return evaluate_latents(latent_of, pairs, model.tau if tau is None else tau)


def calibrate_tau(
    head: HeadParams,
    features: dict[str, np.ndarray],
    pairs: Sequence[PairSample],
    candidates: Sequence[float],
) -> float:
    """The candidate threshold with the best F1 on the given pairs."""
    best_tau, best_f1 = None, -1.0
    for tau in candidates:
        _, report = evaluate_features(head, features, pairs, tau)
        if report.f1 > best_f1:
            best_tau, best_f1 = tau, report.f1
    assert best_tau is not None
    return best_tau


@dataclass
class CrossValResult:
    fold_results: list[TrainResult]
    fold_reports: list[MetricsReport]
    mean: MetricsReport
    heldout_reports: list[MetricsReport] | None
    heldout_mean: MetricsReport | None
    heldout_std: MetricsReport | None

    @property
    def logs(self) -> list[list[EpochLog]]:
        return [r.logs for r in self.fold_results]


def _mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    return MetricsReport(
        **{f: float(np.mean([getattr(r, f) for r in reports])) for f in METRIC_FIELDS}
    )


def _std_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    # sample standard deviation across the k fold models
    return MetricsReport(
        **{f: float(np.std([getattr(r, f) for r in reports], ddof=1)) for f in METRIC_FIELDS}
    )


def cross_validate(
    manifest: Manifest,
    cfg: TrainConfig,
    backbone: ToyViT | PrecomputedBackbone,
    k: int = 3,
) -> CrossValResult:
    """k trainings with fold i as the test fold exactly once, plus held-out
    evaluation of every fold model on a shared pair set from the held-out
    pets (when the manifest has any)."""
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    train_features = compute_features(manifest, backbone, "train")

    fold_results: list[TrainResult] = []
    fold_reports: list[MetricsReport] = []
    for fold_index in range(k):
        log.info("cross-validation fold %d/%d", fold_index + 1, k)
        try:
            result = train(
                manifest, cfg, backbone, fold=(k, fold_index), features=train_features
            )
        except Exception as exc:
            raise RuntimeError(f"cross-validation fold {fold_index} failed: {exc}") from exc
        fold_results.append(result)
        fold_reports.append(metrics(result.final_val))

    heldout_pets = {r.pet_id for r in manifest.split_records("heldout")}
    heldout_reports = None
    heldout_mean = None
    heldout_std = None
    if len(heldout_pets) >= 2:
        count = cfg.test_batch_count * cfg.test_batch_size
        heldout_pairs = pair_stream(
            manifest, "heldout", cfg.p_same,
            derive(cfg.seed, "heldout-eval").next_u64(), count,
        )
        heldout_features = compute_features(manifest, backbone, "heldout")
        from .model.loss import default_tau

        tau = default_tau(cfg.margin)
        heldout_reports = [
            evaluate_features(res.head, heldout_features, heldout_pairs, tau)[1]
            for res in fold_results
        ]
        heldout_mean = _mean_report(heldout_reports)
        heldout_std = _std_report(heldout_reports)

    return CrossValResult(
        fold_results=fold_results,
        fold_reports=fold_reports,
        mean=_mean_report(fold_reports),
        heldout_reports=heldout_reports,
        heldout_mean=heldout_mean,
        heldout_std=heldout_std,
    )


def report_dict(result: CrossValResult) -> dict:
    heldout = None
    if result.heldout_mean is not None:
        heldout = {
            "mean": result.heldout_mean.to_dict(),
            "std": result.heldout_std.to_dict(),
        }
    return {
        "folds": [r.to_dict() for r in result.fold_reports],
        "mean": result.mean.to_dict(),
        "heldout": heldout,
    }


def smooth_logs(logs: Sequence[EpochLog], window: int = SMOOTH_WINDOW) -> list[dict]:
    """Window means of every logged series; a partial final window averages
    whatever epochs remain. The ``epoch`` column holds the window start."""
    if window < 1:
        raise ValueError("window must be >= 1")
    rows = []
    for start in range(0, len(logs), window):
        chunk = logs[start : start + window]
        rows.append(
            {
                "epoch": chunk[0].epoch,
                "train_loss": float(np.mean([e.train_loss for e in chunk])),
                "train_acc": float(np.mean([e.train_acc for e in chunk])),
                "val_acc": float(np.mean([e.val_acc for e in chunk])),
                "type1": float(np.mean([e.type1 for e in chunk])),
                "type2": float(np.mean([e.type2 for e in chunk])),
            }
        )
    return rows


def _write_smooth_csv(rows: list[dict], path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,train_acc,val_acc,type1,type2\n")
        for row in rows:
            fh.write(
                f"{row['epoch']},{row['train_loss']!r},{row['train_acc']!r},"
                f"{row['val_acc']!r},{row['type1']!r},{row['type2']!r}\n"
            )


def emit_report(report: dict, logs: list[list[EpochLog]], out_dir: str | Path) -> list[Path]:
    """Write metrics JSON plus raw and smoothed curve CSVs; returns the paths."""
    from .training import write_logs_csv

    if not logs or any(len(fold_logs) == 0 for fold_logs in logs):
        raise ValueError("emit_report needs at least one non-empty epoch log")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    written = []
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(report_path)

    single = len(logs) == 1
    for i, fold_logs in enumerate(logs):
        stem = "curves" if single else f"curves_fold{i}"
        raw_path = out_dir / f"{stem}.csv"
        write_logs_csv(fold_logs, raw_path)
        smooth_path = out_dir / f"{stem}_smooth.csv"
        _write_smooth_csv(smooth_logs(fold_logs), smooth_path)
        written.extend([raw_path, smooth_path])
    return written
