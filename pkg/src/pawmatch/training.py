"""The optimization loop: AdamW with decoupled weight decay over the head.

Each epoch draws ``batches_per_epoch`` batches of ``batch_size`` pairs from
the training side of the pair stream, then runs a validation pass of
``test_batch_count`` x ``test_batch_size`` fresh pairs from the test side
(regenerated every epoch, never fixed). The backbone stays frozen; only
the head receives gradients.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FormatError, NonFiniteError
from .ingest import Manifest
from .model.backbone import KIND_TOY_VIT, PrecomputedBackbone, ToyViT
from .model.checkpoint import load_checkpoint, save_checkpoint
from .model.head import HeadParams, head_forward, init_head
from .model.loss import default_tau, loss_and_gradients, pair_distances
from .pairs import SAME, FoldedPairStream, PairSample, pair_iter
from .rng import derive

log = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8

CONFIG_KEYS = (
    "epochs", "latent_size", "batch_size", "batches_per_epoch",
    "test_batch_size", "test_batch_count", "learning_rate", "weight_decay",
    "margin", "seed", "freeze_backbone", "p_same",
)


@dataclass(frozen=True)
class TrainConfig:
    seed: int
    epochs: int = 350
    latent_size: int = 512
    batch_size: int = 8
    batches_per_epoch: int = 128
    test_batch_size: int = 8
    test_batch_count: int = 128
    learning_rate: float = 5.0e-5
    weight_decay: float = 2.0e-4
    margin: float = 1.66
    freeze_backbone: bool = True
    p_same: float = 0.5

    def __post_init__(self):
        for name in ("epochs", "latent_size", "batch_size", "batches_per_epoch",
                     "test_batch_size", "test_batch_count"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        # learning_rate 0 is permitted as a diagnostic (training becomes a no-op)
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ValueError("learning_rate and weight_decay must be >= 0")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if not 0.0 <= self.p_same <= 1.0:
            raise ValueError("p_same must be in [0, 1]")

    def to_json(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({k: getattr(self, k) for k in CONFIG_KEYS}, fh, indent=2)
            fh.write("\n")

    @classmethod
    def from_json(cls, path: str | Path) -> "TrainConfig":
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        unknown = set(data) - set(CONFIG_KEYS)
        if unknown:
            raise FormatError(f"unknown train config keys: {sorted(unknown)}")
        if "seed" not in data:
            raise FormatError("train config must carry an explicit seed")
        return cls(**data)


@dataclass
class OptimizerState:
    """AdamW moments, shaped like the parameters they track."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0

    @classmethod
    def for_params(cls, params: HeadParams) -> "OptimizerState":
        return cls(
            m={name: np.zeros_like(arr) for name, arr in params.arrays()},
            v={name: np.zeros_like(arr) for name, arr in params.arrays()},
        )


def adamw_step(
    params: HeadParams,
    grads: dict[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    wd: float,
) -> tuple[HeadParams, OptimizerState]:
    """One decoupled-weight-decay Adam update, in place.

    m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2; with bias-corrected
    m_hat, v_hat the parameter moves by -lr * (m_hat / (sqrt(v_hat) + eps)
    + wd * theta).
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - BETA1**t
    bc2 = 1.0 - BETA2**t
    for name, theta in params.arrays():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape mismatch for {name}")
        m = state.m[name]
        v = state.v[name]
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        update = lr * (m_hat / (np.sqrt(v_hat) + EPSILON) + wd * theta)
        if not np.isfinite(update).all():
            raise NonFiniteError(f"non-finite AdamW update for parameter {name} at step {t}")
        theta -= update
    return params, state


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    val_acc: float
    type1: float
    type2: float


@dataclass
class ConfusionTally:
    """Running Same/Different confusion; positive class is Same."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def add(self, decided_same: np.ndarray, actual_same: np.ndarray) -> None:
        self.tp += int(np.sum(decided_same & actual_same))
        self.fp += int(np.sum(decided_same & ~actual_same))
        self.tn += int(np.sum(~decided_same & ~actual_same))
        self.fn += int(np.sum(~decided_same & actual_same))

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total

    @property
    def type1(self) -> float:
        return self.fp / self.total

    @property
    def type2(self) -> float:
        return self.fn / self.total


@dataclass
class TrainResult:
    head: HeadParams
    logs: list[EpochLog]
    final_val: ConfusionTally
    features: dict[str, np.ndarray] = field(repr=False, default_factory=dict)


def compute_features(
    manifest: Manifest,
    backbone: ToyViT | PrecomputedBackbone,
    split: str | None = None,
) -> dict[str, np.ndarray]:
    """Feature vector per image id; the frozen backbone makes this cacheable."""
    records = manifest.records if split is None else manifest.split_records(split)
    features: dict[str, np.ndarray] = {}
    for rec in sorted(records, key=lambda r: r.image_id):
        if backbone.cfg.kind == KIND_TOY_VIT:
            from .imaging import to_model_input

            img = manifest.load_image(rec)
            features[rec.image_id] = backbone.features(to_model_input(img))
        else:
            features[rec.image_id] = backbone.features_by_id(rec.image_id)
    return features


def _batch_arrays(
    pairs: list[PairSample], features: dict[str, np.ndarray]
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    feat_a = np.stack([features[p.a] for p in pairs])
    feat_b = np.stack([features[p.b] for p in pairs])
    same = np.array([p.label == SAME for p in pairs], dtype=bool)
    return feat_a, feat_b, same


def _validation_pass(
    head: HeadParams,
    features: dict[str, np.ndarray],
    batches: Iterator[list[PairSample]],
    tau: float,
) -> ConfusionTally:
    tally = ConfusionTally()
    for pairs in batches:
        feat_a, feat_b, same = _batch_arrays(pairs, features)
        d = pair_distances(head_forward(head, feat_a), head_forward(head, feat_b))
        tally.add(d < tau, same)
    return tally


def train(
    manifest: Manifest,
    cfg: TrainConfig,
    backbone: ToyViT | PrecomputedBackbone,
    fold: tuple[int, int] | None = None,
    split: str = "train",
    features: dict[str, np.ndarray] | None = None,
) -> TrainResult:
    """Train the head; returns final params, per-epoch logs, and the final
    validation confusion.

    With ``fold=(k, i)`` pairs at stream position p go to fold ``p mod k``;
    batches come from the k-1 training folds and validation from fold i.
    Without a fold the whole stream trains and validation pairs come from an
    independent stream derived from the seed.
    """
    if not cfg.freeze_backbone:
        raise NotImplementedError(
            "full-backbone fine-tuning is not implemented; freeze_backbone must stay true"
        )
    if features is None:
        features = compute_features(manifest, backbone, split)
    head = init_head(
        backbone.cfg.feature_dim, cfg.latent_size, derive(cfg.seed, "head-init")
    )
    state = OptimizerState.for_params(head)
    tau = default_tau(cfg.margin)

    if fold is not None:
        k, test_fold = fold
        stream = FoldedPairStream(manifest, split, cfg.p_same, cfg.seed, k, test_fold)
        next_train_batch = lambda n: stream.take_train(n)  # noqa: E731
        next_val_batch = lambda n: stream.take_test(n)  # noqa: E731
    else:
        stream = FoldedPairStream(manifest, split, cfg.p_same, cfg.seed)
        val_iter = pair_iter(
            manifest, split, cfg.p_same, derive(cfg.seed, "validation").next_u64()
        )
        next_train_batch = lambda n: stream.take_train(n)  # noqa: E731
        next_val_batch = lambda n: [next(val_iter) for _ in range(n)]  # noqa: E731

    backbone_bytes = backbone.params.tobytes() if isinstance(backbone, ToyViT) else None

    logs: list[EpochLog] = []
    val_tally = ConfusionTally()
    for epoch in range(cfg.epochs):
        losses = []
        train_tally = ConfusionTally()
        for batch_idx in range(cfg.batches_per_epoch):
            pairs = next_train_batch(cfg.batch_size)
            feat_a, feat_b, same = _batch_arrays(pairs, features)
            try:
                loss, grads, d = loss_and_gradients(head, feat_a, feat_b, same, cfg.margin)
                adamw_step(head, grads, state, cfg.learning_rate, cfg.weight_decay)
            except NonFiniteError as exc:
                raise NonFiniteError(
                    f"epoch {epoch} batch {batch_idx}: {exc}"
                ) from exc
            losses.append(loss)
            train_tally.add(d < tau, same)

        val_tally = _validation_pass(
            head, features,
            (next_val_batch(cfg.test_batch_size) for _ in range(cfg.test_batch_count)),
            tau,
        )
        logs.append(
            EpochLog(
                epoch=epoch,
                train_loss=float(np.mean(losses)),
                train_acc=train_tally.accuracy,
                val_acc=val_tally.accuracy,
                type1=val_tally.type1,
                type2=val_tally.type2,
            )
        )
        if epoch % 25 == 0 or epoch == cfg.epochs - 1:
            log.info(
                "epoch %d: loss %.4f train_acc %.3f val_acc %.3f",
                epoch, logs[-1].train_loss, logs[-1].train_acc, logs[-1].val_acc,
            )

    if backbone_bytes is not None and backbone.params.tobytes() != backbone_bytes:
        raise AssertionError("frozen backbone was mutated during training")
    return TrainResult(head=head, logs=logs, final_val=val_tally, features=features)


def write_logs_csv(logs: list[EpochLog], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,train_acc,val_acc,type1,type2\n")
        for entry in logs:
            fh.write(
                f"{entry.epoch},{entry.train_loss!r},{entry.train_acc!r},"
                f"{entry.val_acc!r},{entry.type1!r},{entry.type2!r}\n"
            )


def read_logs_csv(path: str | Path) -> list[EpochLog]:
    logs = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "epoch,train_loss,train_acc,val_acc,type1,type2":
            raise FormatError(f"unexpected log header {header!r}")
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 6:
                raise FormatError(f"bad log row {line!r}")
            logs.append(
                EpochLog(
                    epoch=int(parts[0]),
                    train_loss=float(parts[1]),
                    train_acc=float(parts[2]),
                    val_acc=float(parts[3]),
                    type1=float(parts[4]),
                    type2=float(parts[5]),
                )
            )
    return logs


# Checkpoint persistence lives in pawmatch.model.checkpoint; re-exported here
# because the training loop is where checkpoints are produced.
checkpoint = save_checkpoint
restore = load_checkpoint
