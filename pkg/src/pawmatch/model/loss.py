"""Euclidean distance, the contrastive objective, and the decision rule.

For a pair at distance d the loss term is d^2 when the images show the
same pet and max(margin - d, 0)^2 otherwise; the batch loss is half the
mean term. Distances below the threshold tau (margin / 2 by default) are
decided "same".
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..pairs import DIFFERENT, SAME
from .head import HeadParams, _forward_cached, head_backward

DEFAULT_MARGIN = 1.66


def default_tau(margin: float = DEFAULT_MARGIN) -> float:
    return margin / 2.0


def distance(x1: np.ndarray, x2: np.ndarray) -> float:
    """Euclidean distance between two latent vectors of equal length."""
    x1 = np.asarray(x1)
    x2 = np.asarray(x2)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise ValueError(f"latent shapes differ: {x1.shape} vs {x2.shape}")
    delta = x1.astype(np.float64) - x2.astype(np.float64)
    return float(np.sqrt(np.dot(delta, delta)))


def pair_distances(za: np.ndarray, zb: np.ndarray) -> np.ndarray:
    """Row-wise Euclidean distances between two (n, L) latent batches, as float64."""
    if za.shape != zb.shape:
        raise ValueError(f"latent batch shapes differ: {za.shape} vs {zb.shape}")
    delta = za.astype(np.float64) - zb.astype(np.float64)
    return np.sqrt((delta * delta).sum(axis=1))


def contrastive_loss(pairs: Sequence[tuple[float, str]], margin: float = DEFAULT_MARGIN) -> float:
    """Half the mean per-pair term; computed in float64."""
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")
    if len(pairs) == 0:
        raise ValueError("contrastive loss needs at least one pair")
    total = 0.0
    for d, label in pairs:
        if d < 0:
            raise ValueError(f"distance must be non-negative, got {d}")
        if label == SAME:
            total += d * d
        elif label == DIFFERENT:
            hinge = max(margin - d, 0.0)
            total += hinge * hinge
        else:
            raise ValueError(f"unknown label {label!r}")
    return 0.5 * total / len(pairs)


def decide(d: float, tau: float) -> str:
    """"same" iff the distance falls below the threshold.

    tau = 0 is degenerate but legal here (nothing is ever decided same);
    model-level thresholds are validated strictly positive.
    """
    if tau < 0:
        raise ValueError(f"tau must be non-negative, got {tau}")
    return SAME if d < tau else DIFFERENT


def loss_and_gradients(
    params: HeadParams,
    feat_a: np.ndarray,
    feat_b: np.ndarray,
    same: np.ndarray,
    margin: float = DEFAULT_MARGIN,
) -> tuple[float, dict[str, np.ndarray], np.ndarray]:
    """Batch loss, exact head gradients, and pair distances.

    ``feat_a``/``feat_b`` are (n, feature_dim) batches, ``same`` a boolean
    vector. Both branches share the head (Siamese weight sharing), so the
    returned gradients already sum the two branch contributions. At d = 0
    a violated different-pair contributes the zero subgradient.
    """
    n = feat_a.shape[0]
    if feat_b.shape != feat_a.shape or same.shape != (n,):
        raise ValueError("batch shapes disagree")
    if margin <= 0:
        raise ValueError(f"margin must be positive, got {margin}")

    stacked = np.concatenate([feat_a, feat_b], axis=0)
    z, cache = _forward_cached(params, stacked)
    za, zb = z[:n], z[n:]

    delta = za - zb
    d = np.sqrt((delta.astype(np.float64) ** 2).sum(axis=1))

    hinge = np.maximum(margin - d, 0.0)
    terms = np.where(same, d * d, hinge * hinge)
    loss = float(0.5 * terms.mean())

    # gradient w.r.t. delta: same pairs give delta/n exactly (no division by
    # d), violated different pairs give -hinge/(n d) * delta, and a
    # different pair at d = 0 takes the zero subgradient
    with np.errstate(invalid="ignore", divide="ignore"):
        diff_scale = np.where(d > 0, -hinge / (n * d), 0.0)
    scale = np.where(same, 1.0 / n, diff_scale)
    ddelta = (scale[:, None] * delta.astype(np.float64)).astype(z.dtype)

    dz = np.concatenate([ddelta, -ddelta], axis=0)
    grads = head_backward(params, cache, dz)
    return loss, grads, d
