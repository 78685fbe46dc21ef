"""Siamese network: backbone, projection head, loss, and persistence."""

from .backbone import (
    KIND_PRECOMPUTED,
    KIND_TOY_VIT,
    POOL_FLATTEN,
    POOL_MEANPOOL,
    BackboneConfig,
    PrecomputedBackbone,
    ToyViT,
    ToyViTParams,
    attention_weights,
    init_toy_vit,
    patchify,
)
from .checkpoint import (
    load_checkpoint,
    read_embeddings,
    save_checkpoint,
    write_embeddings,
)
from .head import HeadParams, elu, head_forward, init_head
from .loss import (
    DEFAULT_MARGIN,
    contrastive_loss,
    decide,
    default_tau,
    distance,
    loss_and_gradients,
    pair_distances,
)
from .siamese import SiameseModel

__all__ = [
    "KIND_PRECOMPUTED",
    "KIND_TOY_VIT",
    "POOL_FLATTEN",
    "POOL_MEANPOOL",
    "BackboneConfig",
    "PrecomputedBackbone",
    "ToyViT",
    "ToyViTParams",
    "attention_weights",
    "init_toy_vit",
    "patchify",
    "load_checkpoint",
    "read_embeddings",
    "save_checkpoint",
    "write_embeddings",
    "HeadParams",
    "elu",
    "head_forward",
    "init_head",
    "DEFAULT_MARGIN",
    "contrastive_loss",
    "decide",
    "default_tau",
    "distance",
    "loss_and_gradients",
    "pair_distances",
    "SiameseModel",
]
