"""The composed Siamese model: frozen backbone + trainable head.

Both images of a pair pass through the same parameter objects, so weight
sharing holds by construction. Embedding is deterministic: the same image
always yields the same latent vector.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..imaging import ImageTensor, to_model_input
from .backbone import KIND_TOY_VIT, BackboneConfig, PrecomputedBackbone, ToyViT
from .checkpoint import load_checkpoint, save_checkpoint
from .head import HeadParams, head_forward
from .loss import DEFAULT_MARGIN, decide, default_tau, distance


class SiameseModel:
    def __init__(
        self,
        backbone: ToyViT | PrecomputedBackbone,
        head: HeadParams,
        margin: float = DEFAULT_MARGIN,
        tau: float | None = None,
    ):
        if backbone.cfg.feature_dim != head.feature_dim:
            raise ValueError(
                f"backbone features ({backbone.cfg.feature_dim}) do not match "
                f"head input ({head.feature_dim})"
            )
        if margin <= 0:
            raise ValueError(f"margin must be positive, got {margin}")
        self.backbone = backbone
        self.head = head
        self.margin = margin
        self.tau = default_tau(margin) if tau is None else tau
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    @property
    def cfg(self) -> BackboneConfig:
        return self.backbone.cfg

    @property
    def latent_size(self) -> int:
        return self.head.latent_size

    def feature_of_image(self, img: ImageTensor) -> np.ndarray:
        if self.cfg.kind != KIND_TOY_VIT:
            raise ValueError("a precomputed backbone cannot embed raw images")
        x = to_model_input(img, dtype=self.head.dtype)
        return self.backbone.features(x)

    def feature_of_id(self, image_id: str) -> np.ndarray:
        if self.cfg.kind != KIND_TOY_VIT:
            return self.backbone.features_by_id(image_id)
        raise ValueError("a toy ViT backbone embeds images, not ids")

    def embed_feature(self, feature: np.ndarray) -> np.ndarray:
        return head_forward(self.head, feature)

    def embed_image(self, img: ImageTensor) -> np.ndarray:
        return self.embed_feature(self.feature_of_image(img))

    def distance(self, z1: np.ndarray, z2: np.ndarray) -> float:
        return distance(z1, z2)

    def decide(self, d: float) -> str:
        return decide(d, self.tau)

    def similarity(self, d: float) -> float:
        """max(0, 1 - d / margin): 1 at identity, 0 at or beyond the margin."""
        return max(0.0, 1.0 - d / self.margin)

    def save(self, path: str | Path) -> None:
        save_checkpoint(path, self.head, self.backbone)

    @classmethod
    def load(
        cls,
        path: str | Path,
        margin: float = DEFAULT_MARGIN,
        tau: float | None = None,
        dtype=np.float32,
    ) -> "SiameseModel":
        head, backbone = load_checkpoint(path, dtype=dtype)
        return cls(backbone, head, margin=margin, tau=tau)
