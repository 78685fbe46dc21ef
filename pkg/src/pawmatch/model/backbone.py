"""Frozen feature extractors: a desk-scale ViT and a precomputed-embedding table.

The toy ViT follows the reference recipe: non-overlapping square patches,
a learned linear patch embedding plus learned position embeddings,
pre-norm transformer blocks (multi-head self-attention and a 2-layer MLP
with tanh-approximated GELU), a final layer norm, then either flattening
of the token grid or mean pooling over tokens.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import SplitMix64

KIND_TOY_VIT = "toy_vit"
KIND_PRECOMPUTED = "precomputed"

POOL_FLATTEN = "flatten"
POOL_MEANPOOL = "meanpool"

_LN_EPS = 1e-5


@dataclass(frozen=True)
class BackboneConfig:
    """For precomputed backbones, ``width`` holds the stored feature size."""

    kind: str = KIND_TOY_VIT
    image_side: int = 384
    patch_size: int = 16
    depth: int = 12
    width: int = 768
    heads: int = 12
    pooling: str = POOL_FLATTEN

    def __post_init__(self):
        if self.kind not in (KIND_TOY_VIT, KIND_PRECOMPUTED):
            raise ValueError(f"unknown backbone kind {self.kind!r}")
        if self.pooling not in (POOL_FLATTEN, POOL_MEANPOOL):
            raise ValueError(f"unknown pooling {self.pooling!r}")
        if self.kind == KIND_TOY_VIT:
            if self.image_side % self.patch_size != 0:
                raise ValueError(
                    f"image_side {self.image_side} not divisible by patch {self.patch_size}"
                )
            if self.width % self.heads != 0:
                raise ValueError(f"width {self.width} not divisible by heads {self.heads}")
            if min(self.depth, self.width, self.heads) < 1:
                raise ValueError("depth, width, and heads must be >= 1")

    @property
    def tokens(self) -> int:
        return (self.image_side // self.patch_size) ** 2

    @property
    def feature_dim(self) -> int:
        if self.kind == KIND_PRECOMPUTED:
            return self.width
        return self.tokens * self.width if self.pooling == POOL_FLATTEN else self.width

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "image_side": self.image_side,
            "patch_size": self.patch_size,
            "depth": self.depth,
            "width": self.width,
            "heads": self.heads,
            "pooling": self.pooling,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneConfig":
        return cls(**{k: data[k] for k in cls.__dataclass_fields__ if k in data})


@dataclass
class BlockParams:
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    mlp_w2: np.ndarray
    mlp_b2: np.ndarray


@dataclass
class ToyViTParams:
    patch_w: np.ndarray
    patch_b: np.ndarray
    pos: np.ndarray
    blocks: list[BlockParams]
    lnf_g: np.ndarray
    lnf_b: np.ndarray

    def arrays(self) -> list[tuple[str, np.ndarray]]:
        named = [("patch_w", self.patch_w), ("patch_b", self.patch_b), ("pos", self.pos)]
        for i, blk in enumerate(self.blocks):
            for name in (
                "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv",
                "wo", "bo", "ln2_g", "ln2_b", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2",
            ):
                named.append((f"block{i}.{name}", getattr(blk, name)))
        named.append(("lnf_g", self.lnf_g))
        named.append(("lnf_b", self.lnf_b))
        return named

    def tobytes(self) -> bytes:
        return b"".join(arr.astype("<f4").tobytes() for _, arr in self.arrays())


def init_toy_vit(cfg: BackboneConfig, rng: SplitMix64, dtype=np.float32) -> ToyViTParams:
    """Deterministic random weights: uniform +/-sqrt(1/fan_in), zero biases,
    unit layer-norm gains, position embeddings uniform +/-0.02."""
    w = cfg.width
    patch_dim = 3 * cfg.patch_size**2

    def draw(fan_in: int, fan_out: int) -> np.ndarray:
        bound = (1.0 / fan_in) ** 0.5
        u = rng.fill_uniform(fan_in * fan_out).reshape(fan_in, fan_out)
        return ((2.0 * u - 1.0) * bound).astype(dtype)

    def zeros(n: int) -> np.ndarray:
        return np.zeros(n, dtype=dtype)

    def ones(n: int) -> np.ndarray:
        return np.ones(n, dtype=dtype)

    patch_w = draw(patch_dim, w)
    pos = ((2.0 * rng.fill_uniform(cfg.tokens * w).reshape(cfg.tokens, w) - 1.0) * 0.02).astype(dtype)
    blocks = []
    for _ in range(cfg.depth):
        blocks.append(
            BlockParams(
                ln1_g=ones(w), ln1_b=zeros(w),
                wq=draw(w, w), bq=zeros(w),
                wk=draw(w, w), bk=zeros(w),
                wv=draw(w, w), bv=zeros(w),
                wo=draw(w, w), bo=zeros(w),
                ln2_g=ones(w), ln2_b=zeros(w),
                mlp_w1=draw(w, 4 * w), mlp_b1=zeros(4 * w),
                mlp_w2=draw(4 * w, w), mlp_b2=zeros(w),
            )
        )
    return ToyViTParams(
        patch_w=patch_w, patch_b=zeros(w), pos=pos,
        blocks=blocks, lnf_g=ones(w), lnf_b=zeros(w),
    )


def _layernorm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    return (x - mean) / np.sqrt(var + _LN_EPS) * gain + bias


def _gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def patchify(cfg: BackboneConfig, x: np.ndarray) -> np.ndarray:
    """(side, side, 3) image -> (tokens, 3 * patch^2) rows, grid row-major."""
    s, p = cfg.image_side, cfg.patch_size
    if x.shape != (s, s, 3):
        raise ValueError(f"expected ({s}, {s}, 3) input, got {x.shape}")
    g = s // p
    return x.reshape(g, p, g, p, 3).transpose(0, 2, 1, 3, 4).reshape(g * g, p * p * 3)


def attention(block: BlockParams, tokens: np.ndarray, heads: int) -> np.ndarray:
    """Multi-head self-attention over (n, width) tokens."""
    n, w = tokens.shape
    dh = w // heads
    q = (tokens @ block.wq + block.bq).reshape(n, heads, dh).transpose(1, 0, 2)
    k = (tokens @ block.wk + block.bk).reshape(n, heads, dh).transpose(1, 0, 2)
    v = (tokens @ block.wv + block.bv).reshape(n, heads, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(np.asarray(dh, dtype=tokens.dtype))
    attn = _softmax_rows(scores)
    out = (attn @ v).transpose(1, 0, 2).reshape(n, w)
    return out @ block.wo + block.bo


def attention_weights(block: BlockParams, tokens: np.ndarray, heads: int) -> np.ndarray:
    """The (heads, n, n) softmaxed attention matrix, for inspection/tests."""
    n, w = tokens.shape
    dh = w // heads
    q = (tokens @ block.wq + block.bq).reshape(n, heads, dh).transpose(1, 0, 2)
    k = (tokens @ block.wk + block.bk).reshape(n, heads, dh).transpose(1, 0, 2)
    scores = q @ k.transpose(0, 2, 1) / np.sqrt(np.asarray(dh, dtype=tokens.dtype))
    return _softmax_rows(scores)


class ToyViT:
    """Frozen ViT feature extractor."""

    def __init__(self, cfg: BackboneConfig, params: ToyViTParams):
        if cfg.kind != KIND_TOY_VIT:
            raise ValueError("ToyViT requires a toy_vit config")
        self.cfg = cfg
        self.params = params

    @classmethod
    def create(cls, cfg: BackboneConfig, rng: SplitMix64, dtype=np.float32) -> "ToyViT":
        return cls(cfg, init_toy_vit(cfg, rng, dtype))

    def features(self, x: np.ndarray) -> np.ndarray:
        """(side, side, 3) reals in [0, 1] -> feature vector."""
        cfg, p = self.cfg, self.params
        tok = patchify(cfg, x) @ p.patch_w + p.patch_b + p.pos
        for blk in p.blocks:
            tok = tok + attention(blk, _layernorm(tok, blk.ln1_g, blk.ln1_b), cfg.heads)
            h = _layernorm(tok, blk.ln2_g, blk.ln2_b)
            tok = tok + _gelu(h @ blk.mlp_w1 + blk.mlp_b1) @ blk.mlp_w2 + blk.mlp_b2
        tok = _layernorm(tok, p.lnf_g, p.lnf_b)
        if cfg.pooling == POOL_FLATTEN:
            return tok.reshape(-1)
        return tok.mean(axis=0)


@dataclass
class PrecomputedBackbone:
    """Feature lookup by image id, loaded from an embedding file."""

    cfg: BackboneConfig
    table: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.cfg.kind != KIND_PRECOMPUTED:
            raise ValueError("PrecomputedBackbone requires a precomputed config")
        for key, vec in self.table.items():
            if vec.shape != (self.cfg.feature_dim,):
                raise ValueError(f"embedding {key!r} has wrong length {vec.shape}")

    def features_by_id(self, image_id: str) -> np.ndarray:
        try:
            return self.table[image_id]
        except KeyError:
            raise KeyError(f"missing precomputed embedding for image {image_id!r}") from None
