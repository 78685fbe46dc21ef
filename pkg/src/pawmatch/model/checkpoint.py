"""Binary model and embedding files.

Checkpoint (magic ``LPAW``, version 1, all integers and reals little
endian, weights as 32-bit reals, row-major):

    "LPAW" | u32 version | u32 latent | u32 feature_dim
    3 x head layer: u32 in | u32 out | f32 weights[in*out] | f32 bias[out]
    u8 backbone kind (0 toy ViT, 1 precomputed)
    toy ViT: u32 image_side, patch, depth, width, heads | u8 pooling
             | backbone arrays in the fixed order of ToyViTParams.arrays()
    precomputed: u32 feature size

Embedding file (magic ``LPEM``, version 1):

    "LPEM" | u32 version | u32 dim
    repeated records: u16 id_len | id utf-8 | f32 values[dim]

Both formats round-trip bit-exactly for float32 arrays. Readers reject bad
magic, unsupported versions, and truncation.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from ..errors import FormatError, UnsupportedVersionError
from .backbone import (
    KIND_PRECOMPUTED,
    KIND_TOY_VIT,
    POOL_FLATTEN,
    POOL_MEANPOOL,
    BackboneConfig,
    BlockParams,
    PrecomputedBackbone,
    ToyViT,
    ToyViTParams,
)
from .head import HeadParams

CHECKPOINT_MAGIC = b"LPAW"
EMBEDDING_MAGIC = b"LPEM"
VERSION = 1

_BLOCK_FIELDS = (
    "ln1_g", "ln1_b", "wq", "bq", "wk", "bk", "wv", "bv",
    "wo", "bo", "ln2_g", "ln2_b", "mlp_w1", "mlp_b1", "mlp_w2", "mlp_b2",
)


def _write_u32(fh: BinaryIO, value: int) -> None:
    fh.write(struct.pack("<I", value))


def _write_f32(fh: BinaryIO, arr: np.ndarray) -> None:
    fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read_exact(fh: BinaryIO, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file while reading {what}")
    return data


def _read_u32(fh: BinaryIO, what: str) -> int:
    return struct.unpack("<I", _read_exact(fh, 4, what))[0]


def _read_f32(fh: BinaryIO, shape: tuple[int, ...], what: str, dtype) -> np.ndarray:
    count = int(np.prod(shape))
    data = _read_exact(fh, 4 * count, what)
    return np.frombuffer(data, dtype="<f4").reshape(shape).astype(dtype)


def save_checkpoint(
    path: str | Path,
    head: HeadParams,
    backbone: ToyViT | PrecomputedBackbone,
) -> None:
    cfg = backbone.cfg
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        _write_u32(fh, VERSION)
        _write_u32(fh, head.latent_size)
        _write_u32(fh, head.feature_dim)
        for w, b in ((head.w1, head.b1), (head.w2, head.b2), (head.w3, head.b3)):
            _write_u32(fh, w.shape[0])
            _write_u32(fh, w.shape[1])
            _write_f32(fh, w)
            _write_f32(fh, b)
        if cfg.kind == KIND_TOY_VIT:
            fh.write(bytes([0]))
            for value in (cfg.image_side, cfg.patch_size, cfg.depth, cfg.width, cfg.heads):
                _write_u32(fh, value)
            fh.write(bytes([0 if cfg.pooling == POOL_FLATTEN else 1]))
            for _name, arr in backbone.params.arrays():
                _write_f32(fh, arr)
        else:
            fh.write(bytes([1]))
            _write_u32(fh, cfg.feature_dim)


def load_checkpoint(
    path: str | Path, dtype=np.float32
) -> tuple[HeadParams, ToyViT | PrecomputedBackbone]:
    """Load a checkpoint; precomputed backbones come back with an empty table."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad checkpoint magic {magic!r}")
        version = _read_u32(fh, "version")
        if version != VERSION:
            raise UnsupportedVersionError(
                f"checkpoint version {version} unsupported (expected {VERSION})"
            )
        latent = _read_u32(fh, "latent size")
        feature_dim = _read_u32(fh, "feature dim")
        layers = []
        for i in range(3):
            rows = _read_u32(fh, f"layer {i + 1} rows")
            cols = _read_u32(fh, f"layer {i + 1} cols")
            w = _read_f32(fh, (rows, cols), f"layer {i + 1} weights", dtype)
            b = _read_f32(fh, (cols,), f"layer {i + 1} bias", dtype)
            layers.append((w, b))
        head = HeadParams(
            w1=layers[0][0], b1=layers[0][1],
            w2=layers[1][0], b2=layers[1][1],
            w3=layers[2][0], b3=layers[2][1],
        )
        if head.latent_size != latent or head.feature_dim != feature_dim:
            raise FormatError("checkpoint header dims disagree with layer shapes")

        kind = _read_exact(fh, 1, "backbone kind")[0]
        if kind == 0:
            side = _read_u32(fh, "image side")
            patch = _read_u32(fh, "patch size")
            depth = _read_u32(fh, "depth")
            width = _read_u32(fh, "width")
            heads = _read_u32(fh, "heads")
            pool_tag = _read_exact(fh, 1, "pooling")[0]
            if pool_tag not in (0, 1):
                raise FormatError(f"unknown pooling tag {pool_tag}")
            cfg = BackboneConfig(
                kind=KIND_TOY_VIT, image_side=side, patch_size=patch,
                depth=depth, width=width, heads=heads,
                pooling=POOL_FLATTEN if pool_tag == 0 else POOL_MEANPOOL,
            )
            patch_dim = 3 * patch * patch
            params = ToyViTParams(
                patch_w=_read_f32(fh, (patch_dim, width), "patch embed", dtype),
                patch_b=_read_f32(fh, (width,), "patch bias", dtype),
                pos=_read_f32(fh, (cfg.tokens, width), "position embed", dtype),
                blocks=[],
                lnf_g=np.empty(0), lnf_b=np.empty(0),
            )
            for i in range(depth):
                vals = {}
                for name in _BLOCK_FIELDS:
                    if name in ("wq", "wk", "wv", "wo"):
                        shape = (width, width)
                    elif name == "mlp_w1":
                        shape = (width, 4 * width)
                    elif name == "mlp_w2":
                        shape = (4 * width, width)
                    elif name == "mlp_b1":
                        shape = (4 * width,)
                    else:
                        shape = (width,)
                    vals[name] = _read_f32(fh, shape, f"block {i} {name}", dtype)
                params.blocks.append(BlockParams(**vals))
            params.lnf_g = _read_f32(fh, (width,), "final norm gain", dtype)
            params.lnf_b = _read_f32(fh, (width,), "final norm bias", dtype)
            backbone: ToyViT | PrecomputedBackbone = ToyViT(cfg, params)
        elif kind == 1:
            dim = _read_u32(fh, "precomputed feature size")
            cfg = BackboneConfig(kind=KIND_PRECOMPUTED, width=dim)
            backbone = PrecomputedBackbone(cfg)
        else:
            raise FormatError(f"unknown backbone kind tag {kind}")

        if backbone.cfg.feature_dim != feature_dim:
            raise FormatError(
                f"backbone feature dim {backbone.cfg.feature_dim} "
                f"does not match head input {feature_dim}"
            )
        if fh.read(1):
            raise FormatError("trailing bytes after checkpoint payload")
    return head, backbone


def write_embeddings(path: str | Path, dim: int, table: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(EMBEDDING_MAGIC)
        _write_u32(fh, VERSION)
        _write_u32(fh, dim)
        for key, vec in table.items():
            append_embedding_record(fh, dim, key, vec)


def append_embedding_record(fh: BinaryIO, dim: int, key: str, vec: np.ndarray) -> None:
    if vec.shape != (dim,):
        raise ValueError(f"vector for {key!r} has shape {vec.shape}, expected ({dim},)")
    encoded = key.encode("utf-8")
    if len(encoded) > 0xFFFF:
        raise ValueError("embedding id too long")
    fh.write(struct.pack("<H", len(encoded)))
    fh.write(encoded)
    _write_f32(fh, vec)


def read_embeddings(
    path: str | Path, dtype=np.float32, allow_partial_tail: bool = False
) -> tuple[int, dict[str, np.ndarray]]:
    """Read an embedding file into (dim, ordered id -> vector mapping).

    With ``allow_partial_tail`` a truncated final record (an interrupted
    append) is dropped instead of raising.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBEDDING_MAGIC:
            raise FormatError(f"bad embedding file magic {magic!r}")
        version = _read_u32(fh, "version")
        if version != VERSION:
            raise UnsupportedVersionError(
                f"embedding file version {version} unsupported (expected {VERSION})"
            )
        dim = _read_u32(fh, "dimension")
        table: dict[str, np.ndarray] = {}
        while True:
            head = fh.read(2)
            if not head:
                break
            try:
                if len(head) != 2:
                    raise FormatError("truncated record length")
                (id_len,) = struct.unpack("<H", head)
                key = _read_exact(fh, id_len, "record id").decode("utf-8")
                vec = _read_f32(fh, (dim,), f"embedding {key!r}", dtype)
            except FormatError:
                if allow_partial_tail:
                    break
                raise
            if key in table:
                raise FormatError(f"duplicate embedding id {key!r}")
            table[key] = vec
    return dim, table
