import numpy as np
import pytest

from pawmatch.imaging import ImageTensor, save_png
from pawmatch.ingest import ImageRecord, Manifest, StubDetector, build_corpus
from pawmatch.imaging import builtin_policies
from pawmatch.model import POOL_MEANPOOL, BackboneConfig, ToyViT
from pawmatch.rng import SplitMix64, derive


def record(pet, source, variant, split="train"):
    return ImageRecord(
        pet_id=pet,
        image_id=f"{source}#{variant}",
        source_id=source,
        variant=variant,
        path=f"images/{source}_v{variant}.png",
        split=split,
    )


@pytest.fixture
def toy_manifest():
    """3 train pets (2, 1, and 3 sources) plus 2 heldout pets; variants 0-2."""
    records = []
    sources = {
        "ada": ["ada/a.png", "ada/b.png"],
        "bo": ["bo/a.png"],
        "cy": ["cy/a.png", "cy/b.png", "cy/c.png"],
    }
    for pet, srcs in sources.items():
        for src in srcs:
            for variant in range(3):
                records.append(record(pet, src, variant))
    for pet in ("hex", "ivy"):
        for src in (f"{pet}/a.png", f"{pet}/b.png"):
            for variant in range(3):
                records.append(record(pet, src, variant, split="heldout"))
    return Manifest(records)


def random_image(rng: np.random.Generator, width: int, height: int) -> ImageTensor:
    return ImageTensor(rng.integers(0, 256, (height, width, 3), dtype=np.uint8))


def make_source_dir(root, n_pets=6, images_per_pet=3, seed=5, side_range=(70, 120)):
    """Pet directories of distinctly colored noise images."""
    rng = np.random.default_rng(seed)
    for p in range(n_pets):
        pet_dir = root / f"pet{p}"
        pet_dir.mkdir(parents=True, exist_ok=True)
        base = rng.integers(40, 216, (3,))
        for i in range(images_per_pet):
            w = int(rng.integers(*side_range))
            h = int(rng.integers(*side_range))
            px = np.clip(
                base[None, None, :] + rng.integers(-35, 36, (h, w, 3)), 0, 255
            ).astype(np.uint8)
            save_png(ImageTensor(px), pet_dir / f"img{i}.png")
    return root


@pytest.fixture(scope="session")
def disk_corpus(tmp_path_factory):
    """A small ingested corpus on disk: 6 pets x 3 images at side 64."""
    root = tmp_path_factory.mktemp("corpus")
    make_source_dir(root / "input")
    manifest = build_corpus(
        root / "input",
        root / "out",
        StubDetector(),
        builtin_policies(),
        seed=11,
        heldout_fraction=1 / 3,
        image_side=64,
    )
    return manifest


@pytest.fixture(scope="session")
def toy_backbone():
    cfg = BackboneConfig(
        kind="toy_vit", image_side=64, patch_size=16, depth=2, width=32,
        heads=4, pooling=POOL_MEANPOOL,
    )
    return ToyViT.create(cfg, derive(11, "backbone-init"))


@pytest.fixture
def seeded_rng():
    return SplitMix64(20240817)
