"""Corpus construction: detect, crop, square-fit, augment, and manifest.

The input directory holds one sub-directory per pet. Every accepted
detection yields three stored images: the cropped/padded original
(variant 0) and two augmentations (variants 1 and 2), each produced under
a policy drawn uniformly from the policy set. Pets, not images, are split
into train/heldout.

Per-image augmentation randomness comes from ``derive(seed, "augment",
source_id, variant)`` so results are independent of processing order.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

import requests

from .errors import EmptyCorpusError, FormatError
from .imaging import (
    AugmentPolicy,
    BoundingBox,
    ImageTensor,
    apply_policy,
    crop,
    fit_square,
    load_image,
    save_png,
)
from .rng import derive

log = logging.getLogger(__name__)

IMAGE_SIDE = 384
ACCEPT_LABEL = "dog"
ACCEPT_CONFIDENCE = 0.9
IMAGE_EXTENSIONS = {".png", ".jpg", ".jpeg"}

MANIFEST_KEYS = ("pet_id", "image_id", "source_id", "variant", "path", "split")


class DetectorError(Exception):
    """The detector adapter could not produce a result for an image."""


class Detector(Protocol):
    def detect(self, img: ImageTensor) -> list[BoundingBox]: ...


class StubDetector:
    """Always detects one dog covering the whole frame; used in tests and demos."""

    def detect(self, img: ImageTensor) -> list[BoundingBox]:
        return [BoundingBox(0, 0, img.width, img.height, label="dog", confidence=1.0)]


class HttpDetector:
    """Remote detector: POST image bytes, receive JSON [{x,y,w,h,label,confidence}]."""

    def __init__(self, url: str, timeout: float = 30.0):
        self.url = url
        self.timeout = timeout

    def detect(self, img: ImageTensor) -> list[BoundingBox]:
        from .imaging import encode_png

        try:
            resp = requests.post(
                self.url,
                data=encode_png(img),
                headers={"Content-Type": "application/octet-stream"},
                timeout=self.timeout,
            )
            resp.raise_for_status()
            payload = resp.json()
        except (requests.RequestException, ValueError) as exc:
            raise DetectorError(f"detector at {self.url} failed: {exc}") from exc
        try:
            return [
                BoundingBox(
                    x=int(b["x"]), y=int(b["y"]), w=int(b["w"]), h=int(b["h"]),
                    label=str(b["label"]), confidence=float(b["confidence"]),
                )
                for b in payload
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DetectorError(f"malformed detector response: {exc}") from exc


def make_detector(spec: str) -> Detector:
    """"stub" or an http(s) URL."""
    if spec == "stub":
        return StubDetector()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpDetector(spec)
    raise ValueError(f"detector must be 'stub' or an http(s) URL, got {spec!r}")


def accept_detection(boxes: Iterable[BoundingBox]) -> BoundingBox | None:
    """The highest-confidence dog box at confidence >= 0.9, else None."""
    best = None
    for box in boxes:
        if box.label != ACCEPT_LABEL or box.confidence < ACCEPT_CONFIDENCE:
            continue
        if best is None or box.confidence > best.confidence:
            best = box
    return best


def clamp_box(box: BoundingBox, width: int, height: int) -> BoundingBox | None:
    """Intersect a box with the image; None if nothing remains."""
    x0 = max(0, box.x)
    y0 = max(0, box.y)
    x1 = min(width, box.x + box.w)
    y1 = min(height, box.y + box.h)
    if x1 - x0 < 1 or y1 - y0 < 1:
        return None
    return BoundingBox(x0, y0, x1 - x0, y1 - y0, box.label, box.confidence)


@dataclass(frozen=True)
class ImageRecord:
    pet_id: str
    image_id: str
    source_id: str
    variant: int
    path: str
    split: str

    def __post_init__(self):
        if self.variant not in (0, 1, 2):
            raise ValueError(f"variant must be 0, 1, or 2, got {self.variant}")
        if self.split not in ("train", "heldout"):
            raise ValueError(f"split must be train or heldout, got {self.split!r}")


class Manifest:
    """Ordered image records plus derived corpus statistics."""

    def __init__(self, records: Iterable[ImageRecord], base_dir: Path | None = None):
        self.records: list[ImageRecord] = list(records)
        self.base_dir = Path(base_dir) if base_dir is not None else None
        self._validate()

    def _validate(self) -> None:
        seen: set[tuple[str, int]] = set()
        split_of: dict[str, str] = {}
        ids: set[str] = set()
        for rec in self.records:
            key = (rec.source_id, rec.variant)
            if key in seen:
                raise ValueError(f"duplicate (source_id, variant): {key}")
            seen.add(key)
            if rec.image_id in ids:
                raise ValueError(f"duplicate image_id: {rec.image_id}")
            ids.add(rec.image_id)
            prev = split_of.setdefault(rec.pet_id, rec.split)
            if prev != rec.split:
                raise ValueError(f"pet {rec.pet_id} appears in both splits")

    @property
    def pet_count(self) -> int:
        return len({r.pet_id for r in self.records})

    @property
    def image_count(self) -> int:
        return len(self.records)

    @property
    def source_count(self) -> int:
        return len({r.source_id for r in self.records})

    @property
    def mean_images_per_pet(self) -> float:
        pets = self.pet_count
        return self.source_count / pets if pets else 0.0

    def split_records(self, split: str) -> list[ImageRecord]:
        return [r for r in self.records if r.split == split]

    def by_image_id(self) -> dict[str, ImageRecord]:
        return {r.image_id: r for r in self.records}

    def resolve_path(self, rec: ImageRecord) -> Path:
        p = Path(rec.path)
        if p.is_absolute() or self.base_dir is None:
            return p
        return self.base_dir / p

    def load_image(self, rec: ImageRecord) -> ImageTensor:
        return load_image(self.resolve_path(rec))

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps({k: getattr(rec, k) for k in MANIFEST_KEYS}))
                fh.write("\n")

    @classmethod
    def read_jsonl(cls, path: str | Path) -> "Manifest":
        path = Path(path)
        records = []
        with open(path, "r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    data = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise FormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
                if set(data) != set(MANIFEST_KEYS):
                    raise FormatError(f"{path}:{line_no}: keys must be exactly {MANIFEST_KEYS}")
                records.append(ImageRecord(**data))
        return cls(records, base_dir=path.parent)


def _scan_input(input_dir: Path) -> list[tuple[str, Path]]:
    """(pet_id, image path) pairs, sorted for deterministic processing."""
    found = []
    for pet_dir in sorted(p for p in input_dir.iterdir() if p.is_dir()):
        for img_path in sorted(pet_dir.iterdir()):
            if img_path.suffix.lower() in IMAGE_EXTENSIONS:
                found.append((pet_dir.name, img_path))
    return found


def build_corpus(
    input_dir: str | Path,
    out_dir: str | Path,
    detector: Detector,
    policy_set: list[AugmentPolicy],
    seed: int,
    heldout_fraction: float,
    image_side: int = IMAGE_SIDE,
    skip_log: dict | None = None,
) -> Manifest:
    """Run the full detect/crop/pad/augment pipeline and write the manifest.

    Returns the manifest, also written to ``out_dir/manifest.jsonl`` with
    image paths relative to ``out_dir``. Unreadable images, detector
    failures, and images with no acceptable dog detection are skipped and
    counted in ``skip_log`` when given.
    """
    if not 0.0 <= heldout_fraction < 1.0:
        raise ValueError(f"heldout_fraction must be in [0, 1), got {heldout_fraction}")
    if not policy_set:
        raise ValueError("policy_set must not be empty")
    input_dir = Path(input_dir)
    out_dir = Path(out_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory {input_dir} does not exist")
    out_dir.mkdir(parents=True, exist_ok=True)

    skips = {"unreadable": 0, "detector": 0, "no_dog": 0}
    accepted: list[tuple[str, str, Path, list[Path]]] = []

    for pet_id, img_path in _scan_input(input_dir):
        source_id = f"{pet_id}/{img_path.name}"
        try:
            img = load_image(img_path)
        except FormatError:
            skips["unreadable"] += 1
            log.warning("skipping unreadable image %s", img_path)
            continue
        try:
            boxes = detector.detect(img)
        except DetectorError as exc:
            skips["detector"] += 1
            log.warning("skipping %s: %s", img_path, exc)
            continue
        box = accept_detection(boxes)
        box = clamp_box(box, img.width, img.height) if box else None
        if box is None:
            skips["no_dog"] += 1
            continue

        base = fit_square(crop(img, box), image_side)
        pet_out = out_dir / "images" / pet_id
        pet_out.mkdir(parents=True, exist_ok=True)
        variant_paths = []
        for variant in (0, 1, 2):
            if variant == 0:
                result = base
            else:
                rng = derive(seed, "augment", source_id, str(variant))
                policy = policy_set[rng.below(len(policy_set))]
                result = apply_policy(base, policy, rng)
            rel = Path("images") / pet_id / f"{img_path.stem}_v{variant}.png"
            save_png(result, out_dir / rel)
            variant_paths.append(rel)
        accepted.append((pet_id, source_id, img_path, variant_paths))

    if skip_log is not None:
        skip_log.update(skips)
    if not accepted:
        raise EmptyCorpusError(
            f"no usable images under {input_dir} "
            f"(skipped: {skips['unreadable']} unreadable, "
            f"{skips['detector']} detector failures, {skips['no_dog']} without a dog)"
        )

    pets = sorted({pet_id for pet_id, *_ in accepted})
    shuffled = list(pets)
    derive(seed, "split").shuffle(shuffled)
    n_held = int(len(pets) * heldout_fraction + 0.5)
    heldout = set(shuffled[:n_held])

    records = []
    for pet_id, source_id, _img_path, variant_paths in accepted:
        split = "heldout" if pet_id in heldout else "train"
        for variant, rel in enumerate(variant_paths):
            records.append(
                ImageRecord(
                    pet_id=pet_id,
                    image_id=f"{source_id}#{variant}",
                    source_id=source_id,
                    variant=variant,
                    path=str(rel),
                    split=split,
                )
            )
    records.sort(key=lambda r: (r.pet_id, r.source_id, r.variant))

    manifest = Manifest(records, base_dir=out_dir)
    manifest.write_jsonl(out_dir / "manifest.jsonl")
    log.info(
        "corpus built: %d pets, %d images (%.2f sources/pet), skips=%s",
        manifest.pet_count, manifest.image_count, manifest.mean_images_per_pet, skips,
    )
    return manifest
