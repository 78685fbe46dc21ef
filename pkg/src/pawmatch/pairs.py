"""Pairwise dataset generation and sequential k-fold assignment.

Sampling is driven entirely by one :class:`SplitMix64` stream, so a seed
pins the exact pair sequence. The draw order is a frozen contract:

1. one ``uniform()`` draw against ``p_same`` selects the label;
2. *different*: ``below(n_pets)`` picks the first pet, ``below(n_pets - 1)``
   the second (shifted past the first), then one ``below(len(images))``
   image draw per pet, in that order;
3. *same*: ``below(n_pets)`` draws repeat until they land on a pet with at
   least two distinct source images, then one image draw, then one draw
   over the images whose source differs from the first pick.

Pets are selected uniformly over pets (not over images). A pair never
joins two augmentations of the same source image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

from .errors import FormatError
from .ingest import ImageRecord, Manifest
from .rng import SplitMix64

SeededRng = SplitMix64

SAME = "same"
DIFFERENT = "different"


@dataclass(frozen=True)
class PairSample:
    a: str
    b: str
    label: str

    def __post_init__(self):
        if self.label not in (SAME, DIFFERENT):
            raise ValueError(f"label must be {SAME!r} or {DIFFERENT!r}, got {self.label!r}")
        if self.a == self.b:
            raise ValueError("pair members must be distinct images")


class PairSampler:
    """Pre-indexed sampler over one split of a manifest."""

    def __init__(self, manifest: Manifest, split: str):
        by_pet: dict[str, list[ImageRecord]] = {}
        for rec in manifest.split_records(split):
            by_pet.setdefault(rec.pet_id, []).append(rec)
        self.pet_ids = sorted(by_pet)
        self.records = [by_pet[p] for p in self.pet_ids]
        if len(self.pet_ids) < 2:
            raise ValueError(f"split {split!r} needs >= 2 pets, has {len(self.pet_ids)}")
        self._multi_source = [
            len({r.source_id for r in recs}) >= 2 for recs in self.records
        ]
        self.split = split

    def sample(self, p_same: float, rng: SplitMix64) -> PairSample:
        if not 0.0 <= p_same <= 1.0:
            raise ValueError(f"p_same must be in [0, 1], got {p_same}")
        n = len(self.pet_ids)
        same = rng.uniform() < p_same
        if not same:
            i = rng.below(n)
            j = rng.below(n - 1)
            if j >= i:
                j += 1
            rec_a = self.records[i][rng.below(len(self.records[i]))]
            rec_b = self.records[j][rng.below(len(self.records[j]))]
            return PairSample(rec_a.image_id, rec_b.image_id, DIFFERENT)

        if not any(self._multi_source):
            raise ValueError(
                f"cannot sample a same-pair: no pet in split {self.split!r} "
                "has two distinct source images"
            )
        while True:
            p = rng.below(n)
            if self._multi_source[p]:
                break
        recs = self.records[p]
        rec_a = recs[rng.below(len(recs))]
        candidates = [r for r in recs if r.source_id != rec_a.source_id]
        rec_b = candidates[rng.below(len(candidates))]
        return PairSample(rec_a.image_id, rec_b.image_id, SAME)


def sample_pair(manifest: Manifest, split: str, p_same: float, rng: SplitMix64) -> PairSample:
    """One pair from the split; see the module docstring for the draw order."""
    return PairSampler(manifest, split).sample(p_same, rng)


def pair_iter(
    manifest: Manifest, split: str, p_same: float, seed: int
) -> Iterator[PairSample]:
    """Endless deterministic pair stream from one generator seeded with ``seed``."""
    sampler = PairSampler(manifest, split)
    rng = SplitMix64(seed)
    while True:
        yield sampler.sample(p_same, rng)


def pair_stream(
    manifest: Manifest, split: str, p_same: float, seed: int, count: int
) -> list[PairSample]:
    """Exactly ``count`` pairs; ``pair_stream(seed, n)`` prefixes ``pair_stream(seed, n+m)``."""
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    it = pair_iter(manifest, split, p_same, seed)
    return [next(it) for _ in range(count)]


@dataclass(frozen=True)
class FoldAssignment:
    """Sequential fold assignment: pair i belongs to fold i mod k."""

    k: int
    pair_count: int

    def fold_of(self, index: int) -> int:
        if not 0 <= index < self.pair_count:
            raise IndexError(f"pair index {index} out of range")
        return index % self.k

    @property
    def fold_sizes(self) -> list[int]:
        base, extra = divmod(self.pair_count, self.k)
        return [base + (1 if f < extra else 0) for f in range(self.k)]


def assign_folds(pair_count: int, k: int) -> FoldAssignment:
    if k < 2:
        raise ValueError(f"fold count must be >= 2, got {k}")
    if pair_count < k:
        raise ValueError(f"need at least {k} pairs for {k} folds, got {pair_count}")
    return FoldAssignment(k=k, pair_count=pair_count)


class FoldedPairStream:
    """Routes one sequential pair stream into train/test sides of a fold split.

    Pair i (0-based position in the stream) belongs to fold ``i mod k``;
    ``next_train``/``next_test`` pull the next pair outside/inside the test
    fold, buffering whatever the underlying stream yields in between. With
    ``k=None`` the whole stream is the train side.
    """

    def __init__(
        self,
        manifest: Manifest,
        split: str,
        p_same: float,
        seed: int,
        k: int | None = None,
        test_fold: int = 0,
    ):
        if k is not None:
            if k < 2:
                raise ValueError(f"fold count must be >= 2, got {k}")
            if not 0 <= test_fold < k:
                raise ValueError(f"test_fold must be in 0..{k - 1}, got {test_fold}")
        self._iter = pair_iter(manifest, split, p_same, seed)
        self._index = 0
        self.k = k
        self.test_fold = test_fold
        self._train_buf: list[PairSample] = []
        self._test_buf: list[PairSample] = []

    def _pull(self) -> None:
        pair = next(self._iter)
        is_test = self.k is not None and self._index % self.k == self.test_fold
        self._index += 1
        (self._test_buf if is_test else self._train_buf).append(pair)

    def next_train(self) -> PairSample:
        while not self._train_buf:
            self._pull()
        return self._train_buf.pop(0)

    def next_test(self) -> PairSample:
        if self.k is None:
            raise ValueError("stream has no test fold")
        while not self._test_buf:
            self._pull()
        return self._test_buf.pop(0)

    def take_train(self, n: int) -> list[PairSample]:
        return [self.next_train() for _ in range(n)]

    def take_test(self, n: int) -> list[PairSample]:
        return [self.next_test() for _ in range(n)]


def write_pairs_jsonl(pairs: list[PairSample], path: str | Path) -> None:
    """Audit export: one {a, b, label} object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(json.dumps({"a": p.a, "b": p.b, "label": p.label}))
            fh.write("\n")


def read_pairs_jsonl(path: str | Path) -> list[PairSample]:
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
                pairs.append(PairSample(data["a"], data["b"], data["label"]))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise FormatError(f"{path}:{line_no}: {exc}") from exc
    return pairs
