"""Durable sighting store: append-only JSON-lines metadata plus a binary
latent file, with an in-memory index rebuilt on startup.

Registration appends to both files under a single writer lock; readers
(match, list) take a snapshot under the same lock, so a query never sees a
partially written record. Replaying the directory reproduces the index
exactly, which makes match results stable across restarts.
"""

from __future__ import annotations

import json
import struct
import threading
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

import numpy as np

from ..errors import FormatError
from ..model.checkpoint import EMBEDDING_MAGIC, VERSION, append_embedding_record, read_embeddings

SIGHTINGS_FILE = "sightings.jsonl"
LATENTS_FILE = "latents.bin"
IMAGES_DIR = "images"


def validate_coords(lat: float, lon: float) -> None:
    if not -90.0 <= lat <= 90.0:
        raise ValueError(f"latitude must be in [-90, 90], got {lat}")
    if not -180.0 <= lon <= 180.0:
        raise ValueError(f"longitude must be in [-180, 180], got {lon}")


def parse_timestamp(value: str) -> str:
    """Validate an ISO-8601 UTC timestamp and return it unchanged."""
    try:
        datetime.fromisoformat(value.replace("Z", "+00:00"))
    except ValueError as exc:
        raise ValueError(f"observed_at must be an ISO-8601 timestamp: {exc}") from exc
    return value


@dataclass(frozen=True)
class SightingRecord:
    sighting_id: int
    latent: np.ndarray
    image_ref: str
    lat: float
    lon: float
    observed_at: str

    def metadata(self) -> dict:
        return {
            "sighting_id": self.sighting_id,
            "lat": self.lat,
            "lon": self.lon,
            "observed_at": self.observed_at,
        }


@dataclass(frozen=True)
class MatchResult:
    sighting_id: int
    distance: float
    similarity: float


class MatchStore:
    def __init__(self, root: str | Path, latent_size: int):
        self.root = Path(root)
        self.latent_size = latent_size
        self.root.mkdir(parents=True, exist_ok=True)
        (self.root / IMAGES_DIR).mkdir(exist_ok=True)
        self._lock = threading.Lock()
        self._records: dict[int, SightingRecord] = {}
        self._replay()

    def _replay(self) -> None:
        meta_path = self.root / SIGHTINGS_FILE
        latents_path = self.root / LATENTS_FILE
        latents: dict[str, np.ndarray] = {}
        if latents_path.exists():
            dim, latents = read_embeddings(latents_path, allow_partial_tail=True)
            if dim != self.latent_size:
                raise FormatError(
                    f"store latents have size {dim}, model expects {self.latent_size}"
                )
        if meta_path.exists():
            with open(meta_path, "r", encoding="utf-8") as fh:
                for line_no, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        data = json.loads(line)
                        sid = int(data["sighting_id"])
                    except (json.JSONDecodeError, KeyError, ValueError) as exc:
                        raise FormatError(f"{meta_path}:{line_no}: {exc}") from exc
                    latent = latents.get(str(sid))
                    if latent is None:
                        # interrupted append: metadata without its latent is dropped
                        continue
                    self._records[sid] = SightingRecord(
                        sighting_id=sid,
                        latent=latent,
                        image_ref=data["image_file"],
                        lat=float(data["lat"]),
                        lon=float(data["lon"]),
                        observed_at=str(data["observed_at"]),
                    )

    def __len__(self) -> int:
        return len(self._records)

    def _next_id(self) -> int:
        return max(self._records, default=0) + 1

    def register(
        self,
        latent: np.ndarray,
        image_bytes: bytes,
        image_ext: str,
        lat: float,
        lon: float,
        observed_at: str,
    ) -> SightingRecord:
        validate_coords(lat, lon)
        observed_at = parse_timestamp(observed_at)
        latent = np.asarray(latent, dtype=np.float32)
        if latent.shape != (self.latent_size,):
            raise ValueError(f"latent must have length {self.latent_size}")

        with self._lock:
            sid = self._next_id()
            image_ref = f"{IMAGES_DIR}/{sid}{image_ext}"
            (self.root / image_ref).write_bytes(image_bytes)

            latents_path = self.root / LATENTS_FILE
            if not latents_path.exists():
                with open(latents_path, "wb") as fh:
                    fh.write(EMBEDDING_MAGIC)
                    fh.write(struct.pack("<I", VERSION))
                    fh.write(struct.pack("<I", self.latent_size))
            with open(latents_path, "ab") as fh:
                append_embedding_record(fh, self.latent_size, str(sid), latent)

            record = SightingRecord(
                sighting_id=sid, latent=latent, image_ref=image_ref,
                lat=lat, lon=lon, observed_at=observed_at,
            )
            with open(self.root / SIGHTINGS_FILE, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({**record.metadata(), "image_file": image_ref}))
                fh.write("\n")
            self._records[sid] = record
        return record

    def _snapshot(self) -> list[SightingRecord]:
        with self._lock:
            return list(self._records.values())

    def match(self, query: np.ndarray, top_k: int, margin: float) -> list[MatchResult]:
        """Exact Euclidean scan, ascending distance, ties broken by id."""
        if top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {top_k}")
        records = self._snapshot()
        if not records:
            return []
        query = np.asarray(query, dtype=np.float64)
        stack = np.stack([r.latent.astype(np.float64) for r in records])
        d = np.sqrt(((stack - query) ** 2).sum(axis=1))
        order = sorted(range(len(records)), key=lambda i: (d[i], records[i].sighting_id))
        return [
            MatchResult(
                sighting_id=records[i].sighting_id,
                distance=float(d[i]),
                similarity=max(0.0, 1.0 - float(d[i]) / margin),
            )
            for i in order[:top_k]
        ]

    def list_sightings(
        self,
        min_lat: float | None = None,
        max_lat: float | None = None,
        min_lon: float | None = None,
        max_lon: float | None = None,
    ) -> list[SightingRecord]:
        """Records inside the inclusive geo box (if any), newest first."""
        bounds = [b for b in (min_lat, max_lat, min_lon, max_lon)]
        if any(b is not None for b in bounds):
            lo_lat = -90.0 if min_lat is None else min_lat
            hi_lat = 90.0 if max_lat is None else max_lat
            lo_lon = -180.0 if min_lon is None else min_lon
            hi_lon = 180.0 if max_lon is None else max_lon
            validate_coords(lo_lat, lo_lon)
            validate_coords(hi_lat, hi_lon)
            if lo_lat > hi_lat or lo_lon > hi_lon:
                raise ValueError("geo box minimum exceeds maximum")
        else:
            lo_lat, hi_lat, lo_lon, hi_lon = -90.0, 90.0, -180.0, 180.0

        selected = [
            r
            for r in self._snapshot()
            if lo_lat <= r.lat <= hi_lat and lo_lon <= r.lon <= hi_lon
        ]
        selected.sort(key=lambda r: (r.observed_at, r.sighting_id), reverse=True)
        return selected

    def get(self, sighting_id: int) -> SightingRecord | None:
        with self._lock:
            return self._records.get(sighting_id)

    def image_path(self, record: SightingRecord) -> Path:
        return self.root / record.image_ref
