"""HTTP API for the matching service.

Endpoints (JSON bodies unless noted):

* ``POST /api/sightings`` multipart {image, lat, lon, observed_at} -> 201 {sighting_id}
* ``POST /api/match`` multipart {image}, query ``top_k`` (default 10)
  -> 200 {matches: [{sighting_id, distance, similarity}]}
* ``GET /api/sightings?min_lat&max_lat&min_lon&max_lon`` -> 200 {sightings: [...]}
* ``GET /api/sightings/{id}/image`` -> stored image bytes
* ``GET /api/health`` -> 200 {status, model_checkpoint, latent_size}

Errors use 400 (validation), 404 (unknown id), 422 (no pet found), or 500,
with body {error, detail}.
"""

from __future__ import annotations

import logging
import re

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, Response

from ..errors import FormatError, NoPetFoundError
from ..imaging import ImageTensor, crop, fit_square, load_image
from ..ingest import Detector, DetectorError, accept_detection, clamp_box
from ..model.siamese import SiameseModel
from .store import MatchStore, MatchResult, validate_coords, parse_timestamp

log = logging.getLogger(__name__)


class ApiError(Exception):
    def __init__(self, status: int, error: str, detail: str):
        super().__init__(detail)
        self.status = status
        self.error = error
        self.detail = detail


def parse_multipart(content_type: str, body: bytes) -> dict[str, bytes]:
    """Minimal multipart/form-data parser: field name -> raw content bytes."""
    match = re.search(r'boundary="?([^";,]+)"?', content_type or "")
    if not match:
        raise ApiError(400, "validation", "expected a multipart/form-data body")
    delimiter = b"--" + match.group(1).encode("ascii")
    fields: dict[str, bytes] = {}
    for chunk in body.split(delimiter)[1:]:
        if chunk.startswith(b"--"):
            break
        chunk = chunk.lstrip(b"\r\n")
        header_blob, _, content = chunk.partition(b"\r\n\r\n")
        if content.endswith(b"\r\n"):
            content = content[:-2]
        name = None
        for line in header_blob.split(b"\r\n"):
            if line.lower().startswith(b"content-disposition"):
                name_match = re.search(rb'name="([^"]*)"', line)
                if name_match:
                    name = name_match.group(1).decode("utf-8", "replace")
        if name is not None:
            fields[name] = content
    if not fields:
        raise ApiError(400, "validation", "multipart body carried no fields")
    return fields


def _sniff_extension(data: bytes) -> str:
    if data.startswith(b"\x89PNG\r\n\x1a\n"):
        return ".png"
    if data.startswith(b"\xff\xd8\xff"):
        return ".jpg"
    return ".bin"


_CONTENT_TYPES = {".png": "image/png", ".jpg": "image/jpeg", ".bin": "application/octet-stream"}


def _require_float(fields: dict[str, bytes], name: str) -> float:
    if name not in fields:
        raise ApiError(400, "validation", f"missing form field {name!r}")
    try:
        return float(fields[name].decode("utf-8"))
    except (UnicodeDecodeError, ValueError):
        raise ApiError(400, "validation", f"field {name!r} must be a number") from None


class MatchService:
    """Embeds uploads through the detector/crop/pad/model pipeline."""

    def __init__(
        self,
        model: SiameseModel,
        store: MatchStore,
        detector: Detector,
        checkpoint_name: str = "",
    ):
        self.model = model
        self.store = store
        self.detector = detector
        self.checkpoint_name = checkpoint_name

    def embed_upload(self, data: bytes) -> np.ndarray:
        try:
            img = load_image(data)
        except FormatError as exc:
            raise ApiError(400, "validation", f"undecodable image: {exc}") from exc
        try:
            boxes = self.detector.detect(img)
        except DetectorError as exc:
            raise ApiError(500, "detector", str(exc)) from exc
        box = accept_detection(boxes)
        box = clamp_box(box, img.width, img.height) if box else None
        if box is None:
            raise NoPetFoundError("no pet found in the uploaded image")
        prepared = fit_square(crop(img, box), self.model.cfg.image_side)
        return self.model.embed_image(prepared)

    def register(self, data: bytes, lat: float, lon: float, observed_at: str) -> int:
        latent = self.embed_upload(data)
        record = self.store.register(
            latent=latent,
            image_bytes=data,
            image_ext=_sniff_extension(data),
            lat=lat,
            lon=lon,
            observed_at=observed_at,
        )
        return record.sighting_id

    def match(self, data: bytes, top_k: int) -> list[MatchResult]:
        latent = self.embed_upload(data)
        return self.store.match(latent, top_k, self.model.margin)


def create_app(service: MatchService) -> FastAPI:
    app = FastAPI(title="pawmatch matchd")

    @app.exception_handler(ApiError)
    async def _api_error(_request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status, content={"error": exc.error, "detail": exc.detail}
        )

    @app.exception_handler(NoPetFoundError)
    async def _no_pet(_request: Request, exc: NoPetFoundError):
        return JSONResponse(
            status_code=422, content={"error": "no pet found", "detail": str(exc)}
        )

    @app.exception_handler(ValueError)
    async def _value_error(_request: Request, exc: ValueError):
        return JSONResponse(
            status_code=400, content={"error": "validation", "detail": str(exc)}
        )

    @app.exception_handler(Exception)
    async def _server_error(_request: Request, exc: Exception):
        log.exception("request failed")
        return JSONResponse(
            status_code=500, content={"error": "internal", "detail": str(exc)}
        )

    @app.get("/api/health")
    def health():
        return {
            "status": "ok",
            "model_checkpoint": service.checkpoint_name,
            "latent_size": service.model.latent_size,
        }

    @app.post("/api/sightings", status_code=201)
    async def register_sighting(request: Request):
        fields = parse_multipart(request.headers.get("content-type", ""), await request.body())
        if "image" not in fields:
            raise ApiError(400, "validation", "missing form field 'image'")
        lat = _require_float(fields, "lat")
        lon = _require_float(fields, "lon")
        validate_coords(lat, lon)
        if "observed_at" not in fields:
            raise ApiError(400, "validation", "missing form field 'observed_at'")
        observed_at = parse_timestamp(fields["observed_at"].decode("utf-8", "replace"))
        sighting_id = service.register(fields["image"], lat, lon, observed_at)
        return {"sighting_id": sighting_id}

    @app.post("/api/match")
    async def match(request: Request, top_k: int = 10):
        if top_k < 1:
            raise ApiError(400, "validation", "top_k must be >= 1")
        fields = parse_multipart(request.headers.get("content-type", ""), await request.body())
        if "image" not in fields:
            raise ApiError(400, "validation", "missing form field 'image'")
        results = service.match(fields["image"], top_k)
        return {
            "matches": [
                {
                    "sighting_id": r.sighting_id,
                    "distance": r.distance,
                    "similarity": r.similarity,
                }
                for r in results
            ]
        }

    @app.get("/api/sightings")
    def list_sightings(
        min_lat: float | None = None,
        max_lat: float | None = None,
        min_lon: float | None = None,
        max_lon: float | None = None,
    ):
        records = service.store.list_sightings(min_lat, max_lat, min_lon, max_lon)
        return {"sightings": [r.metadata() for r in records]}

    @app.get("/api/sightings/{sighting_id}/image")
    def sighting_image(sighting_id: int):
        record = service.store.get(sighting_id)
        if record is None:
            raise ApiError(404, "not found", f"no sighting with id {sighting_id}")
        path = service.store.image_path(record)
        if not path.exists():
            raise ApiError(404, "not found", f"image for sighting {sighting_id} is missing")
        suffix = path.suffix
        return Response(
            content=path.read_bytes(),
            media_type=_CONTENT_TYPES.get(suffix, "application/octet-stream"),
        )

    return app
