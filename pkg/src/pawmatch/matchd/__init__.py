"""Lost-pet matching service: sighting store, embedding index, HTTP API."""

from .service import ApiError, MatchService, create_app, parse_multipart
from .store import MatchResult, MatchStore, SightingRecord, validate_coords

__all__ = [
    "ApiError",
    "MatchService",
    "create_app",
    "parse_multipart",
    "MatchResult",
    "MatchStore",
    "SightingRecord",
    "validate_coords",
]
