import numpy as np
import pytest
from fastapi.testclient import TestClient

from pawmatch.errors import FormatError
from pawmatch.imaging import BoundingBox, ImageTensor, encode_png
from pawmatch.ingest import StubDetector
from pawmatch.matchd import MatchService, MatchStore, create_app, parse_multipart
from pawmatch.model import SiameseModel, init_head
from pawmatch.rng import SplitMix64
from pawmatch.synthetic import render_identity_image


@pytest.fixture(scope="module")
def model(toy_backbone):
    return SiameseModel(toy_backbone, init_head(32, 16, SplitMix64(77)), margin=1.66)


def pet_png(identity: int, image: int = 0) -> bytes:
    return encode_png(render_identity_image(identity, image, 8, seed=123))


@pytest.fixture
def service(model, tmp_path):
    store = MatchStore(tmp_path / "store", model.latent_size)
    return MatchService(model, store, StubDetector(), checkpoint_name="test.ckpt")


@pytest.fixture
def client(service):
    return TestClient(create_app(service), raise_server_exceptions=False)


def upload(client, path, image_bytes, extra=None, **kwargs):
    files = {"image": ("photo.png", image_bytes, "image/png")}
    return client.post(path, files=files, data=extra or {}, **kwargs)


class TestStore:
    def test_register_and_match_round_trip(self, model, tmp_path):
        store = MatchStore(tmp_path / "s", model.latent_size)
        latent = np.arange(16, dtype=np.float32)
        record = store.register(latent, b"png-bytes", ".png", 52.0, 6.0,
                                "2024-05-01T10:00:00Z")
        assert record.sighting_id == 1
        assert len(store) == 1
        results = store.match(latent, top_k=5, margin=1.66)
        assert results[0].sighting_id == 1
        assert results[0].distance == 0.0
        assert results[0].similarity == 1.0

    def test_similarity_zero_at_margin(self, model, tmp_path):
        store = MatchStore(tmp_path / "s", 2)
        store.register(np.array([0.0, 0.0], dtype=np.float32), b"x", ".png",
                       0.0, 0.0, "2024-01-01T00:00:00+00:00")
        query = np.array([1.66, 0.0])
        result = store.match(query, top_k=1, margin=1.66)[0]
        assert result.distance == pytest.approx(1.66, abs=1e-7)
        assert result.similarity == pytest.approx(0.0, abs=1e-7)

    def test_restart_reproduces_index(self, model, tmp_path):
        root = tmp_path / "s"
        store = MatchStore(root, 4)
        rng = np.random.default_rng(3)
        for i in range(5):
            store.register(rng.normal(size=4).astype(np.float32), b"img", ".png",
                           float(i), float(i), f"2024-01-0{i + 1}T00:00:00Z")
        query = rng.normal(size=4)
        before = store.match(query, top_k=5, margin=1.66)
        reopened = MatchStore(root, 4)
        after = reopened.match(query, top_k=5, margin=1.66)
        assert before == after

    def test_partial_latent_tail_recovered(self, model, tmp_path):
        root = tmp_path / "s"
        store = MatchStore(root, 3)
        store.register(np.ones(3, dtype=np.float32), b"a", ".png", 1.0, 1.0,
                       "2024-01-01T00:00:00Z")
        store.register(np.zeros(3, dtype=np.float32), b"b", ".png", 2.0, 2.0,
                       "2024-01-02T00:00:00Z")
        latents = root / "latents.bin"
        latents.write_bytes(latents.read_bytes()[:-4])  # simulate torn append
        reopened = MatchStore(root, 3)
        assert len(reopened) == 1  # the torn record is dropped with its metadata

    def test_latent_size_mismatch_refused(self, tmp_path):
        root = tmp_path / "s"
        store = MatchStore(root, 4)
        store.register(np.ones(4, dtype=np.float32), b"a", ".png", 0.0, 0.0,
                       "2024-01-01T00:00:00Z")
        with pytest.raises(FormatError, match="latents have size 4"):
            MatchStore(root, 8)

    def test_coordinate_validation(self, tmp_path):
        store = MatchStore(tmp_path / "s", 2)
        with pytest.raises(ValueError):
            store.register(np.zeros(2, dtype=np.float32), b"x", ".png", 95.0, 0.0,
                           "2024-01-01T00:00:00Z")
        with pytest.raises(ValueError):
            store.register(np.zeros(2, dtype=np.float32), b"x", ".png", 0.0, 200.0,
                           "2024-01-01T00:00:00Z")
        with pytest.raises(ValueError):
            store.register(np.zeros(2, dtype=np.float32), b"x", ".png", 0.0, 0.0,
                           "yesterday-ish")

    def test_geo_box_inclusive_and_newest_first(self, tmp_path):
        store = MatchStore(tmp_path / "s", 2)
        coords = [(10.0, 10.0), (20.0, 20.0), (30.0, 30.0)]
        for i, (lat, lon) in enumerate(coords):
            store.register(np.zeros(2, dtype=np.float32), b"x", ".png", lat, lon,
                           f"2024-01-0{i + 1}T00:00:00Z")
        all_recs = store.list_sightings()
        assert [r.sighting_id for r in all_recs] == [3, 2, 1]  # newest first
        boxed = store.list_sightings(min_lat=10.0, max_lat=20.0,
                                     min_lon=10.0, max_lon=20.0)
        assert [r.sighting_id for r in boxed] == [2, 1]  # edges inclusive
        none = store.list_sightings(min_lat=50.0, max_lat=60.0,
                                    min_lon=0.0, max_lon=1.0)
        assert none == []

    def test_match_ties_broken_by_id(self, tmp_path):
        store = MatchStore(tmp_path / "s", 2)
        for i in range(3):
            store.register(np.zeros(2, dtype=np.float32), b"x", ".png", 0.0, 0.0,
                           "2024-01-01T00:00:00Z")
        results = store.match(np.zeros(2), top_k=3, margin=1.0)
        assert [r.sighting_id for r in results] == [1, 2, 3]

    def test_empty_store_matches_nothing(self, tmp_path):
        store = MatchStore(tmp_path / "s", 2)
        assert store.match(np.zeros(2), top_k=3, margin=1.0) == []

    def test_top_k_validation(self, tmp_path):
        store = MatchStore(tmp_path / "s", 2)
        with pytest.raises(ValueError):
            store.match(np.zeros(2), top_k=0, margin=1.0)


class TestMultipartParser:
    def test_round_trip_binary(self):
        body = (
            b"--BOUND\r\n"
            b'Content-Disposition: form-data; name="image"; filename="x.png"\r\n'
            b"Content-Type: image/png\r\n\r\n"
            b"\x89PNG\r\n\x1a\nBINARY\r\nDATA\r\n"
            b"--BOUND\r\n"
            b'Content-Disposition: form-data; name="lat"\r\n\r\n'
            b"52.5\r\n"
            b"--BOUND--\r\n"
        )
        fields = parse_multipart('multipart/form-data; boundary=BOUND', body)
        assert fields["image"] == b"\x89PNG\r\n\x1a\nBINARY\r\nDATA"
        assert fields["lat"] == b"52.5"

    def test_missing_boundary(self):
        from pawmatch.matchd import ApiError

        with pytest.raises(ApiError):
            parse_multipart("text/plain", b"payload")


class TestApi:
    def test_health(self, client, model):
        resp = client.get("/api/health")
        assert resp.status_code == 200
        body = resp.json()
        assert body["status"] == "ok"
        assert body["model_checkpoint"] == "test.ckpt"
        assert body["latent_size"] == model.latent_size

    def test_register_match_round_trip(self, client):
        photo = pet_png(1)
        resp = upload(client, "/api/sightings", photo,
                      {"lat": "52.0", "lon": "6.0",
                       "observed_at": "2024-05-01T10:00:00Z"})
        assert resp.status_code == 201
        sid = resp.json()["sighting_id"]

        resp = upload(client, "/api/match", photo)
        assert resp.status_code == 200
        matches = resp.json()["matches"]
        assert matches[0]["sighting_id"] == sid
        assert matches[0]["distance"] == pytest.approx(0.0, abs=1e-6)
        assert matches[0]["similarity"] == pytest.approx(1.0, abs=1e-6)

    def test_match_empty_store(self, client):
        resp = upload(client, "/api/match", pet_png(2))
        assert resp.status_code == 200
        assert resp.json()["matches"] == []

    def test_register_increments_store(self, client, service):
        n0 = len(service.store)
        resp = upload(client, "/api/sightings", pet_png(3),
                      {"lat": "1.0", "lon": "2.0",
                       "observed_at": "2024-02-02T00:00:00Z"})
        assert resp.status_code == 201
        assert len(service.store) == n0 + 1

    def test_invalid_latitude_rejected(self, client):
        resp = upload(client, "/api/sightings", pet_png(4),
                      {"lat": "95", "lon": "0",
                       "observed_at": "2024-02-02T00:00:00Z"})
        assert resp.status_code == 400
        body = resp.json()
        assert set(body) == {"error", "detail"}

    def test_undecodable_image_rejected(self, client):
        resp = upload(client, "/api/sightings", b"not an image",
                      {"lat": "0", "lon": "0",
                       "observed_at": "2024-02-02T00:00:00Z"})
        assert resp.status_code == 400

    def test_no_pet_found_is_422(self, model, tmp_path):
        class NoDogDetector:
            def detect(self, img):
                return [BoundingBox(0, 0, img.width, img.height,
                                    label="cat", confidence=0.99)]

        store = MatchStore(tmp_path / "s2", model.latent_size)
        svc = MatchService(model, store, NoDogDetector())
        c = TestClient(create_app(svc), raise_server_exceptions=False)
        resp = upload(c, "/api/match", pet_png(5))
        assert resp.status_code == 422
        assert resp.json()["error"] == "no pet found"

    def test_sightings_listing_and_box_filter(self, client):
        for i, (lat, lon) in enumerate([(10.0, 10.0), (40.0, 40.0)]):
            upload(client, "/api/sightings", pet_png(6, i),
                   {"lat": str(lat), "lon": str(lon),
                    "observed_at": f"2024-03-0{i + 1}T00:00:00Z"})
        resp = client.get("/api/sightings")
        assert resp.status_code == 200
        assert len(resp.json()["sightings"]) == 2
        resp = client.get(
            "/api/sightings",
            params={"min_lat": 0, "max_lat": 20, "min_lon": 0, "max_lon": 20},
        )
        listed = resp.json()["sightings"]
        assert len(listed) == 1
        assert listed[0]["lat"] == 10.0

    def test_sighting_image_round_trip(self, client):
        photo = pet_png(7)
        sid = upload(client, "/api/sightings", photo,
                     {"lat": "0", "lon": "0",
                      "observed_at": "2024-02-02T00:00:00Z"}).json()["sighting_id"]
        resp = client.get(f"/api/sightings/{sid}/image")
        assert resp.status_code == 200
        assert resp.content == photo
        assert resp.headers["content-type"] == "image/png"

    def test_unknown_sighting_404(self, client):
        resp = client.get("/api/sightings/99999/image")
        assert resp.status_code == 404
        assert resp.json()["error"] == "not found"

    def test_top_k_limits_results(self, client):
        for i in range(3):
            upload(client, "/api/sightings", pet_png(i),
                   {"lat": "0", "lon": "0",
                    "observed_at": "2024-02-02T00:00:00Z"})
        resp = upload(client, "/api/match", pet_png(0), params={"top_k": 2})
        assert len(resp.json()["matches"]) == 2
        resp = upload(client, "/api/match", pet_png(0), params={"top_k": 0})
        assert resp.status_code == 400

    def test_restart_identical_matches(self, model, tmp_path):
        root = tmp_path / "restart"
        store = MatchStore(root, model.latent_size)
        svc = MatchService(model, store, StubDetector())
        c = TestClient(create_app(svc), raise_server_exceptions=False)
        for i in range(4):
            upload(c, "/api/sightings", pet_png(i),
                   {"lat": "0", "lon": "0", "observed_at": "2024-02-02T00:00:00Z"})
        query = pet_png(0)
        before = upload(c, "/api/match", query).json()

        store2 = MatchStore(root, model.latent_size)
        svc2 = MatchService(model, store2, StubDetector())
        c2 = TestClient(create_app(svc2), raise_server_exceptions=False)
        after = upload(c2, "/api/match", query).json()
        assert before == after

    def test_missing_fields_rejected(self, client):
        resp = client.post(
            "/api/sightings",
            files={"image": ("x.png", pet_png(0), "image/png")},
            data={"lat": "0"},
        )
        assert resp.status_code == 400
