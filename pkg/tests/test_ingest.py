import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import numpy as np
import pytest

from pawmatch.errors import EmptyCorpusError
from pawmatch.imaging import BoundingBox, ImageTensor, builtin_policies, save_png
from pawmatch.ingest import (
    HttpDetector,
    ImageRecord,
    Manifest,
    StubDetector,
    accept_detection,
    build_corpus,
    clamp_box,
    make_detector,
)

from conftest import make_source_dir, record


@pytest.fixture
def policies():
    return builtin_policies()


class _DetectorHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        body = json.dumps(self.server.boxes).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def detector_server():
    server = HTTPServer(("127.0.0.1", 0), _DetectorHandler)
    server.boxes = []
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield server
    server.shutdown()


class TestDetectors:
    def test_stub_returns_whole_frame(self):
        img = ImageTensor.full(37, 21, 5)
        boxes = StubDetector().detect(img)
        assert boxes == [BoundingBox(0, 0, 37, 21, label="dog", confidence=1.0)]

    def test_http_detector_round_trip(self, detector_server):
        detector_server.boxes = [
            {"x": 1, "y": 2, "w": 5, "h": 6, "label": "dog", "confidence": 0.97}
        ]
        url = f"http://127.0.0.1:{detector_server.server_port}/detect"
        boxes = HttpDetector(url).detect(ImageTensor.full(16, 16, 9))
        assert boxes == [BoundingBox(1, 2, 5, 6, label="dog", confidence=0.97)]

    def test_make_detector(self):
        assert isinstance(make_detector("stub"), StubDetector)
        assert isinstance(make_detector("http://x/d"), HttpDetector)
        with pytest.raises(ValueError):
            make_detector("carrier-pigeon")


class TestAcceptance:
    def test_dog_only_rule(self):
        cat = BoundingBox(0, 0, 5, 5, label="cat", confidence=0.99)
        assert accept_detection([cat]) is None

    def test_confidence_threshold(self):
        low = BoundingBox(0, 0, 5, 5, label="dog", confidence=0.5)
        assert accept_detection([low]) is None

    def test_highest_confidence_wins(self):
        a = BoundingBox(0, 0, 5, 5, label="dog", confidence=0.91)
        b = BoundingBox(1, 1, 5, 5, label="dog", confidence=0.99)
        assert accept_detection([a, b]) is b

    def test_empty(self):
        assert accept_detection([]) is None

    def test_clamp_box(self):
        assert clamp_box(BoundingBox(-2, -2, 8, 8), 10, 10) == BoundingBox(0, 0, 6, 6)
        assert clamp_box(BoundingBox(8, 8, 5, 5), 10, 10) == BoundingBox(8, 8, 2, 2)
        assert clamp_box(BoundingBox(20, 20, 5, 5), 10, 10) is None


class TestBuildCorpus:
    def test_three_variants_per_image(self, tmp_path, policies):
        make_source_dir(tmp_path / "in", n_pets=2, images_per_pet=2)
        manifest = build_corpus(
            tmp_path / "in", tmp_path / "out", StubDetector(), policies,
            seed=1, heldout_fraction=0.0, image_side=64,
        )
        assert manifest.image_count == 12  # 2 pets x 2 images x 3 variants
        assert manifest.pet_count == 2
        assert manifest.source_count == 4
        for rec in manifest.records:
            assert (tmp_path / "out" / rec.path).exists()
            assert rec.split == "train"

    def test_heldout_split_by_pet(self, tmp_path, policies):
        make_source_dir(tmp_path / "in", n_pets=4, images_per_pet=2)
        manifest = build_corpus(
            tmp_path / "in", tmp_path / "out", StubDetector(), policies,
            seed=2, heldout_fraction=0.5, image_side=64,
        )
        held_pets = {r.pet_id for r in manifest.split_records("heldout")}
        train_pets = {r.pet_id for r in manifest.split_records("train")}
        assert len(held_pets) == 2
        assert held_pets.isdisjoint(train_pets)
        # split by pet: every record of a held pet is heldout
        for rec in manifest.records:
            assert (rec.split == "heldout") == (rec.pet_id in held_pets)

    def test_manifest_deterministic_bytes(self, tmp_path, policies):
        make_source_dir(tmp_path / "in", n_pets=3, images_per_pet=2)
        for run in ("a", "b"):
            build_corpus(
                tmp_path / "in", tmp_path / run, StubDetector(), policies,
                seed=33, heldout_fraction=0.34, image_side=64,
            )
        assert (tmp_path / "a" / "manifest.jsonl").read_bytes() == (
            tmp_path / "b" / "manifest.jsonl"
        ).read_bytes()

    def test_unreadable_image_skipped_and_counted(self, tmp_path, policies):
        make_source_dir(tmp_path / "in", n_pets=2, images_per_pet=1)
        (tmp_path / "in" / "pet0" / "broken.png").write_bytes(b"nope")
        skip_log = {}
        manifest = build_corpus(
            tmp_path / "in", tmp_path / "out", StubDetector(), policies,
            seed=3, heldout_fraction=0.0, image_side=64, skip_log=skip_log,
        )
        assert skip_log["unreadable"] == 1
        assert manifest.image_count == 6

    def test_non_dog_detections_skipped(self, tmp_path, policies, detector_server):
        detector_server.boxes = [
            {"x": 0, "y": 0, "w": 5, "h": 5, "label": "cat", "confidence": 0.99}
        ]
        make_source_dir(tmp_path / "in", n_pets=2, images_per_pet=1)
        url = f"http://127.0.0.1:{detector_server.server_port}/detect"
        skip_log = {}
        with pytest.raises(EmptyCorpusError):
            build_corpus(
                tmp_path / "in", tmp_path / "out", HttpDetector(url), policies,
                seed=4, heldout_fraction=0.0, image_side=64, skip_log=skip_log,
            )
        assert skip_log["no_dog"] == 2

    def test_unreachable_detector_skips_not_aborts(self, tmp_path, policies):
        make_source_dir(tmp_path / "in", n_pets=2, images_per_pet=1)
        dead = HttpDetector("http://127.0.0.1:9/detect", timeout=0.2)
        skip_log = {}
        with pytest.raises(EmptyCorpusError):
            build_corpus(
                tmp_path / "in", tmp_path / "out", dead, policies,
                seed=5, heldout_fraction=0.0, image_side=64, skip_log=skip_log,
            )
        assert skip_log["detector"] == 2

    def test_remote_boxes_cropped(self, tmp_path, policies, detector_server):
        img = ImageTensor(np.zeros((40, 40, 3), dtype=np.uint8))
        img.pixels[10:30, 5:25] = 200
        (tmp_path / "in" / "rex").mkdir(parents=True)
        save_png(img, tmp_path / "in" / "rex" / "a.png")
        (tmp_path / "in" / "fido").mkdir(parents=True)
        save_png(img, tmp_path / "in" / "fido" / "a.png")
        detector_server.boxes = [
            {"x": 5, "y": 10, "w": 20, "h": 20, "label": "dog", "confidence": 0.95}
        ]
        url = f"http://127.0.0.1:{detector_server.server_port}/detect"
        manifest = build_corpus(
            tmp_path / "in", tmp_path / "out", HttpDetector(url), policies,
            seed=6, heldout_fraction=0.0, image_side=64,
        )
        # variant 0 is the crop scaled onto the square: all content, no border
        rec = next(r for r in manifest.records if r.variant == 0)
        out = manifest.load_image(rec)
        assert np.all(out.pixels == 200)

    def test_invalid_heldout_fraction(self, tmp_path, policies):
        make_source_dir(tmp_path / "in", n_pets=2, images_per_pet=1)
        with pytest.raises(ValueError):
            build_corpus(
                tmp_path / "in", tmp_path / "out", StubDetector(), policies,
                seed=1, heldout_fraction=1.0,
            )


class TestManifest:
    def test_jsonl_round_trip(self, toy_manifest, tmp_path):
        path = tmp_path / "manifest.jsonl"
        toy_manifest.write_jsonl(path)
        back = Manifest.read_jsonl(path)
        assert back.records == toy_manifest.records
        line = path.read_text().splitlines()[0]
        assert list(json.loads(line)) == [
            "pet_id", "image_id", "source_id", "variant", "path", "split",
        ]

    def test_exact_keys_enforced(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps({"pet_id": "a", "image_id": "b"}) + "\n")
        from pawmatch.errors import FormatError

        with pytest.raises(FormatError):
            Manifest.read_jsonl(path)

    def test_statistics_recomputable(self, toy_manifest):
        assert toy_manifest.pet_count == 5
        assert toy_manifest.image_count == 30
        assert toy_manifest.source_count == 10
        assert toy_manifest.mean_images_per_pet == pytest.approx(2.0)

    def test_split_consistency_enforced(self):
        records = [record("a", "a/x.png", 0), record("a", "a/y.png", 0, split="heldout")]
        with pytest.raises(ValueError, match="both splits"):
            Manifest(records)

    def test_duplicate_source_variant_rejected(self):
        records = [record("a", "a/x.png", 0), record("a", "a/x.png", 0)]
        with pytest.raises(ValueError, match="duplicate"):
            Manifest(records)

    def test_variant_validation(self):
        with pytest.raises(ValueError):
            ImageRecord("a", "i", "s", 3, "p", "train")
        with pytest.raises(ValueError):
            ImageRecord("a", "i", "s", 0, "p", "validation")
