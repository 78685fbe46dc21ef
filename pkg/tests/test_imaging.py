import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pawmatch.errors import BoundsError, FormatError
from pawmatch.imaging import (
    BoundingBox,
    ImageTensor,
    crop,
    encode_png,
    fit_square,
    load_image,
    save_png,
    to_model_input,
)

from conftest import random_image


class TestCrop:
    def test_identity_crop(self):
        img = random_image(np.random.default_rng(0), 10, 10)
        out = crop(img, BoundingBox(0, 0, 10, 10))
        assert np.array_equal(out.pixels, img.pixels)

    def test_offset_crop(self):
        img = random_image(np.random.default_rng(1), 10, 10)
        out = crop(img, BoundingBox(2, 3, 4, 5))
        assert (out.width, out.height) == (4, 5)
        assert np.array_equal(out.pixels[0, 0], img.pixels[3, 2])

    def test_out_of_bounds_rejected(self):
        img = random_image(np.random.default_rng(2), 10, 10)
        with pytest.raises(BoundsError):
            crop(img, BoundingBox(8, 8, 4, 4))
        with pytest.raises(BoundsError):
            crop(img, BoundingBox(-1, 0, 4, 4))

    def test_crop_copies_pixels(self):
        img = random_image(np.random.default_rng(3), 8, 8)
        out = crop(img, BoundingBox(1, 1, 4, 4))
        out.pixels[0, 0] = 0
        assert not np.array_equal(out.pixels[0, 0], img.pixels[1, 1]) or (
            img.pixels[1, 1] == 0
        ).all()


class TestFitSquare:
    def test_already_square_unchanged(self):
        img = random_image(np.random.default_rng(4), 384, 384)
        out = fit_square(img, 384)
        assert np.array_equal(out.pixels, img.pixels)

    def test_wide_input_pads_rows(self):
        img = ImageTensor(np.full((100, 200, 3), 200, dtype=np.uint8))
        out = fit_square(img, 384)
        assert (out.width, out.height) == (384, 384)
        # content scaled to 384x192, 96 black rows above and below
        assert np.all(out.pixels[:96] == 0)
        assert np.all(out.pixels[96 + 192 :] == 0)
        assert np.all(out.pixels[96 : 96 + 192] == 200)

    def test_tall_input_pads_columns(self):
        img = ImageTensor(np.full((300, 100, 3), 77, dtype=np.uint8))
        out = fit_square(img, 384)
        # content 128x384, 128 black columns each side
        assert np.all(out.pixels[:, :128] == 0)
        assert np.all(out.pixels[:, 128 + 128 :] == 0)
        assert np.all(out.pixels[:, 128 : 128 + 128] == 77)

    def test_odd_padding_extra_pixel_goes_last(self):
        img = ImageTensor(np.full((3, 9, 3), 50, dtype=np.uint8))
        out = fit_square(img, 9)
        assert (out.width, out.height) == (9, 9)
        # 9x3 content: pad = 6 rows -> 3 above, 3 below; odd case:
        img2 = ImageTensor(np.full((2, 9, 3), 50, dtype=np.uint8))
        out2 = fit_square(img2, 9)
        content_rows = np.where(out2.pixels[:, 0, 0] > 0)[0]
        top_pad = content_rows[0]
        bottom_pad = 9 - 1 - content_rows[-1]
        assert bottom_pad >= top_pad

    @settings(max_examples=25, deadline=None)
    @given(
        w=st.integers(1, 60), h=st.integers(1, 60), side=st.integers(8, 64),
        seed=st.integers(0, 2**16),
    )
    def test_idempotent(self, w, h, side, seed):
        img = random_image(np.random.default_rng(seed), w, h)
        once = fit_square(img, side)
        twice = fit_square(once, side)
        assert np.array_equal(once.pixels, twice.pixels)

    @settings(max_examples=25, deadline=None)
    @given(w=st.integers(4, 80), h=st.integers(4, 80), seed=st.integers(0, 2**16))
    def test_aspect_ratio_preserved_within_rounding(self, w, h, seed):
        rng = np.random.default_rng(seed)
        img = ImageTensor(rng.integers(1, 256, (h, w, 3), dtype=np.uint8))
        side = 64
        out = fit_square(img, side)
        mask = out.pixels.max(axis=2) > 0
        rows = np.where(mask.any(axis=1))[0]
        cols = np.where(mask.any(axis=0))[0]
        content_h = rows[-1] - rows[0] + 1
        content_w = cols[-1] - cols[0] + 1
        scale = side / max(w, h)
        assert abs(content_w - w * scale) <= 1.0 + 1e-9
        assert abs(content_h - h * scale) <= 1.0 + 1e-9

    def test_invalid_side(self):
        img = random_image(np.random.default_rng(5), 4, 4)
        with pytest.raises(ValueError):
            fit_square(img, 0)


class TestToModelInput:
    def test_black_is_zeros(self):
        x = to_model_input(ImageTensor.full(8, 8, 0))
        assert x.shape == (8, 8, 3)
        assert np.all(x == 0.0)

    def test_white_is_ones(self):
        x = to_model_input(ImageTensor.full(8, 8, 255))
        assert np.all(x == 1.0)

    def test_mid_value_scaling(self):
        x = to_model_input(ImageTensor.full(4, 4, 51), dtype=np.float64)
        assert x == pytest.approx(np.full((4, 4, 3), 0.2), abs=1e-12)

    def test_non_square_rejected(self):
        with pytest.raises(ValueError):
            to_model_input(ImageTensor.full(4, 6, 0))


class TestImageIO:
    def test_png_round_trip(self, tmp_path):
        img = random_image(np.random.default_rng(6), 23, 17)
        save_png(img, tmp_path / "x.png")
        back = load_image(tmp_path / "x.png")
        assert np.array_equal(back.pixels, img.pixels)

    def test_bytes_round_trip(self):
        img = random_image(np.random.default_rng(7), 9, 11)
        assert np.array_equal(load_image(encode_png(img)).pixels, img.pixels)

    def test_undecodable_rejected(self, tmp_path):
        bad = tmp_path / "bad.png"
        bad.write_bytes(b"this is not an image")
        with pytest.raises(FormatError):
            load_image(bad)

    def test_jpeg_decodes(self, tmp_path):
        from PIL import Image

        arr = np.full((20, 20, 3), 128, dtype=np.uint8)
        Image.fromarray(arr).save(tmp_path / "x.jpg", format="JPEG")
        img = load_image(tmp_path / "x.jpg")
        assert (img.width, img.height) == (20, 20)


class TestImageTensor:
    def test_dimension_validation(self):
        with pytest.raises(ValueError):
            ImageTensor(np.zeros((0, 4, 3), dtype=np.uint8))
        with pytest.raises(ValueError):
            ImageTensor(np.zeros((4, 4, 4), dtype=np.uint8))
        with pytest.raises(ValueError):
            ImageTensor(np.zeros((4, 4, 3), dtype=np.float32))

    def test_data_length_invariant(self):
        img = ImageTensor.full(5, 7)
        assert img.pixels.size == img.width * img.height * 3


class TestBoundingBox:
    def test_validation(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 0, 5)
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 5, 5, confidence=1.5)
