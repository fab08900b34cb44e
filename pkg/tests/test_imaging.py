import numpy as np
import pytest

from radistort.distortion import RadialDistortion
from radistort.errors import DataError, DomainError, FoldedDistortionError
from radistort.imaging import (
    RemapField,
    build_undistort_remap,
    encode_ppm,
    identity_field,
    read_image,
    rectify,
    remap,
    resize_bilinear,
    sample_bilinear,
    write_image,
)


@pytest.fixture
def tiny_image():
    return np.array([[[255, 0, 0], [0, 255, 0]],
                     [[0, 0, 255], [255, 255, 255]]], dtype=np.uint8)


def gradient_image(w=32, h=24):
    x = np.linspace(0, 255, w, dtype=np.uint8)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[..., 0] = x
    img[..., 1] = x[::-1]
    img[..., 2] = np.linspace(0, 255, h, dtype=np.uint8)[:, None]
    return img


class TestPpmIO:
    def test_round_trip_is_byte_identical(self, tiny_image, tmp_path):
        path = tmp_path / "a.ppm"
        write_image(path, tiny_image)
        again = read_image(path)
        np.testing.assert_array_equal(again, tiny_image)
        write_image(tmp_path / "b.ppm", again)
        assert (tmp_path / "a.ppm").read_bytes() == (tmp_path / "b.ppm").read_bytes()

    def test_canonical_header(self, tiny_image):
        data = encode_ppm(tiny_image)
        assert data.startswith(b"P6\n2 2\n255\n")
        assert len(data) == len(b"P6\n2 2\n255\n") + 12

    def test_parses_header_with_comments(self, tmp_path):
        path = tmp_path / "c.ppm"
        path.write_bytes(b"P6\n# a comment\n2 1\n255\n" + bytes(6))
        img = read_image(path)
        assert img.shape == (1, 2, 3)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "t.ppm"
        path.write_bytes(b"P6\n2 2\n255\n" + bytes(7))
        with pytest.raises(DataError, match="truncated"):
            read_image(path)

    def test_bad_maxval(self, tmp_path):
        path = tmp_path / "m.ppm"
        path.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
        with pytest.raises(DataError):
            read_image(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            read_image(tmp_path / "nope.ppm")

    def test_unknown_format(self, tmp_path):
        path = tmp_path / "x.ppm"
        path.write_bytes(b"GIF89a....")
        with pytest.raises(DataError, match="unsupported"):
            read_image(path)


class TestPngIO:
    def test_round_trip_lossless(self, tmp_path):
        img = gradient_image()
        path = tmp_path / "g.png"
        write_image(path, img)
        np.testing.assert_array_equal(read_image(path), img)

    def test_malformed_png(self, tmp_path):
        path = tmp_path / "bad.png"
        path.write_bytes(b"\x89PNG\r\n\x1a\n" + b"garbage")
        with pytest.raises(DataError, match="malformed"):
            read_image(path)

    def test_unsupported_suffix(self, tiny_image, tmp_path):
        with pytest.raises(DataError):
            write_image(tmp_path / "a.bmp", tiny_image)


class TestSampleBilinear:
    def test_exact_pixel_center(self, tiny_image):
        np.testing.assert_allclose(sample_bilinear(tiny_image, 0.5, 0.5), [255, 0, 0])
        np.testing.assert_allclose(sample_bilinear(tiny_image, 1.5, 1.5), [255, 255, 255])

    def test_midpoint_between_neighbors(self):
        img = np.zeros((1, 2, 3), dtype=np.uint8)
        img[0, 1] = 255
        np.testing.assert_allclose(sample_bilinear(img, 1.0, 0.5), [127.5] * 3)

    def test_uniform_image(self):
        img = np.full((5, 7, 3), 88, dtype=np.uint8)
        coords = np.random.default_rng(1).uniform(0, 7, size=(10, 2))
        out = sample_bilinear(img, coords[:, 0], coords[:, 1] * 5 / 7)
        np.testing.assert_allclose(out, 88.0)

    def test_clamps_outside(self, tiny_image):
        np.testing.assert_allclose(sample_bilinear(tiny_image, -3.0, 0.5), [255, 0, 0])
        np.testing.assert_allclose(sample_bilinear(tiny_image, 5.0, 5.0), [255, 255, 255])


class TestRemap:
    def test_identity_field(self, tiny_image):
        out = remap(tiny_image, identity_field(2, 2))
        np.testing.assert_array_equal(out, tiny_image)

    def test_integer_shift_translates(self):
        img = gradient_image(8, 6)
        field = identity_field(8, 6)
        shifted = RemapField(field.x_src - 2.0, field.y_src)
        out = remap(img, shifted)
        np.testing.assert_array_equal(out[:, 2:], img[:, :-2])

    def test_out_of_bounds_is_black(self):
        img = np.full((4, 4, 3), 200, dtype=np.uint8)
        field = identity_field(4, 4)
        pushed = RemapField(field.x_src + 10.0, field.y_src)
        np.testing.assert_array_equal(remap(img, pushed), np.zeros((4, 4, 3), np.uint8))

    def test_deterministic(self):
        img = gradient_image()
        d = RadialDistortion(-0.3, 0.06675)
        a = rectify(img, d)
        b = rectify(img, d)
        np.testing.assert_array_equal(a, b)


class TestUndistortRemap:
    def test_zero_coefficients_identity_field(self):
        field = build_undistort_remap(RadialDistortion(0.0, 0.0), 16, 9)
        ident = identity_field(16, 9)
        np.testing.assert_allclose(field.x_src, ident.x_src, atol=1e-9)
        np.testing.assert_allclose(field.y_src, ident.y_src, atol=1e-9)

    def test_center_pixel_fixed(self):
        field = build_undistort_remap(RadialDistortion(-0.5, 0.19175), 16, 16)
        # center of a 16x16 image is at pixel coordinate 8.0
        assert field.x_src[7, 7] == pytest.approx(8.0, abs=0.12)
        # the exact center coordinate never moves: interpolate symmetric pixels
        assert (field.x_src[8, 7] + field.x_src[7, 8]) / 2 == pytest.approx(8.0, abs=0.06)

    def test_barrel_pulls_corners_inward(self):
        field = build_undistort_remap(RadialDistortion(-0.5, 0.19175), 32, 18)
        assert field.x_src[0, 0] > 0.5
        assert field.y_src[0, 0] > 0.5
        assert field.x_src[-1, -1] < 31.5
        assert field.y_src[-1, -1] < 17.5

    def test_rejects_folding_coefficients(self):
        with pytest.raises(FoldedDistortionError):
            build_undistort_remap(RadialDistortion(-2.5, 0.0), 32, 18)

    def test_rectify_with_zero_is_identity(self, tiny_image):
        out = rectify(tiny_image, RadialDistortion(0.0, 0.0))
        np.testing.assert_array_equal(out, tiny_image)


class TestResize:
    def test_same_size_identity(self):
        img = gradient_image()
        np.testing.assert_array_equal(resize_bilinear(img, 32, 24), img)

    def test_checkerboard_to_single_pixel(self):
        img = np.zeros((2, 2, 3), dtype=np.uint8)
        img[0, 0] = img[1, 1] = 200
        out = resize_bilinear(img, 1, 1)
        np.testing.assert_array_equal(out, np.full((1, 1, 3), 100, np.uint8))

    def test_uniform_stays_uniform(self):
        img = np.full((9, 16, 3), 57, dtype=np.uint8)
        for w, h in ((4, 4), (32, 18), (5, 9)):
            out = resize_bilinear(img, w, h)
            assert out.shape == (h, w, 3)
            np.testing.assert_array_equal(out, np.full((h, w, 3), 57, np.uint8))

    def test_rejects_bad_dims(self):
        with pytest.raises(DomainError):
            resize_bilinear(gradient_image(), 0, 5)
