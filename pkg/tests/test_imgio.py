import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tvprox.imgio import (
    BadHeaderError,
    BadMagicError,
    RasterImage,
    TruncatedDataError,
    UnsupportedMaxvalError,
    add_gaussian_noise,
    load_pnm,
    psnr,
    read_pnm,
    save_pnm,
    write_pnm,
)
from tvprox.tvcore import ShapeMismatchError


class TestRead:
    def test_ascii_gray(self):
        img = read_pnm(b"P2 1 1 255 128")
        assert (img.channels, img.height, img.width) == (1, 1, 1)
        assert img.samples[0, 0, 0] == pytest.approx(128 / 255)
        assert img.samples[0, 0, 0] == pytest.approx(0.50196, abs=1e-5)

    def test_binary_gray(self):
        assert read_pnm(b"P5 1 1 255\n\xff").samples[0, 0, 0] == 1.0

    def test_bad_magic(self):
        with pytest.raises(BadMagicError):
            read_pnm(b"P7 1 1 255 0")

    def test_comments_and_whitespace(self):
        data = b"P2\n# a comment\n 2\t1 # trailing\n255\n\n0   255\n"
        np.testing.assert_array_equal(read_pnm(data).samples, [[[0.0, 1.0]]])

    def test_rgb_layout(self):
        img = read_pnm(b"P6 2 1 255\n" + bytes([255, 0, 0, 0, 0, 255]))
        assert img.channels == 3
        np.testing.assert_array_equal(img.samples[:, 0, 0], [1, 0, 0])
        np.testing.assert_array_equal(img.samples[:, 0, 1], [0, 0, 1])

    def test_sixteen_bit_big_endian(self):
        img = read_pnm(b"P5 1 1 65535\n\x01\x00")
        assert img.samples[0, 0, 0] == 256 / 65535

    def test_errors(self):
        with pytest.raises(TruncatedDataError):
            read_pnm(b"P5 2 2 255\n\x00\x00")
        with pytest.raises(TruncatedDataError):
            read_pnm(b"P2 2 2 255 1 2 3")
        with pytest.raises(UnsupportedMaxvalError):
            read_pnm(b"P2 1 1 100 5")
        with pytest.raises(BadHeaderError):
            read_pnm(b"P2 1 x 255 5")
        with pytest.raises(BadHeaderError):
            read_pnm(b"P2 1")
        with pytest.raises(BadHeaderError):
            read_pnm(b"P2 1 1 255 300")


class TestWrite:
    def test_examples(self):
        assert write_pnm(RasterImage(np.ones((1, 1))))[-1] == 255
        assert write_pnm(RasterImage(np.full((1, 1), 0.5)))[-1] == 128
        assert write_pnm(RasterImage(np.full((1, 1), 1.7)))[-1] == 255
        assert write_pnm(RasterImage(np.full((1, 1), -0.2)))[-1] == 0
        assert write_pnm(RasterImage(np.zeros((1, 1))), "ascii") == b"P2\n1 1\n255\n0\n"

    def test_rejects_bad_options(self):
        img = RasterImage(np.zeros((1, 1)))
        with pytest.raises(UnsupportedMaxvalError):
            write_pnm(img, maxval=1023)
        with pytest.raises(ShapeMismatchError):
            RasterImage(np.zeros((2, 2, 2)))

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from([1, 3]), st.sampled_from(["ascii", "binary"]),
           st.sampled_from([255, 65535]), st.integers(1, 6), st.integers(1, 6),
           st.integers(0, 2**31))
    def test_roundtrip(self, c, fmt, maxval, h, w, seed):
        img = RasterImage(np.random.default_rng(seed).random((c, h, w)))
        back = read_pnm(write_pnm(img, fmt, maxval))
        assert back.samples.shape == img.samples.shape
        assert np.max(np.abs(back.samples - img.samples)) <= 1 / (2 * maxval) + 1e-15
        assert write_pnm(back, fmt, maxval) == write_pnm(img, fmt, maxval)

    def test_roundtrip_16bit_bound(self):
        img = RasterImage(np.random.default_rng(0).random((3, 20, 20)))
        back = read_pnm(write_pnm(img, maxval=65535))
        assert np.max(np.abs(back.samples - img.samples)) <= 1 / 131070

    def test_file_helpers(self, tmp_path):
        img = RasterImage(np.random.default_rng(1).random((1, 3, 4)))
        path = tmp_path / "a.pgm"
        save_pnm(path, img, "ascii")
        np.testing.assert_allclose(load_pnm(path).samples, img.samples, atol=1 / 510)


class TestPSNR:
    def test_examples(self):
        a = np.zeros((1, 4, 4))
        assert psnr(a, a) == math.inf
        assert psnr(a, a + 0.1) == pytest.approx(20.0)
        assert psnr(a, a + 0.01) == pytest.approx(40.0)
        assert psnr(a, a + 2.0, peak=2.0) == pytest.approx(0.0)
        with pytest.raises(ShapeMismatchError):
            psnr(a, np.zeros((1, 4, 5)))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 2**31))
    def test_symmetry_and_scaling(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.random((1, 5, 5))
        e = rng.standard_normal(a.shape) * 0.01
        assert psnr(a, a + e) == psnr(a + e, a)
        drop = psnr(a, a + e) - psnr(a, a + 2 * e)
        assert drop == pytest.approx(20 * math.log10(2), abs=1e-9)
        assert drop == pytest.approx(6.0206, abs=1e-4)

    def test_accepts_raster_images(self):
        a = RasterImage(np.zeros((2, 2)))
        assert psnr(a, RasterImage(np.full((2, 2), 0.1))) == pytest.approx(20.0)


class TestNoise:
    def test_zero_sigma_and_determinism(self):
        img = RasterImage(np.full((1, 8, 8), 0.5))
        assert np.array_equal(add_gaussian_noise(img, 0.0, 1).samples, img.samples)
        a = add_gaussian_noise(img, 0.1, 3).samples
        assert np.array_equal(a, add_gaussian_noise(img, 0.1, 3).samples)
        assert not np.array_equal(a, add_gaussian_noise(img, 0.1, 4).samples)
        assert a.min() >= 0 and a.max() <= 1

    def test_statistics(self):
        clean = np.full((1, 128, 128), 0.5)
        sigma = 25 / 255
        noisy = add_gaussian_noise(clean, sigma, 0)
        assert abs(np.std(noisy - clean) - sigma) <= 0.05 * sigma
