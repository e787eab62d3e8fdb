"""Tests for linear CKA, SSIM and the token reshape."""
import numpy as np
import pytest

from core.errors import DataError
from metrics.similarity import (
    SsimParams,
    gauss_2d,
    image_to_tokens,
    linear_cka,
    ssim,
    tokens_to_image,
)


def random_pairs(count: int = 50):
    rng = np.random.default_rng(77)
    for _ in range(count):
        samples = int(rng.integers(4, 20))
        yield rng.normal(size=(samples, int(rng.integers(2, 10)))), rng.normal(size=(samples, int(rng.integers(2, 10))))


class TestLinearCka:
    def test_self_similarity(self):
        for x, _ in random_pairs():
            assert linear_cka(x, x).score == pytest.approx(1.0, abs=1e-9)

    def test_isotropic_scale_invariance(self):
        for x, _ in random_pairs():
            assert linear_cka(x, -3.5 * x).score == pytest.approx(1.0, abs=1e-9)

    def test_orthogonal_invariance(self):
        rng = np.random.default_rng(5)
        for x, _ in random_pairs():
            q, _ = np.linalg.qr(rng.normal(size=(x.shape[1], x.shape[1])))
            assert linear_cka(x, x @ q).score == pytest.approx(1.0, abs=1e-9)

    def test_symmetric_and_bounded(self):
        for x, y in random_pairs():
            forward = linear_cka(x, y).score
            assert forward == pytest.approx(linear_cka(y, x).score, abs=1e-12)
            assert -1e-9 <= forward <= 1.0 + 1e-9

    def test_row_offset_invariance(self):
        for x, y in random_pairs(10):
            offset = np.arange(x.shape[1], dtype=np.float64)
            assert linear_cka(x + offset, y).score == pytest.approx(linear_cka(x, y).score, abs=1e-10)

    def test_degenerate_input(self, rng):
        report = linear_cka(np.ones((5, 3)), rng.normal(size=(5, 3)))
        assert report.score == 0.0
        assert report.degenerate

    def test_sample_mismatch(self, rng):
        with pytest.raises(DataError, match="sample counts differ"):
            linear_cka(rng.normal(size=(5, 3)), rng.normal(size=(6, 3)))


class TestSsim:
    def test_window_sums_to_one(self):
        assert abs(gauss_2d((11, 11), 1.5).sum() - 1.0) <= 1e-12
        assert SsimParams().kernel().shape == (11, 11)

    def test_identity(self, rng):
        image = rng.random((20, 24, 3))
        report = ssim(image, image)
        assert report.score == 1.0
        assert report.map.shape == (10, 14, 3)
        assert np.all(report.map == 1.0)

    def test_symmetric_and_bounded(self, rng):
        a = rng.random((16, 16, 3))
        b = np.clip(a + rng.normal(0.0, 0.2, size=a.shape), 0.0, 1.0)
        ab = ssim(a, b)
        ba = ssim(b, a)
        assert abs(ab.score - ba.score) <= 1e-12
        np.testing.assert_allclose(ab.map, ba.map, atol=1e-12)
        assert np.all(ab.map >= -1.0) and np.all(ab.map <= 1.0)

    def test_constant_images_closed_form(self):
        c, delta = 0.4, 0.1
        report = ssim(np.full((16, 16), c), np.full((16, 16), c + delta))
        r = delta
        c1 = (0.01 * r) ** 2
        expected = (2 * c * (c + delta) + c1) / (c ** 2 + (c + delta) ** 2 + c1)
        assert report.score == pytest.approx(expected, abs=1e-10)

    def test_fixed_data_range(self, rng):
        a = rng.random((12, 12, 1))
        assert ssim(a, a, SsimParams(data_range=255.0)).score == 1.0
        with pytest.raises(DataError, match="positive"):
            ssim(a, a, SsimParams(data_range=0.0))

    def test_rejects_small_images(self):
        with pytest.raises(DataError, match="smaller than"):
            ssim(np.zeros((8, 8, 1)), np.zeros((8, 8, 1)))

    def test_rejects_shape_mismatch(self):
        with pytest.raises(DataError, match="differ in shape"):
            ssim(np.zeros((16, 16, 1)), np.zeros((16, 16, 3)))


class TestTokensToImage:
    def test_toy_reshape_is_lossless(self, rng):
        tokens = rng.normal(size=(64, 48))
        image = tokens_to_image(tokens, (32, 32, 3))
        assert image.shape == (32, 32, 3)
        np.testing.assert_array_equal(image_to_tokens(image, 64), tokens)

    def test_row_major_order(self):
        tokens = np.arange(12, dtype=np.float64).reshape(4, 3)
        image = tokens_to_image(tokens, (2, 2, 3))
        np.testing.assert_array_equal(image[0, 1], [3.0, 4.0, 5.0])

    def test_cls_row_not_stripped(self, rng):
        with pytest.raises(DataError, match="strip the CLS row"):
            tokens_to_image(rng.normal(size=(65, 48)), (32, 32, 3))
