"""Tests for the noise and block-DCT compression distortions."""
import numpy as np
import pytest

from core.errors import DataError
from workflows.distortions import (
    LUMINANCE_TABLE,
    distort_compress,
    distort_noise,
    quantization_table,
)


class TestNoise:
    def test_zero_sigma_is_identity(self, rng):
        image = rng.random((8, 8, 3))
        np.testing.assert_array_equal(distort_noise(image, 0.0, seed=1), image)

    def test_seeded(self, rng):
        image = rng.random((8, 8, 3))
        np.testing.assert_array_equal(distort_noise(image, 0.1, seed=3), distort_noise(image, 0.1, seed=3))
        assert not np.array_equal(distort_noise(image, 0.1, seed=3), distort_noise(image, 0.1, seed=4))
        np.testing.assert_array_equal(distort_noise(image, 0.1, seed=[3, 1]), distort_noise(image, 0.1, seed=[3, 1]))

    def test_clamped_to_unit_range(self, rng):
        noisy = distort_noise(rng.random((16, 16, 1)), 2.0, seed=0)
        assert noisy.min() >= 0.0 and noisy.max() <= 1.0

    def test_negative_sigma(self):
        with pytest.raises(DataError, match="sigma"):
            distort_noise(np.zeros((4, 4, 1)), -0.1, seed=0)


class TestQuantizationTable:
    def test_quality_100_is_all_ones(self):
        np.testing.assert_array_equal(quantization_table(100), np.ones((8, 8)))

    def test_quality_50_is_base_table(self):
        np.testing.assert_array_equal(quantization_table(50), LUMINANCE_TABLE)

    def test_quality_1_is_capped(self):
        table = quantization_table(1)
        assert table.max() == 255.0
        assert table.min() >= 1.0

    @pytest.mark.parametrize("quality", [0, 101, 50.0])
    def test_rejects_bad_quality(self, quality):
        with pytest.raises(DataError, match="quality"):
            quantization_table(quality)


class TestCompress:
    def test_quality_100_is_near_lossless(self, rng):
        image = rng.random((16, 16, 3))
        compressed = distort_compress(image, 100)
        rms = np.sqrt(np.mean((compressed - image) ** 2))
        assert rms <= 1.0 / 255

    def test_constant_block_is_exact(self):
        image = np.full((8, 8, 1), 100 / 255)
        np.testing.assert_allclose(distort_compress(image, 100), image, atol=1e-12)

    @pytest.mark.parametrize("shape", [(16, 16), (12, 20, 3), (8, 8, 1)])
    def test_shape_preserved(self, rng, shape):
        compressed = distort_compress(rng.random(shape), 75)
        assert compressed.shape == shape
        assert compressed.min() >= 0.0 and compressed.max() <= 1.0

    def test_lower_quality_loses_more(self, rng):
        coords = np.linspace(0.0, 1.0, 32)
        image = (0.5 + 0.4 * np.sin(8 * np.pi * coords)[:, None] * np.cos(6 * np.pi * coords)[None, :])[:, :, None]
        image = np.clip(image + rng.normal(0.0, 0.05, size=image.shape), 0.0, 1.0)
        low = np.mean((distort_compress(image, 10) - image) ** 2)
        high = np.mean((distort_compress(image, 90) - image) ** 2)
        assert low > high
