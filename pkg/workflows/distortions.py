"""
Input distortions for robustness runs: additive Gaussian noise and a block-DCT
compression surrogate (8x8 blocks, quality-scaled standard luminance table).
The surrogate reproduces JPEG's quantization but not its file format or
chroma handling.
"""
from typing import Sequence, Union

import numpy as np
from einops import rearrange
from scipy import fft

from core.errors import DataError

BLOCK = 8

LUMINANCE_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

Seed = Union[int, Sequence[int]]


def distort_noise(image: np.ndarray, sigma: float, seed: Seed) -> np.ndarray:
    """Add i.i.d. N(0, sigma^2) per pixel and clamp to [0, 1]; sigma = 0 returns the input."""
    if not np.isfinite(sigma) or sigma < 0:
        raise DataError(f"noise sigma must be a finite value >= 0, got {sigma}")
    array = np.asarray(image, dtype=np.float64)
    if sigma == 0:
        return array.copy()
    rng = np.random.default_rng(seed)
    return np.clip(array + rng.normal(0.0, sigma, size=array.shape), 0.0, 1.0)


def quantization_table(quality: int) -> np.ndarray:
    """IJG quality scaling of the luminance table; quality 100 gives all ones."""
    if not isinstance(quality, (int, np.integer)) or not 1 <= quality <= 100:
        raise DataError(f"compression quality must be an integer in [1, 100], got {quality!r}")
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    table = np.floor((LUMINANCE_TABLE * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def distort_compress(image: np.ndarray, quality: int) -> np.ndarray:
    """Blockwise DCT, quantize, dequantize, inverse DCT, clamp; per channel on the 0..255 scale."""
    table = quantization_table(quality)
    source = np.asarray(image, dtype=np.float64)
    array = source[:, :, np.newaxis] if source.ndim == 2 else source
    if array.ndim != 3:
        raise DataError(f"image must be W x H x C, got shape {source.shape}")
    width, height, _ = array.shape
    pad = ((0, (-width) % BLOCK), (0, (-height) % BLOCK), (0, 0))
    padded = np.pad(array, pad, mode="edge") * 255.0 - 128.0

    blocks = rearrange(padded, "(bw p1) (bh p2) c -> bw bh c p1 p2", p1=BLOCK, p2=BLOCK)
    coeffs = fft.dctn(blocks, type=2, axes=(-2, -1), norm="ortho")
    coeffs = np.round(coeffs / table) * table
    restored = fft.idctn(coeffs, type=2, axes=(-2, -1), norm="ortho")
    restored = rearrange(restored, "bw bh c p1 p2 -> (bw p1) (bh p2) c")

    out = np.clip((restored[:width, :height] + 128.0) / 255.0, 0.0, 1.0)
    return out.reshape(source.shape)
