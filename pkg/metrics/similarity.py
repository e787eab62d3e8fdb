"""
Representation similarity: linear CKA, windowed SSIM and the token-matrix
reshape that lets SSIM run on encoder outputs.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import signal

from core.errors import DataError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class SimilarityReport:
    score: float
    map: Optional[np.ndarray] = None  # (W', H', C) for SSIM
    degenerate: bool = False


@dataclass(frozen=True)
class SsimParams:
    """Gaussian-window SSIM settings; `data_range=None` derives R from the pair."""
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: Optional[float] = None

    def kernel(self) -> np.ndarray:
        return gauss_2d((self.window, self.window), self.sigma)


def gauss_2d(shape: tuple[int, int] = (11, 11), sigma: float = 1.5) -> np.ndarray:
    """Normalized 2D Gaussian mask centred on the window."""
    m, n = [(s - 1.0) / 2.0 for s in shape]
    y, x = np.ogrid[-m:m + 1, -n:n + 1]
    h = np.exp(-(x * x + y * y) / (2.0 * sigma * sigma))
    h[h < np.finfo(h.dtype).eps * h.max()] = 0
    return h / h.sum()


def _center(matrix: np.ndarray) -> np.ndarray:
    return matrix - np.mean(matrix, axis=0, keepdims=True)


def linear_cka(x: np.ndarray, y: np.ndarray) -> SimilarityReport:
    """Linear centered kernel alignment between two sample-by-feature matrices."""
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DataError(f"CKA needs 2D matrices, got shapes {a.shape} and {b.shape}")
    if a.shape[0] != b.shape[0]:
        raise DataError(f"CKA sample counts differ: {a.shape[0]} vs {b.shape[0]}")
    if a.shape[0] < 2:
        raise DataError(f"CKA needs at least 2 samples, got {a.shape[0]}")

    a = _center(a)
    b = _center(b)
    norm_a = np.linalg.norm(a.T @ a)
    norm_b = np.linalg.norm(b.T @ b)
    if norm_a == 0.0 or norm_b == 0.0:
        return SimilarityReport(score=0.0, degenerate=True)
    cross = np.linalg.norm(b.T @ a) ** 2
    return SimilarityReport(score=float(cross / (norm_a * norm_b)))


def _data_range(a: np.ndarray, b: np.ndarray, params: SsimParams) -> float:
    if params.data_range is not None:
        if params.data_range <= 0:
            raise DataError(f"SSIM data range must be positive, got {params.data_range}")
        return float(params.data_range)
    span = float(max(a.max(), b.max()) - min(a.min(), b.min()))
    return span if span > 0 else 1.0


def _ssim_channel(x: np.ndarray, y: np.ndarray, window: np.ndarray, c1: float, c2: float) -> np.ndarray:
    def local(values: np.ndarray) -> np.ndarray:
        return signal.correlate2d(values, window, mode="valid")

    mu_x = local(x)
    mu_y = local(y)
    sigma_xx = local(x * x) - mu_x * mu_x
    sigma_yy = local(y * y) - mu_y * mu_y
    sigma_xy = local(x * y) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + c1) * (2.0 * sigma_xy + c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_xx + sigma_yy + c2)
    return numerator / denominator


def ssim(a: np.ndarray, b: np.ndarray, params: SsimParams = SsimParams()) -> SimilarityReport:
    """Per-channel SSIM map over valid windows; the score is the mean over map and channels."""
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DataError(f"SSIM inputs differ in shape: {x.shape} vs {y.shape}")
    if x.ndim == 2:
        x = x[:, :, np.newaxis]
        y = y[:, :, np.newaxis]
    if x.ndim != 3:
        raise DataError(f"SSIM needs W x H x C images, got shape {x.shape}")
    if x.shape[0] < params.window or x.shape[1] < params.window:
        raise DataError(
            f"image {x.shape[0]}x{x.shape[1]} is smaller than the {params.window}x{params.window} SSIM window"
        )

    r = _data_range(x, y, params)
    c1 = (params.k1 * r) ** 2
    c2 = (params.k2 * r) ** 2
    window = params.kernel()
    maps = np.stack(
        [_ssim_channel(x[:, :, ch], y[:, :, ch], window, c1, c2) for ch in range(x.shape[2])],
        axis=-1,
    )
    return SimilarityReport(score=float(np.mean(maps)), map=maps)


def tokens_to_image(tokens: np.ndarray, shape: tuple[int, int, int]) -> np.ndarray:
    """Row-major refill of a patch-token matrix (CLS stripped) into a W x H x C image."""
    matrix = np.asarray(tokens, dtype=np.float64)
    width, height, channels = shape
    if matrix.ndim != 2:
        raise DataError(f"token matrix must be 2D, got shape {matrix.shape}")
    size = matrix.shape[0] * matrix.shape[1]
    if size != width * height * channels:
        hint = ""
        if (matrix.shape[0] - 1) * matrix.shape[1] == width * height * channels:
            hint = "; strip the CLS row first"
        raise DataError(
            f"cannot reshape {matrix.shape[0]}x{matrix.shape[1]} tokens ({size} values) into "
            f"{width}x{height}x{channels} ({width * height * channels} values){hint}"
        )
    return matrix.reshape(shape)


def image_to_tokens(image: np.ndarray, num_tokens: int) -> np.ndarray:
    """Inverse of `tokens_to_image`."""
    array = np.asarray(image, dtype=np.float64)
    if array.size % num_tokens:
        raise DataError(f"{array.size} values do not split into {num_tokens} tokens")
    return array.reshape(num_tokens, array.size // num_tokens)
