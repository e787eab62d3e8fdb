"""
Multilevel 2D orthogonal DWT with per-subband image-space reconstruction.

Images are float64 arrays of shape (W, H, C); the transform runs over axes
(0, 1) of every channel independently, separable, with periodized boundaries.
Filter taps come from PyWavelets; the transform is `pywt.wavedec2` /
`pywt.waverec2` in mode "periodization", fed with the basis' own filter bank.
"""
import logging
import warnings
from dataclasses import dataclass
from typing import Iterator, Union

import numpy as np
import pywt

from core.errors import DataError
from core.models import (
    DETAIL_KINDS,
    SubbandId,
    SubbandKind,
    WaveletName,
    canonical_subbands,
    primitive_count,
)

logger = logging.getLogger(__name__)

MODE = "periodization"
_AXES = (0, 1)


@dataclass(frozen=True)
class WaveletBasis:
    """Orthonormal two-channel filter bank.

    Analysis taps are in correlation order (the canonical Daubechies listing);
    synthesis taps are their time-reverse.
    """
    name: WaveletName
    analysis_lo: tuple[float, ...]
    analysis_hi: tuple[float, ...]
    synthesis_lo: tuple[float, ...]
    synthesis_hi: tuple[float, ...]

    def to_pywt(self) -> pywt.Wavelet:
        # pywt filter_bank order: dec_lo, dec_hi (convolution order), rec_lo, rec_hi
        bank = [
            list(self.synthesis_lo),
            list(self.synthesis_hi),
            list(self.analysis_lo),
            list(self.analysis_hi),
        ]
        return pywt.Wavelet(self.name.value, filter_bank=bank)


@dataclass(frozen=True, eq=False)
class DecompositionTree:
    """Coefficients of a multilevel decomposition.

    `details[i]` holds the (LH, HL, HH) blocks of level `levels - i`, i.e. the
    deepest level first, matching `pywt.wavedec2` output order.
    """
    basis: WaveletBasis
    levels: int
    shape: tuple[int, int, int]
    approx: np.ndarray
    details: tuple[tuple[np.ndarray, np.ndarray, np.ndarray], ...]

    def block(self, subband: SubbandId) -> np.ndarray:
        if subband.kind == SubbandKind.LL:
            if subband.level != self.levels:
                raise DataError(f"LL exists only at level {self.levels}, not {subband.level}")
            return self.approx
        if not 1 <= subband.level <= self.levels:
            raise DataError(f"subband level {subband.level} outside [1, {self.levels}]")
        return self.details[self.levels - subband.level][DETAIL_KINDS.index(subband.kind)]

    def subbands(self) -> Iterator[tuple[SubbandId, np.ndarray]]:
        """Blocks in canonical primitive order."""
        for subband in canonical_subbands(self.levels):
            yield subband, self.block(subband)

    def only(self, keep: SubbandId) -> "DecompositionTree":
        """Copy of this tree with every block except `keep` zeroed."""
        def mask(subband: SubbandId, block: np.ndarray) -> np.ndarray:
            return block.copy() if subband == keep else np.zeros_like(block)

        approx = mask(SubbandId(self.levels, SubbandKind.LL), self.approx)
        details = tuple(
            tuple(
                mask(SubbandId(self.levels - i, kind), blocks[k])
                for k, kind in enumerate(DETAIL_KINDS)
            )
            for i, blocks in enumerate(self.details)
        )
        return DecompositionTree(self.basis, self.levels, self.shape, approx, details)

    def energy(self) -> np.ndarray:
        """Per-channel sum of squared coefficients."""
        total = np.sum(self.approx ** 2, axis=_AXES)
        for blocks in self.details:
            for block in blocks:
                total = total + np.sum(block ** 2, axis=_AXES)
        return total

    def to_pywt(self) -> list:
        return [self.approx] + [tuple(blocks) for blocks in self.details]


@dataclass(frozen=True, eq=False)
class PrimitiveSet:
    """Image-space subband reconstructions in canonical order."""
    items: tuple[tuple[SubbandId, np.ndarray], ...]

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self):
        return iter(self.items)

    @property
    def images(self) -> list[np.ndarray]:
        return [image for _, image in self.items]

    @property
    def subband_ids(self) -> list[SubbandId]:
        return [subband for subband, _ in self.items]

    def total(self) -> np.ndarray:
        return np.sum(np.stack(self.images), axis=0)


def basis_filters(name: Union[str, WaveletName]) -> WaveletBasis:
    """Orthonormal filters for `haar` or `db4`."""
    try:
        wavelet_name = WaveletName(name) if not isinstance(name, WaveletName) else name
    except ValueError:
        raise DataError(
            f"unsupported wavelet basis '{name}'; choose one of "
            f"{', '.join(w.value for w in WaveletName)}"
        ) from None

    reference = pywt.Wavelet(wavelet_name.value)
    analysis_lo = tuple(float(t) for t in reference.rec_lo)
    length = len(analysis_lo)
    analysis_hi = tuple(
        (-1.0) ** i * analysis_lo[length - 1 - i] for i in range(length)
    )
    return WaveletBasis(
        name=wavelet_name,
        analysis_lo=analysis_lo,
        analysis_hi=analysis_hi,
        synthesis_lo=analysis_lo[::-1],
        synthesis_hi=analysis_hi[::-1],
    )


def _as_image(image: np.ndarray) -> np.ndarray:
    array = np.asarray(image, dtype=np.float64)
    if array.ndim == 2:
        array = array[:, :, np.newaxis]
    if array.ndim != 3:
        raise DataError(f"image must be W x H x C, got shape {array.shape}")
    return array


def check_admissible(shape: tuple[int, ...], levels: int) -> None:
    """Reject shapes the periodized transform cannot split `levels` times."""
    if levels < 1:
        raise DataError(f"levels must be >= 1, got {levels}")
    factor = 2 ** levels
    width, height = shape[0], shape[1]
    if width % factor or height % factor:
        pad_w = (-width) % factor
        pad_h = (-height) % factor
        raise DataError(
            f"image {width}x{height} is not divisible by 2^{levels} = {factor}; "
            f"pad width by {pad_w} and height by {pad_h}"
        )


def decompose(image: np.ndarray, basis: WaveletBasis, levels: int) -> DecompositionTree:
    """Periodized multilevel 2D DWT, channels independent."""
    array = _as_image(image)
    check_admissible(array.shape, levels)
    with warnings.catch_warnings():
        # pywt warns when filters are longer than the signal; periodization handles it
        warnings.simplefilter("ignore", UserWarning)
        coeffs = pywt.wavedec2(array, basis.to_pywt(), mode=MODE, level=levels, axes=_AXES)
    approx = np.asarray(coeffs[0], dtype=np.float64)
    details = tuple(
        tuple(np.asarray(block, dtype=np.float64) for block in level_blocks)
        for level_blocks in coeffs[1:]
    )
    return DecompositionTree(basis, levels, tuple(array.shape), approx, details)


def _check_tree(tree: DecompositionTree) -> None:
    width, height, channels = tree.shape
    check_admissible(tree.shape, tree.levels)
    if len(tree.details) != tree.levels:
        raise DataError(f"tree declares {tree.levels} levels but holds {len(tree.details)} detail groups")
    expected = (width >> tree.levels, height >> tree.levels, channels)
    if tree.approx.shape != expected:
        raise DataError(f"approximation block has shape {tree.approx.shape}, expected {expected}")
    for i, blocks in enumerate(tree.details):
        level = tree.levels - i
        expected = (width >> level, height >> level, channels)
        for kind, block in zip(DETAIL_KINDS, blocks):
            if block.shape != expected:
                raise DataError(
                    f"{kind.value}{level} block has shape {block.shape}, expected {expected}"
                )


def reconstruct(tree: DecompositionTree) -> np.ndarray:
    """Exact inverse of `decompose`."""
    _check_tree(tree)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        image = pywt.waverec2(tree.to_pywt(), tree.basis.to_pywt(), mode=MODE, axes=_AXES)
    return np.asarray(image, dtype=np.float64)


def primitive_images(tree: DecompositionTree) -> PrimitiveSet:
    """One image per subband: the reconstruction with all other blocks zeroed."""
    _check_tree(tree)
    items = tuple(
        (subband, reconstruct(tree.only(subband)))
        for subband in canonical_subbands(tree.levels)
    )
    if len(items) != primitive_count(tree.levels):
        raise DataError(f"expected {primitive_count(tree.levels)} primitives, built {len(items)}")
    logger.debug("built %d primitives for a %s tree", len(items), tree.basis.name.value)
    return PrimitiveSet(items)
