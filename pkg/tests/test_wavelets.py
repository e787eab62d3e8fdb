"""Tests for the wavelet decomposition and per-subband primitives."""
import numpy as np
import pytest

from core.errors import DataError
from core.models import SubbandId, SubbandKind, WaveletName
from wavelets.decomposition import (
    DecompositionTree,
    basis_filters,
    decompose,
    primitive_images,
    reconstruct,
)

SQRT2 = np.sqrt(2.0)


def random_corpus(count: int = 100):
    """Seeded images of admissible sizes 8..64 with 1-3 channels."""
    rng = np.random.default_rng(2024)
    for _ in range(count):
        size = int(rng.choice([8, 16, 24, 32, 64]))
        width = size
        height = int(rng.choice([8, 16, 32]))
        channels = int(rng.integers(1, 4))
        yield rng.random((width, height, channels))


class TestBasisFilters:
    def test_haar_taps(self):
        basis = basis_filters("haar")
        np.testing.assert_allclose(basis.analysis_lo, [1 / SQRT2, 1 / SQRT2], atol=1e-12)
        np.testing.assert_allclose(basis.analysis_hi, [1 / SQRT2, -1 / SQRT2], atol=1e-12)

    @pytest.mark.parametrize("name", ["haar", "db4"])
    def test_orthonormal(self, name):
        basis = basis_filters(name)
        lo = np.array(basis.analysis_lo)
        hi = np.array(basis.analysis_hi)
        assert abs(np.sum(lo ** 2) - 1.0) < 1e-12
        assert abs(np.sum(lo) - SQRT2) < 1e-12
        expected_hi = [(-1) ** i * lo[len(lo) - 1 - i] for i in range(len(lo))]
        np.testing.assert_allclose(hi, expected_hi, atol=1e-12)
        np.testing.assert_array_equal(basis.synthesis_lo, lo[::-1])
        np.testing.assert_array_equal(basis.synthesis_hi, hi[::-1])

    def test_db4_vanishing_moments(self):
        basis = basis_filters(WaveletName.DB4)
        hi = np.array(basis.analysis_hi)
        assert len(hi) == 8
        assert abs(np.sum(hi)) < 1e-10
        assert abs(np.sum(np.arange(8) * hi)) < 1e-10

    def test_unknown_basis(self):
        with pytest.raises(DataError, match="sym5"):
            basis_filters("sym5")


class TestDecompose:
    def test_two_by_two_haar(self):
        image = np.array([[1.0, 2.0], [3.0, 4.0]])
        tree = decompose(image, basis_filters("haar"), 1)

        assert tree.block(SubbandId(1, SubbandKind.LL))[0, 0, 0] == pytest.approx(5.0, abs=1e-12)
        assert tree.block(SubbandId(1, SubbandKind.LH))[0, 0, 0] == pytest.approx(-2.0, abs=1e-12)
        assert tree.block(SubbandId(1, SubbandKind.HL))[0, 0, 0] == pytest.approx(-1.0, abs=1e-12)
        assert tree.block(SubbandId(1, SubbandKind.HH))[0, 0, 0] == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(reconstruct(tree)[:, :, 0], image, atol=1e-12)

    @pytest.mark.parametrize("levels", [1, 2])
    def test_constant_image_has_no_detail(self, levels):
        image = np.full((8, 8, 2), 0.3)
        tree = decompose(image, basis_filters("haar"), levels)
        for subband, block in tree.subbands():
            if subband.kind == SubbandKind.LL:
                np.testing.assert_allclose(block, 2 ** levels * 0.3, atol=1e-12)
            else:
                np.testing.assert_allclose(block, 0.0, atol=1e-12)

    def test_parseval_db4_small_image(self, rng):
        image = rng.random((8, 8, 1))
        tree = decompose(image, basis_filters("db4"), 2)
        pixel_energy = np.sum(image ** 2, axis=(0, 1))
        np.testing.assert_allclose(tree.energy(), pixel_energy, rtol=1e-9)

    def test_rejects_inadmissible_shape(self):
        with pytest.raises(DataError, match="pad width by 2"):
            decompose(np.zeros((10, 8, 1)), basis_filters("haar"), 2)

    def test_linearity(self, rng):
        basis = basis_filters("db4")
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        combined = decompose(2.0 * a - 0.5 * b, basis, 2)
        tree_a = decompose(a, basis, 2)
        tree_b = decompose(b, basis, 2)
        for (_, block), (_, block_a), (_, block_b) in zip(combined.subbands(), tree_a.subbands(), tree_b.subbands()):
            np.testing.assert_allclose(block, 2.0 * block_a - 0.5 * block_b, atol=1e-9)


class TestReconstruct:
    @pytest.mark.parametrize("name", ["haar", "db4"])
    @pytest.mark.parametrize("levels", [1, 2])
    def test_perfect_reconstruction_and_parseval(self, name, levels):
        basis = basis_filters(name)
        for image in random_corpus(25):
            tree = decompose(image, basis, levels)
            assert np.max(np.abs(reconstruct(tree) - image)) <= 1e-9
            np.testing.assert_allclose(tree.energy(), np.sum(image ** 2, axis=(0, 1)), rtol=1e-9)

    def test_zero_tree_gives_zero_image(self, rng):
        tree = decompose(rng.random((16, 16, 3)), basis_filters("db4"), 2)
        zero = DecompositionTree(
            tree.basis,
            tree.levels,
            tree.shape,
            np.zeros_like(tree.approx),
            tuple(tuple(np.zeros_like(b) for b in blocks) for blocks in tree.details),
        )
        np.testing.assert_array_equal(reconstruct(zero), np.zeros((16, 16, 3)))

    def test_rejects_inconsistent_tree(self, rng):
        tree = decompose(rng.random((16, 16, 1)), basis_filters("haar"), 1)
        broken = DecompositionTree(tree.basis, tree.levels, tree.shape, tree.approx[:4], tree.details)
        with pytest.raises(DataError, match="approximation block"):
            reconstruct(broken)


class TestPrimitives:
    def test_two_by_two_ll_primitive(self):
        image = np.array([[1.0, 2.0], [3.0, 4.0]])
        primitives = primitive_images(decompose(image, basis_filters("haar"), 1))
        np.testing.assert_allclose(primitives.images[0][:, :, 0], np.full((2, 2), 2.5), atol=1e-12)
        np.testing.assert_allclose(primitives.total()[:, :, 0], image, atol=1e-12)

    def test_constant_image_primitives(self):
        image = np.full((8, 8, 3), 0.7)
        primitives = primitive_images(decompose(image, basis_filters("haar"), 2))
        np.testing.assert_allclose(primitives.images[0], image, atol=1e-12)
        for detail in primitives.images[1:]:
            np.testing.assert_allclose(detail, 0.0, atol=1e-12)

    def test_two_level_order(self):
        primitives = primitive_images(decompose(np.zeros((8, 8, 1)), basis_filters("haar"), 2))
        assert len(primitives) == 7
        assert [s.label for s in primitives.subband_ids] == ["LL2", "LH2", "HL2", "HH2", "LH1", "HL1", "HH1"]

    @pytest.mark.parametrize("name", ["haar", "db4"])
    @pytest.mark.parametrize("levels", [1, 2])
    def test_primitives_sum_to_image(self, name, levels):
        basis = basis_filters(name)
        for image in random_corpus(10):
            primitives = primitive_images(decompose(image, basis, levels))
            assert len(primitives) == 3 * levels + 1
            assert np.max(np.abs(primitives.total() - image)) <= 1e-9
