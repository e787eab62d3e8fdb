"""Tests for synthetic data, manifests and seeded splits."""
import logging

import numpy as np
import pytest

from core.errors import DataError
from workflows.datasets import (
    generate_synthetic_dataset,
    load_manifest,
    read_image,
    split,
    split_labels,
    write_dataset,
    write_ppm,
)


class TestSyntheticDataset:
    def test_deterministic_in_seed(self):
        a = generate_synthetic_dataset(3, 4, 16, seed=11)
        b = generate_synthetic_dataset(3, 4, 16, seed=11)
        c = generate_synthetic_dataset(3, 4, 16, seed=12)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != c.fingerprint()

    def test_shape_and_range(self, small_dataset):
        assert len(small_dataset) == 15
        assert small_dataset.num_classes == 3
        for item in small_dataset.items:
            assert item.image.shape == (16, 16, 3)
            assert item.image.min() >= 0.0 and item.image.max() <= 1.0
        assert list(np.bincount(small_dataset.labels)) == [5, 5, 5]

    def test_needs_two_classes(self):
        with pytest.raises(DataError, match="at least 2 classes"):
            generate_synthetic_dataset(1, 4, 16, seed=0)

    def test_rejects_inadmissible_size(self):
        with pytest.raises(DataError, match="not divisible"):
            generate_synthetic_dataset(2, 4, 18, seed=0)

    def test_classes_are_separable(self):
        dataset = generate_synthetic_dataset(10, 10, 32, seed=3)
        parts = split(dataset, seed=0)
        flat = np.stack([item.image.ravel() for item in dataset.items])
        labels = dataset.labels
        train = np.array(parts.train)
        test = np.array(parts.test)
        centroids = np.stack([flat[train][labels[train] == k].mean(axis=0) for k in range(10)])
        distances = np.linalg.norm(flat[test][:, None, :] - centroids[None, :, :], axis=-1)
        accuracy = np.mean(np.argmin(distances, axis=1) == labels[test])
        assert accuracy > 0.2


class TestSplit:
    def test_stratified_sizes(self):
        dataset = generate_synthetic_dataset(3, 10, 8, seed=1)
        parts = split(dataset, seed=4)
        assert parts.stratified
        labels = dataset.labels
        for indices, expected in ((parts.train, 6), (parts.val, 2), (parts.test, 2)):
            assert list(np.bincount(labels[list(indices)], minlength=3)) == [expected] * 3

    def test_disjoint_and_complete(self):
        parts = split_labels(np.repeat(np.arange(4), 7), 4, seed=9)
        everything = parts.train + parts.val + parts.test
        assert sorted(everything) == list(range(28))
        assert len(set(everything)) == 28

    def test_seed_determinism(self):
        labels = np.repeat(np.arange(3), 10)
        assert split_labels(labels, 3, seed=5) == split_labels(labels, 3, seed=5)
        assert split_labels(labels, 3, seed=5) != split_labels(labels, 3, seed=6)

    def test_small_class_falls_back(self, caplog):
        labels = np.array([0] * 10 + [1] * 3)
        with caplog.at_level(logging.WARNING):
            parts = split_labels(labels, 2, seed=0)
        assert not parts.stratified
        assert "unstratified" in caplog.text
        assert (len(parts.train), len(parts.val), len(parts.test)) == (7, 2, 4)

    def test_empty_labels(self):
        with pytest.raises(DataError, match="empty"):
            split_labels(np.array([], dtype=np.int64), 2, seed=0)


class TestManifest:
    def test_tnsr_round_trip_is_exact(self, small_dataset, tmp_path):
        manifest = write_dataset(small_dataset, tmp_path / "data")
        loaded = load_manifest(manifest, num_classes=3)
        assert loaded.fingerprint() == small_dataset.fingerprint()

    def test_ppm_round_trip_within_quantization(self, small_dataset, tmp_path):
        manifest = write_dataset(small_dataset, tmp_path / "data", image_format="ppm")
        loaded = load_manifest(manifest)
        assert loaded.num_classes == 3
        for original, restored in zip(small_dataset.items, loaded.items):
            assert restored.image_id == original.image_id
            assert restored.image.shape == original.image.shape
            assert np.max(np.abs(restored.image - original.image)) <= 0.5 / 255 + 1e-12

    def test_missing_image_names_row(self, small_dataset, tmp_path):
        manifest = write_dataset(small_dataset, tmp_path / "data")
        (tmp_path / "data" / "images" / f"{small_dataset.items[0].image_id}.tnsr").unlink()
        with pytest.raises(DataError, match="row 2"):
            load_manifest(manifest)

    def test_label_out_of_range(self, small_dataset, tmp_path):
        manifest = write_dataset(small_dataset, tmp_path / "data")
        with pytest.raises(DataError, match="outside"):
            load_manifest(manifest, num_classes=2)

    @pytest.mark.parametrize("line, missing", [
        ("a", "relative_path, label"),
        ("a,images/a.tnsr", "label"),
        ("a,images/a.tnsr,0,extra", "none"),
    ])
    def test_short_or_long_row(self, tmp_path, line, missing):
        manifest = tmp_path / "manifest.csv"
        manifest.write_text(f"id,relative_path,label\n{line}\n")
        with pytest.raises(DataError, match=f"row 2 .*missing {missing}$"):
            load_manifest(manifest)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_manifest(tmp_path / "manifest.csv")

    def test_write_ppm_reports_clamping(self, tmp_path):
        assert write_ppm(tmp_path / "in.ppm", np.full((4, 4, 3), 0.5)) is False
        assert write_ppm(tmp_path / "out.ppm", np.full((4, 4, 3), 1.5)) is True
        np.testing.assert_array_equal(read_image(tmp_path / "out.ppm"), 1.0)

    def test_grayscale_ppm_keeps_orientation(self, tmp_path):
        image = np.zeros((4, 6, 1))
        image[3, 0, 0] = 1.0
        write_ppm(tmp_path / "gray.ppm", image)
        restored = read_image(tmp_path / "gray.ppm")
        assert restored.shape == (4, 6, 1)
        np.testing.assert_array_equal(restored, image)
