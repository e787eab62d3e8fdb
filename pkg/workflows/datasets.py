"""
Datasets for WaveProbe experiments.

A seeded procedural dataset stands in for a real one; real images come in
through a CSV manifest ("id,relative_path,label") pointing at 8-bit PPM or
TNSR files. Images are float64 W x H x C arrays in [0, 1].
"""
import csv
import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from PIL import Image

from core.errors import DataError
from core.tensor_io import load_tensor, save_tensor
from wavelets.decomposition import check_admissible

logger = logging.getLogger(__name__)

TRAIN_RATIO = 0.6
VAL_RATIO = 0.2
MIN_STRATIFIED_CLASS = 5
MANIFEST_HEADER = ("id", "relative_path", "label")
SYNTHETIC_LEVELS = 2


@dataclass(frozen=True, eq=False)
class DatasetItem:
    image_id: str
    image: np.ndarray
    label: int


@dataclass(frozen=True, eq=False)
class Dataset:
    """Ordered labelled images plus where they came from."""
    items: tuple[DatasetItem, ...]
    num_classes: int
    provenance: str

    def __post_init__(self):
        seen = set()
        for item in self.items:
            if item.image_id in seen:
                raise DataError(f"duplicate image id '{item.image_id}'")
            seen.add(item.image_id)
            if not 0 <= item.label < self.num_classes:
                raise DataError(
                    f"image '{item.image_id}' has label {item.label} outside [0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.items)

    @property
    def labels(self) -> np.ndarray:
        return np.array([item.label for item in self.items], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> list[DatasetItem]:
        return [self.items[i] for i in indices]

    def fingerprint(self) -> str:
        return fingerprint_items(self.items)


def fingerprint_items(items: Sequence[DatasetItem]) -> str:
    """sha256 over ids, labels and pixel bytes, in order."""
    digest = hashlib.sha256()
    for item in items:
        digest.update(item.image_id.encode("utf-8"))
        digest.update(int(item.label).to_bytes(4, "little"))
        digest.update(np.ascontiguousarray(item.image, dtype="<f8").tobytes())
    return digest.hexdigest()


@dataclass(frozen=True)
class Split:
    """Disjoint sorted index sets into a Dataset."""
    train: tuple[int, ...]
    val: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    stratified: bool = True


# =============================================================================
# Synthetic data
# =============================================================================

def _class_style(seed: int, label: int, channels: int) -> dict:
    rng = np.random.default_rng([seed, label])
    return {
        "angle": np.pi * label / 7.0 + rng.uniform(-0.1, 0.1),
        "frequency": rng.uniform(1.5, 5.0),
        "color": rng.uniform(0.2, 1.0, size=channels),
        "blob": rng.uniform(0.25, 0.75, size=2),
        "radius": rng.uniform(0.12, 0.3),
    }


def _synthetic_image(seed: int, label: int, index: int, size: int, channels: int) -> np.ndarray:
    style = _class_style(seed, label, channels)
    rng = np.random.default_rng([seed, label, index])
    coords = (np.arange(size) + 0.5) / size
    x, y = np.meshgrid(coords, coords, indexing="ij")

    angle = style["angle"] + rng.normal(0.0, 0.05)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    grating = np.sin(2.0 * np.pi * style["frequency"] * (x * np.cos(angle) + y * np.sin(angle)) + phase)

    cx, cy = style["blob"] + rng.normal(0.0, 0.05, size=2)
    blob = np.exp(-((x - cx) ** 2 + (y - cy) ** 2) / (2.0 * style["radius"] ** 2))

    image = 0.5 + 0.25 * grating[:, :, np.newaxis] * style["color"]
    image = image + 0.3 * blob[:, :, np.newaxis] * (1.0 - style["color"])
    image = image + rng.normal(0.0, 0.02, size=(size, size, channels))
    return np.clip(image, 0.0, 1.0)


def generate_synthetic_dataset(
    num_classes: int, per_class: int, size: int, seed: int, channels: int = 3
) -> Dataset:
    """Class-conditional gratings and blobs; deterministic in (arguments, seed)."""
    if num_classes < 2:
        raise DataError(f"synthetic dataset needs at least 2 classes, got {num_classes}")
    if per_class < 1 or channels < 1:
        raise DataError(f"per_class and channels must be >= 1, got {per_class} and {channels}")
    check_admissible((size, size), SYNTHETIC_LEVELS)

    items = tuple(
        DatasetItem(f"syn-{label:03d}-{index:04d}", _synthetic_image(seed, label, index, size, channels), label)
        for label in range(num_classes)
        for index in range(per_class)
    )
    logger.info("generated %d synthetic images (%d classes, seed %d)", len(items), num_classes, seed)
    return Dataset(items, num_classes, f"synthetic:seed={seed},per_class={per_class},size={size}")


# =============================================================================
# Images on disk
# =============================================================================

def read_image(path: Union[str, Path]) -> np.ndarray:
    """PPM (8-bit) scaled to [0, 1], or a TNSR tensor taken as-is."""
    path = Path(path)
    if path.suffix.lower() == ".tnsr":
        image = load_tensor(path)
        if image.ndim == 2:
            image = image[:, :, np.newaxis]
        return image
    with Image.open(path) as img:
        pixels = np.asarray(img.convert("RGB") if img.mode not in ("L", "RGB") else img, dtype=np.float64)
    if pixels.ndim == 2:
        pixels = pixels[:, :, np.newaxis]
    # Pillow is row-major (height first); images here are width first
    return np.transpose(pixels, (1, 0, 2)) / 255.0


def write_ppm(path: Union[str, Path], image: np.ndarray) -> bool:
    """8-bit PPM export; returns True when values had to be clamped to [0, 1]."""
    array = np.asarray(image, dtype=np.float64)
    if array.ndim == 2:
        array = array[:, :, np.newaxis]
    clamped = bool(np.any(array < 0.0) or np.any(array > 1.0))
    if clamped:
        logger.warning("clamping image to [0, 1] for 8-bit export: %s", path)
    pixels = np.round(np.clip(array, 0.0, 1.0) * 255.0).astype(np.uint8)
    pixels = np.transpose(pixels, (1, 0, 2))
    if pixels.shape[2] == 1:
        pixels = pixels[:, :, 0]
    elif pixels.shape[2] != 3:
        raise DataError(f"PPM export needs 1 or 3 channels, got {pixels.shape[2]}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path, format="PPM")
    return clamped


def load_manifest(path: Union[str, Path], num_classes: Optional[int] = None) -> Dataset:
    """Read an "id,relative_path,label" CSV; paths resolve against the manifest's folder."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"dataset manifest not found: {path}")
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        raise DataError(f"dataset manifest {path} has no rows")
    if tuple(rows[0].keys()) != MANIFEST_HEADER:
        raise DataError(f"dataset manifest header must be {','.join(MANIFEST_HEADER)}, got {','.join(rows[0].keys())}")

    parsed = []
    for number, row in enumerate(rows, start=2):
        where = f"{path.name} row {number} (id '{row['id']}')"
        missing = [key for key in MANIFEST_HEADER if not row.get(key)]
        if missing or None in row:
            raise DataError(f"{where}: expected {len(MANIFEST_HEADER)} fields, missing {', '.join(missing) or 'none'}")
        try:
            label = int(row["label"])
        except (TypeError, ValueError):
            raise DataError(f"{where}: label {row['label']!r} is not an integer") from None
        if label < 0 or (num_classes is not None and label >= num_classes):
            raise DataError(f"{where}: label {label} outside [0, {num_classes})")
        image_path = path.parent / row["relative_path"]
        if not image_path.is_file():
            raise DataError(f"{where}: image file not found: {image_path}")
        try:
            image = read_image(image_path)
        except (OSError, ValueError) as e:
            raise DataError(f"{where}: cannot read {image_path}: {e}") from e
        parsed.append(DatasetItem(row["id"], image, label))

    shapes = {item.image.shape for item in parsed}
    if len(shapes) > 1:
        raise DataError(f"dataset manifest {path} mixes image shapes {sorted(shapes)}")
    classes = num_classes if num_classes is not None else max(item.label for item in parsed) + 1
    logger.info("loaded %d images from %s", len(parsed), path)
    return Dataset(tuple(parsed), classes, f"manifest:{path}")


def write_dataset(dataset: Dataset, directory: Union[str, Path], image_format: str = "tnsr") -> Path:
    """Write images plus a manifest.csv that `load_manifest` reads back."""
    if image_format not in ("tnsr", "ppm"):
        raise DataError(f"unknown image format '{image_format}' (use tnsr or ppm)")
    directory = Path(directory)
    (directory / "images").mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.csv"
    with open(manifest, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(MANIFEST_HEADER)
        for item in dataset.items:
            relative = f"images/{item.image_id}.{image_format}"
            if image_format == "tnsr":
                save_tensor(directory / relative, item.image)
            else:
                write_ppm(directory / relative, item.image)
            writer.writerow([item.image_id, relative, item.label])
    return manifest


# =============================================================================
# Splits
# =============================================================================

def _cut(indices: np.ndarray) -> tuple[list[int], list[int], list[int]]:
    n = len(indices)
    n_train = int(np.floor(TRAIN_RATIO * n))
    n_val = int(np.floor(VAL_RATIO * n))
    return (
        indices[:n_train].tolist(),
        indices[n_train:n_train + n_val].tolist(),
        indices[n_train + n_val:].tolist(),
    )


def split(dataset: Dataset, seed: int) -> Split:
    """Seeded 60:20:20 split, stratified per class unless a class is too small."""
    return split_labels(dataset.labels, dataset.num_classes, seed)


def split_labels(labels: np.ndarray, num_classes: int, seed: int) -> Split:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    counts = np.bincount(labels, minlength=num_classes)
    present = counts[counts > 0]

    train: list[int] = []
    val: list[int] = []
    test: list[int] = []
    stratified = bool(np.all(present >= MIN_STRATIFIED_CLASS))
    if stratified:
        for label in range(num_classes):
            members = np.flatnonzero(labels == label)
            if members.size == 0:
                continue
            a, b, c = _cut(rng.permutation(members))
            train += a
            val += b
            test += c
    else:
        logger.warning(
            "smallest class has %d item(s), fewer than %d; falling back to an unstratified split",
            int(present.min()), MIN_STRATIFIED_CLASS,
        )
        train, val, test = _cut(rng.permutation(labels.size))

    return Split(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)), seed, stratified)
