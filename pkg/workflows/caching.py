"""
Primitive CLS caching.

Every image is decomposed, each primitive and the original are run through
the frozen model, and the CLS rows at the requested layer are kept. A cache
directory holds a YAML header naming what it was built from plus TNSR
tensors; a header that disagrees with the request is refused.
"""
import asyncio
import logging
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml

from core.errors import DataError, StaleCacheError
from core.models import CLSBundle, WaveletName, canonical_subbands
from core.tensor_io import load_tensor, save_tensor
from vit.encoder import Model, classify, cls_token, forward
from wavelets.decomposition import basis_filters, decompose, primitive_images
from workflows.datasets import DatasetItem, fingerprint_items
from workflows.pool import map_async

logger = logging.getLogger(__name__)

META_FILE = "meta.yaml"
TENSOR_FILES = ("primitive_cls.tnsr", "original_cls.tnsr", "original_logits.tnsr")
CACHE_VERSION = 1


def bundle_for(model: Model, item: DatasetItem, basis: WaveletName, levels: int, layer: int) -> CLSBundle:
    """CLS rows of one image and its primitives at `layer`; logits always come from the final layer."""
    tree = decompose(item.image, basis_filters(basis), levels)
    primitives = primitive_images(tree)
    rows = np.stack([cls_token(forward(model, image), layer) for image in primitives.images])
    trace = forward(model, item.image)
    logits = classify(model, cls_token(trace, len(trace) - 1))
    return CLSBundle(
        image_id=item.image_id,
        primitive_cls=rows,
        original_cls=cls_token(trace, layer).copy(),
        original_logits=logits,
        target=int(np.argmax(logits)),
        label=item.label,
    )


def cache_header(model: Model, items: Sequence[DatasetItem], basis: WaveletName, levels: int, layer: int) -> dict:
    return {
        "version": CACHE_VERSION,
        "model": model.fingerprint(),
        "basis": basis.value,
        "levels": int(levels),
        "layer": int(layer),
        "subbands": [s.label for s in canonical_subbands(levels)],
        "dataset": fingerprint_items(items),
        "ids": [item.image_id for item in items],
        "labels": [int(item.label) for item in items],
    }


def _read_cache(cache_dir: Path, header: dict) -> Optional[list[CLSBundle]]:
    meta_path = cache_dir / META_FILE
    if not meta_path.is_file():
        return None
    stored = yaml.safe_load(meta_path.read_text()) or {}
    for key, value in header.items():
        if stored.get(key) != value:
            raise StaleCacheError(
                f"cache {cache_dir} was built for a different {key}; delete it or choose another directory"
            )
    primitive_cls, original_cls, logits = (load_tensor(cache_dir / name) for name in TENSOR_FILES)
    count = len(header["ids"])
    if primitive_cls.shape[0] != count or original_cls.shape[0] != count or logits.shape[0] != count:
        raise StaleCacheError(f"cache {cache_dir} tensors do not cover {count} images")
    logger.info("cache hit: %s (%d images)", cache_dir, count)
    return [
        CLSBundle(
            image_id=image_id,
            primitive_cls=primitive_cls[i],
            original_cls=original_cls[i],
            original_logits=logits[i],
            target=int(np.argmax(logits[i])),
            label=label,
        )
        for i, (image_id, label) in enumerate(zip(header["ids"], header["labels"]))
    ]


def _write_cache(cache_dir: Path, header: dict, bundles: list[CLSBundle]) -> None:
    cache_dir.mkdir(parents=True, exist_ok=True)
    save_tensor(cache_dir / TENSOR_FILES[0], np.stack([b.primitive_cls for b in bundles]))
    save_tensor(cache_dir / TENSOR_FILES[1], np.stack([b.original_cls for b in bundles]))
    save_tensor(cache_dir / TENSOR_FILES[2], np.stack([b.original_logits for b in bundles]))
    # header last: a directory without one is rebuilt
    (cache_dir / META_FILE).write_text(yaml.safe_dump(header, sort_keys=True))
    logger.info("cache written: %s (%d images)", cache_dir, len(bundles))


async def cache_primitive_cls_async(
    model: Model,
    items: Sequence[DatasetItem],
    basis: WaveletName,
    levels: int,
    layer: int,
    cache_dir: Optional[Union[str, Path]] = None,
    workers: int = 4,
) -> list[CLSBundle]:
    """Bundles for `items` in their order, read from or written to `cache_dir` when given."""
    if not 1 <= layer <= model.config.num_layers:
        raise DataError(f"layer {layer} outside [1, {model.config.num_layers}]")
    if not items:
        raise DataError("no images to cache")
    header = cache_header(model, items, basis, levels, layer)
    directory = Path(cache_dir) if cache_dir is not None else None
    if directory is not None:
        cached = _read_cache(directory, header)
        if cached is not None:
            return cached
        logger.info("cache miss: %s", directory)

    bundles = await map_async(lambda item: bundle_for(model, item, basis, levels, layer), items, workers)
    if directory is not None:
        _write_cache(directory, header, bundles)
    return bundles


def cache_primitive_cls(
    model: Model,
    items: Sequence[DatasetItem],
    basis: WaveletName,
    levels: int,
    layer: int,
    cache_dir: Optional[Union[str, Path]] = None,
    workers: int = 4,
) -> list[CLSBundle]:
    return asyncio.run(cache_primitive_cls_async(model, items, basis, levels, layer, cache_dir, workers))


def load_cache(cache_dir: Union[str, Path], model: Optional[Model] = None) -> tuple[dict, list[CLSBundle]]:
    """Read a cache directory on its own; with `model` given, refuse a cache built for another model."""
    directory = Path(cache_dir)
    meta_path = directory / META_FILE
    if not meta_path.is_file():
        raise DataError(f"no cache found in {directory}")
    header = yaml.safe_load(meta_path.read_text()) or {}
    if header.get("version") != CACHE_VERSION:
        raise StaleCacheError(f"cache {directory} has version {header.get('version')}, expected {CACHE_VERSION}")
    if model is not None and header.get("model") != model.fingerprint():
        raise StaleCacheError(f"cache {directory} was built for a different model")
    bundles = _read_cache(directory, header)
    return header, bundles or []
