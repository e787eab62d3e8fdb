"""
Representation reports and their writers.

CKA curves compare the original token matrix of every encoder layer with the
weighted sum of the primitives' token matrices; SSIM maps compare the final
(or a chosen) layer's patch tokens reshaped to image form.
"""
import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from composer.composition import compose_tokens
from core.errors import DataError
from core.tensor_io import save_tensor
from metrics.similarity import SsimParams, linear_cka, ssim, tokens_to_image
from vit.encoder import LayerTrace, Model, forward
from wavelets.decomposition import WaveletBasis, decompose, primitive_images

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CkaRow:
    layer: int
    summed: float
    learned: float


@dataclass(frozen=True, eq=False)
class SsimMapReport:
    layer: int
    score: float
    channel_scores: tuple[float, ...]
    maps: np.ndarray  # W' x H' x C


def _primitive_traces(model: Model, image: np.ndarray, basis: WaveletBasis, levels: int) -> list[LayerTrace]:
    primitives = primitive_images(decompose(image, basis, levels))
    return [forward(model, p) for p in primitives.images]


def _composed_layer(traces: Sequence[LayerTrace], weights: np.ndarray, layer: int) -> np.ndarray:
    return compose_tokens(weights, np.stack([t[layer] for t in traces]))


def trace_cka(reference: LayerTrace, layers: Mapping[int, np.ndarray]) -> dict[int, float]:
    """CKA per layer, tokens as samples."""
    return {layer: linear_cka(reference[layer], matrix).score for layer, matrix in layers.items()}


def layerwise_cka_report(
    model: Model,
    weights: np.ndarray,
    images: Sequence[np.ndarray],
    basis: WaveletBasis,
    levels: int,
) -> list[CkaRow]:
    """Mean CKA over `images` for layers 1..L, summed baseline and learned weights."""
    if not images:
        raise DataError("layerwise CKA needs at least one image")
    eta = np.asarray(weights, dtype=np.float64)
    ones = np.ones_like(eta)
    layers = range(1, model.config.num_layers + 1)
    summed = {layer: [] for layer in layers}
    learned = {layer: [] for layer in layers}

    for image in images:
        original = forward(model, image)
        traces = _primitive_traces(model, image, basis, levels)
        for layer, score in trace_cka(original, {i: _composed_layer(traces, ones, i) for i in layers}).items():
            summed[layer].append(score)
        for layer, score in trace_cka(original, {i: _composed_layer(traces, eta, i) for i in layers}).items():
            learned[layer].append(score)

    return [
        CkaRow(layer, float(np.mean(summed[layer])), float(np.mean(learned[layer])))
        for layer in layers
    ]


def ssim_map_report(
    model: Model,
    image: np.ndarray,
    weights: np.ndarray,
    basis: WaveletBasis,
    levels: int,
    layer: Optional[int] = None,
    params: SsimParams = SsimParams(),
) -> SsimMapReport:
    """SSIM between original and composed patch tokens, reshaped to the input image shape."""
    config = model.config
    layer = config.num_layers if layer is None else layer
    if not 0 <= layer <= config.num_layers:
        raise DataError(f"layer {layer} outside [0, {config.num_layers}]")
    original = forward(model, image)[layer][1:]
    composed = _composed_layer(_primitive_traces(model, image, basis, levels), weights, layer)[1:]

    shape = config.image_shape
    result = ssim(tokens_to_image(original, shape), tokens_to_image(composed, shape), params)
    channel_scores = tuple(float(np.mean(result.map[:, :, c])) for c in range(result.map.shape[2]))
    return SsimMapReport(layer, result.score, channel_scores, result.map)


# =============================================================================
# Writers
# =============================================================================

def write_csv(path: Union[str, Path], header: Sequence[str], rows: Sequence[Mapping]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(header), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: row.get(key, "") for key in header})
    return path


def write_json(path: Union[str, Path], payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path


def write_ssim_maps(directory: Union[str, Path], prefix: str, report: SsimMapReport) -> list[Path]:
    """One TNSR file per channel map."""
    directory = Path(directory)
    return [
        save_tensor(directory / f"{prefix}_{channel}.tnsr", report.maps[:, :, channel])
        for channel in range(report.maps.shape[2])
    ]
