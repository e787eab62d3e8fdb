"""
Accuracy, error breakdown and pixel-space reweighting for composition models.
"""
import logging
from typing import Sequence, Union

import numpy as np

from composer.composition import compose
from core.errors import DataError
from core.models import (
    CLSBundle,
    CompositionModel,
    ErrorReport,
    EvalRow,
    Reference,
    WaveletName,
)
from vit.encoder import Model, classify, cls_token, forward, predict
from wavelets.decomposition import PrimitiveSet, basis_filters, decompose, primitive_images
from workflows.datasets import DatasetItem
from workflows.pool import map_ordered

logger = logging.getLogger(__name__)

ORIGINAL = "original"
SUMMED = "summed"

Source = Union[str, CompositionModel, np.ndarray]


def _weights_for(source: Source, n: int) -> np.ndarray:
    if isinstance(source, CompositionModel):
        weights = source.weights
    elif isinstance(source, str):
        if source != SUMMED:
            raise DataError(f"unknown prediction source '{source}'")
        weights = np.ones(n)
    else:
        weights = np.asarray(source, dtype=np.float64)
    if weights.shape != (n,):
        raise DataError(f"{weights.shape[0]} weights cannot compose {n} primitives")
    return weights


def predictions(model: Model, source: Source, bundles: Sequence[CLSBundle]) -> np.ndarray:
    """Predicted classes from the original path, the summed baseline or learned weights."""
    if not bundles:
        raise DataError("no cached bundles to evaluate")
    if isinstance(source, str) and source == ORIGINAL:
        return np.array([predict(b.original_logits) for b in bundles], dtype=np.int64)
    weights = _weights_for(source, bundles[0].num_primitives)
    return np.array(
        [predict(classify(model, compose(weights, b.primitive_cls))) for b in bundles], dtype=np.int64
    )


def reference_labels(bundles: Sequence[CLSBundle], reference: Reference) -> np.ndarray:
    if reference == Reference.ORIGINAL_PRED:
        return np.array([b.target for b in bundles], dtype=np.int64)
    missing = [b.image_id for b in bundles if b.label is None]
    if missing:
        raise DataError(f"ground-truth accuracy needs labels; '{missing[0]}' has none")
    return np.array([b.label for b in bundles], dtype=np.int64)


def accuracy(predicted: np.ndarray, reference: np.ndarray) -> float:
    if predicted.shape != reference.shape:
        raise DataError(f"{predicted.shape[0]} predictions against {reference.shape[0]} references")
    if predicted.size == 0:
        raise DataError("accuracy of an empty split is undefined")
    return float(np.mean(predicted == reference))


def eval_accuracy(model: Model, source: Source, bundles: Sequence[CLSBundle], condition: str = "") -> EvalRow:
    """Accuracy against ground truth and against the original model's predictions."""
    predicted = predictions(model, source, bundles)
    return EvalRow(
        condition=condition,
        accuracy_gt=accuracy(predicted, reference_labels(bundles, Reference.GROUND_TRUTH)),
        accuracy_relative=accuracy(predicted, reference_labels(bundles, Reference.ORIGINAL_PRED)),
        n=len(bundles),
    )


def error_breakdown(
    predictions_learned: Sequence[int], predictions_original: Sequence[int], labels: Sequence[int]
) -> ErrorReport:
    learned = np.asarray(predictions_learned)
    original = np.asarray(predictions_original)
    truth = np.asarray(labels)
    if not learned.shape == original.shape == truth.shape:
        raise DataError(
            f"prediction and label counts differ: {learned.shape[0]}, {original.shape[0]}, {truth.shape[0]}"
        )
    learned_wrong = learned != truth
    original_wrong = original != truth
    return ErrorReport(
        learned_wrong_only=int(np.sum(learned_wrong & ~original_wrong)),
        original_wrong_only=int(np.sum(original_wrong & ~learned_wrong)),
        both_wrong=int(np.sum(learned_wrong & original_wrong)),
        n=int(truth.size),
    )


def reweight_image(primitives: PrimitiveSet, weights: np.ndarray) -> np.ndarray:
    """Pixelwise sum of primitives scaled by the composition weights; not clipped."""
    eta = np.asarray(weights, dtype=np.float64)
    if eta.shape != (len(primitives),):
        raise DataError(f"{eta.shape[0] if eta.ndim else 0} weights for {len(primitives)} primitives")
    return np.tensordot(eta, np.stack(primitives.images), axes=(0, 0))


def needs_clamp(image: np.ndarray) -> bool:
    return bool(np.any(image < 0.0) or np.any(image > 1.0))


def eval_reweighted(
    model: Model,
    composition: CompositionModel,
    items: Sequence[DatasetItem],
    bundles: Sequence[CLSBundle],
    workers: int = 4,
) -> tuple[EvalRow, int]:
    """Run reweighted test images through the model; also count images that would clip on export."""
    if len(items) != len(bundles):
        raise DataError(f"{len(items)} images against {len(bundles)} cached bundles")
    basis = basis_filters(composition.basis)

    def run(item: DatasetItem) -> tuple[int, bool]:
        image = reweight_image(primitive_images(decompose(item.image, basis, composition.levels)), composition.weights)
        trace = forward(model, image)
        return predict(classify(model, cls_token(trace, len(trace) - 1))), needs_clamp(image)

    results = map_ordered(run, items, workers)
    predicted = np.array([p for p, _ in results], dtype=np.int64)
    clamped = sum(1 for _, c in results if c)
    row = EvalRow(
        condition=composition.mode.value,
        accuracy_gt=accuracy(predicted, reference_labels(bundles, Reference.GROUND_TRUTH)),
        accuracy_relative=accuracy(predicted, reference_labels(bundles, Reference.ORIGINAL_PRED)),
        n=len(items),
    )
    return row, clamped


def condition_name(basis: WaveletName, levels: int, source: str) -> str:
    return f"{basis.value}-L{levels}/{source}"
