"""
Projected SGD for composition weights.

Per-example updates in a seeded shuffled order, projection after every step,
best-iterate selection on validation relative accuracy.
"""
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from composer.composition import (
    head_projection,
    initial_weights,
    project,
    projected_loss_and_grad,
)
from core.errors import DataError, NumericalError
from core.models import (
    CLSBundle,
    CompositionModel,
    ConstraintMode,
    EpochRecord,
    TrainingConfig,
    WaveletName,
)
from vit.encoder import Model

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class _Prepared:
    """Bundles reduced to what the objective needs."""
    projections: np.ndarray  # S x n x K
    targets: list
    hard_targets: np.ndarray  # S


def _prepare(model: Model, bundles: Sequence[CLSBundle], soft_targets: bool) -> _Prepared:
    projections = np.stack([head_projection(model, b.primitive_cls) for b in bundles])
    if soft_targets:
        targets = [special.softmax(b.original_logits) for b in bundles]
    else:
        targets = [int(b.target) for b in bundles]
    hard = np.array([int(b.target) for b in bundles], dtype=np.int64)
    return _Prepared(projections, targets, hard)


def _check_bundles(model: Model, train_bundles: Sequence[CLSBundle], val_bundles: Sequence[CLSBundle]) -> int:
    if not train_bundles:
        raise DataError("training split is empty")
    n = train_bundles[0].num_primitives
    for bundle in list(train_bundles) + list(val_bundles):
        if bundle.primitive_cls.shape != (n, model.config.hidden_dim):
            raise DataError(
                f"bundle '{bundle.image_id}' has primitive matrix {bundle.primitive_cls.shape}, "
                f"expected {(n, model.config.hidden_dim)}"
            )
        if bundle.original_logits.shape != (model.config.num_classes,):
            raise DataError(f"bundle '{bundle.image_id}' logits do not match {model.config.num_classes} classes")
    return n


def mean_loss(model_bias: np.ndarray, data: _Prepared, weights: np.ndarray) -> float:
    losses = [
        projected_loss_and_grad(a, model_bias, weights, t)[0]
        for a, t in zip(data.projections, data.targets)
    ]
    return float(np.mean(losses))


def relative_accuracy(model_bias: np.ndarray, data: _Prepared, weights: np.ndarray) -> float:
    logits = np.einsum("n,snk->sk", weights, data.projections) + model_bias
    return float(np.mean(np.argmax(logits, axis=1) == data.hard_targets))


def train(
    model: Model,
    train_bundles: Sequence[CLSBundle],
    val_bundles: Sequence[CLSBundle],
    mode: ConstraintMode,
    hyper: TrainingConfig = TrainingConfig(),
    basis: WaveletName = WaveletName.HAAR,
    levels: int = 1,
    layer: int = 0,
) -> CompositionModel:
    """Learn composition weights by projected SGD against the frozen model's own predictions."""
    n = _check_bundles(model, train_bundles, val_bundles)
    if hyper.epochs < 1 or hyper.lr <= 0:
        raise DataError(f"invalid hyperparameters lr={hyper.lr}, epochs={hyper.epochs}")
    if not val_bundles:
        logger.warning("validation split is empty; selecting the best iterate on the train split")
        val_bundles = train_bundles

    bias = model.params["head.bias"]
    train_data = _prepare(model, train_bundles, hyper.soft_targets)
    val_data = _prepare(model, val_bundles, hyper.soft_targets)
    rng = np.random.default_rng(hyper.seed)

    eta = initial_weights(n, mode)
    initial_loss = mean_loss(bias, train_data, eta)
    history = [EpochRecord(0, initial_loss, relative_accuracy(bias, val_data, eta), tuple(eta.tolist()))]
    best = history[0]

    for epoch in range(1, hyper.epochs + 1):
        for index in rng.permutation(len(train_bundles)):
            try:
                _, grad = projected_loss_and_grad(
                    train_data.projections[index], bias, eta, train_data.targets[index]
                )
                eta = project(eta - hyper.lr * grad, mode)
            except NumericalError as e:
                raise NumericalError(f"training diverged at epoch {epoch}: {e}") from e
        try:
            epoch_loss = mean_loss(bias, train_data, eta)
        except NumericalError as e:
            raise NumericalError(f"training diverged at epoch {epoch}: {e}") from e
        record = EpochRecord(epoch, epoch_loss, relative_accuracy(bias, val_data, eta), tuple(eta.tolist()))
        history.append(record)
        logger.debug(
            "%s epoch %d: loss %.6f, val relative accuracy %.4f",
            mode.value, epoch, record.train_loss, record.val_relative_accuracy,
        )
        # Only iterates no worse than the starting point on the train split are eligible
        if record.train_loss <= initial_loss and record.val_relative_accuracy > best.val_relative_accuracy:
            best = record

    logger.info(
        "trained %s composition: best epoch %d, val relative accuracy %.4f",
        mode.value, best.epoch, best.val_relative_accuracy,
    )
    return CompositionModel(
        weights=np.array(best.weights, dtype=np.float64),
        mode=mode,
        basis=basis,
        levels=levels,
        layer=layer,
        training=hyper,
        history=tuple(history),
        best_epoch=best.epoch,
    )
