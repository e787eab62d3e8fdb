"""
Human-readable text records for CompositionModel (YAML).
Floats are written with 17 significant digits so weights round-trip exactly.
"""
from pathlib import Path
from typing import Union

import numpy as np
import yaml

from core.errors import DataError
from core.models import (
    CompositionModel,
    ConstraintMode,
    EpochRecord,
    TrainingConfig,
    WaveletName,
    primitive_count,
)

RECORD_FIELDS = ("mode", "basis", "levels", "layer", "n", "weights", "hyperparameters", "seed", "best_epoch", "history")


class _RecordDumper(yaml.SafeDumper):
    pass


def _represent_float(dumper: yaml.SafeDumper, value: float) -> yaml.ScalarNode:
    text = format(value, ".17g")
    if text.lstrip("-").isdigit():
        text += ".0"
    return dumper.represent_scalar("tag:yaml.org,2002:float", text)


_RecordDumper.add_representer(float, _represent_float)


def composition_to_dict(model: CompositionModel) -> dict:
    return {
        "mode": model.mode.value,
        "basis": model.basis.value,
        "levels": model.levels,
        "layer": model.layer,
        "n": model.n,
        "weights": [float(w) for w in model.weights],
        "hyperparameters": {
            "lr": float(model.training.lr),
            "epochs": int(model.training.epochs),
            "soft_targets": bool(model.training.soft_targets),
        },
        "seed": int(model.training.seed),
        "best_epoch": int(model.best_epoch),
        "history": [
            {
                "epoch": r.epoch,
                "train_loss": float(r.train_loss),
                "val_relative_accuracy": float(r.val_relative_accuracy),
                "weights": [float(w) for w in r.weights],
            }
            for r in model.history
        ],
    }


def dump_composition(model: CompositionModel) -> str:
    return yaml.dump(
        composition_to_dict(model), Dumper=_RecordDumper, sort_keys=False, default_flow_style=None
    )


def load_composition(text: str) -> CompositionModel:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise DataError(f"composition record is not valid YAML: {e}") from e
    if not isinstance(raw, dict):
        raise DataError("composition record must be a mapping")
    missing = [key for key in RECORD_FIELDS if key not in raw]
    if missing:
        raise DataError(f"composition record lacks field(s): {', '.join(missing)}")
    try:
        levels = int(raw["levels"])
        weights = np.array([float(w) for w in raw["weights"]], dtype=np.float64)
        if int(raw["n"]) != weights.size or weights.size != primitive_count(levels):
            raise DataError(
                f"composition record has n={raw['n']} and {weights.size} weights for {levels} level(s)"
            )
        hyper = raw["hyperparameters"]
        training = TrainingConfig(
            lr=float(hyper["lr"]),
            epochs=int(hyper["epochs"]),
            seed=int(raw["seed"]),
            soft_targets=bool(hyper.get("soft_targets", False)),
        )
        history = tuple(
            EpochRecord(
                epoch=int(r["epoch"]),
                train_loss=float(r["train_loss"]),
                val_relative_accuracy=float(r["val_relative_accuracy"]),
                weights=tuple(float(w) for w in r["weights"]),
            )
            for r in raw["history"]
        )
        return CompositionModel(
            weights=weights,
            mode=ConstraintMode(raw["mode"]),
            basis=WaveletName(raw["basis"]),
            levels=levels,
            layer=int(raw["layer"]),
            training=training,
            history=history,
            best_epoch=int(raw["best_epoch"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, DataError):
            raise
        raise DataError(f"malformed composition record: {e}") from e


def write_composition(path: Union[str, Path], model: CompositionModel) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dump_composition(model))
    return path


def read_composition(path: Union[str, Path]) -> CompositionModel:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"composition record not found: {path}")
    return load_composition(path.read_text())
