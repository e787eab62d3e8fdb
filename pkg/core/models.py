"""
Core data models for WaveProbe.
Defines subbands, model configuration, CLS bundles, composition models and report rows.
"""
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional

import numpy as np

from core.errors import DataError


class WaveletName(Enum):
    HAAR = "haar"
    DB4 = "db4"


class SubbandKind(Enum):
    LL = "LL"  # Approximation, only at the deepest level
    LH = "LH"  # Row low-pass, column high-pass
    HL = "HL"  # Row high-pass, column low-pass
    HH = "HH"  # Diagonal


class ConstraintMode(Enum):
    UNCONSTRAINED = "unconstrained"
    CONIC = "conic"
    CONVEX = "convex"


class Reference(Enum):
    GROUND_TRUTH = "ground_truth"
    ORIGINAL_PRED = "original_pred"


DETAIL_KINDS = (SubbandKind.LH, SubbandKind.HL, SubbandKind.HH)


@dataclass(frozen=True)
class SubbandId:
    """One coefficient block of a decomposition."""
    level: int
    kind: SubbandKind

    def __post_init__(self):
        if self.level < 1:
            raise DataError(f"subband level must be >= 1, got {self.level}")

    @property
    def label(self) -> str:
        return f"{self.kind.value}{self.level}"


def canonical_subbands(levels: int) -> list[SubbandId]:
    """LL first, then details by descending level, LH/HL/HH within a level."""
    if levels < 1:
        raise DataError(f"levels must be >= 1, got {levels}")
    order = [SubbandId(levels, SubbandKind.LL)]
    for level in range(levels, 0, -1):
        order.extend(SubbandId(level, kind) for kind in DETAIL_KINDS)
    return order


def primitive_count(levels: int) -> int:
    return 3 * levels + 1


@dataclass(frozen=True)
class ModelConfig:
    """Architecture of the ViT encoder and classifier head."""
    image_size: int = 32
    channels: int = 3
    patch_size: int = 4
    hidden_dim: int = 48
    num_heads: int = 4
    num_layers: int = 4
    mlp_dim: int = 192
    num_classes: int = 10

    FIELDS = (
        "image_size", "channels", "patch_size", "hidden_dim",
        "num_heads", "num_layers", "mlp_dim", "num_classes",
    )

    def validate(self) -> "ModelConfig":
        for name in self.FIELDS:
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise DataError(f"model config field '{name}' must be a positive integer, got {value!r}")
        if self.image_size % self.patch_size:
            raise DataError(
                f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}"
            )
        if self.hidden_dim % self.num_heads:
            raise DataError(
                f"hidden_dim {self.hidden_dim} is not divisible by num_heads {self.num_heads}"
            )
        return self

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def num_tokens(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.hidden_dim // self.num_heads

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return (self.image_size, self.image_size, self.channels)

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(int(getattr(self, name)) for name in self.FIELDS)


@dataclass(frozen=True, eq=False)
class CLSBundle:
    """Cached CLS tokens of one image and its primitives at one encoder layer."""
    image_id: str
    primitive_cls: np.ndarray   # n x D, canonical primitive order
    original_cls: np.ndarray    # D
    original_logits: np.ndarray  # K
    target: int                 # argmax of original_logits
    label: Optional[int] = None

    @property
    def num_primitives(self) -> int:
        return int(self.primitive_cls.shape[0])


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of the projected-SGD composition learner."""
    lr: float = 0.001
    epochs: int = 100
    seed: int = 0
    soft_targets: bool = False


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_relative_accuracy: float
    weights: tuple[float, ...]


@dataclass(frozen=True, eq=False)
class CompositionModel:
    """Learned weights over primitive CLS tokens plus provenance."""
    weights: np.ndarray
    mode: ConstraintMode
    basis: WaveletName
    levels: int
    layer: int
    training: TrainingConfig = field(default_factory=TrainingConfig)
    history: tuple[EpochRecord, ...] = ()
    best_epoch: int = 0

    def __post_init__(self):
        expected = primitive_count(self.levels)
        if self.weights.shape != (expected,):
            raise DataError(
                f"composition for {self.levels} level(s) needs {expected} weights, "
                f"got shape {self.weights.shape}"
            )

    @property
    def n(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class EvalRow:
    """One line of the accuracy table."""
    condition: str
    accuracy_gt: float
    accuracy_relative: float
    n: int


@dataclass(frozen=True)
class ErrorReport:
    """Counts behind the five error percentages; percentages are exact."""
    learned_wrong_only: int
    original_wrong_only: int
    both_wrong: int
    n: int

    def _pct(self, count: int) -> Fraction:
        if self.n == 0:
            return Fraction(0)
        return Fraction(100 * count, self.n)

    @property
    def err_learned(self) -> Fraction:
        return self._pct(self.learned_wrong_only + self.both_wrong)

    @property
    def err_original(self) -> Fraction:
        return self._pct(self.original_wrong_only + self.both_wrong)

    @property
    def err_learned_not_original(self) -> Fraction:
        return self._pct(self.learned_wrong_only)

    @property
    def err_original_not_learned(self) -> Fraction:
        return self._pct(self.original_wrong_only)

    @property
    def err_both(self) -> Fraction:
        return self._pct(self.both_wrong)


# Helper functions for serialization
def eval_row_to_dict(row: EvalRow) -> dict:
    """Convert EvalRow to a CSV/JSON-ready dictionary."""
    return {
        "condition": row.condition,
        "acc_gt": f"{row.accuracy_gt:.6f}",
        "acc_relative": f"{row.accuracy_relative:.6f}",
        "n": row.n,
    }


def error_report_to_dict(report: ErrorReport, condition: str = "") -> dict:
    """Convert ErrorReport to a CSV-ready dictionary (percentages rounded for display)."""
    return {
        "condition": condition,
        "err_learned": f"{float(report.err_learned):.4f}",
        "err_org": f"{float(report.err_original):.4f}",
        "err_learned_not_org": f"{float(report.err_learned_not_original):.4f}",
        "err_org_not_learned": f"{float(report.err_original_not_learned):.4f}",
        "err_both": f"{float(report.err_both):.4f}",
        "n": report.n,
    }


def model_config_to_dict(config: ModelConfig) -> dict:
    return {name: int(getattr(config, name)) for name in ModelConfig.FIELDS}
