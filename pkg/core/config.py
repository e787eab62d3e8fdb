"""
Experiment configuration for WaveProbe.
A flat YAML mapping, optionally overridden by WAVEPROBE_* environment variables.
"""
import logging
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Optional, Union

import yaml
from dotenv import load_dotenv

from core.errors import UsageError
from core.models import ConstraintMode, ModelConfig, TrainingConfig, WaveletName

ENV_PREFIX = "WAVEPROBE_"
MAX_LEVELS = 2
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything `run` needs; every field is a flat config key."""
    # Model: either a weight file or a seeded toy model
    model_path: Optional[str] = None
    model_seed: int = 0
    image_size: int = 32
    channels: int = 3
    patch_size: int = 4
    hidden_dim: int = 48
    num_heads: int = 4
    num_layers: int = 4
    mlp_dim: int = 192
    num_classes: int = 10

    # Dataset: either a manifest or a synthetic set
    dataset_manifest: Optional[str] = None
    synthetic_per_class: int = 20
    synthetic_seed: int = 7
    split_seed: int = 1

    # Decomposition and composition
    basis: str = "haar"
    levels: int = 1
    layer: Optional[int] = None
    modes: tuple[str, ...] = ("unconstrained", "conic", "convex")
    lr: float = 0.001
    epochs: int = 100
    train_seed: int = 0
    soft_targets: bool = False

    # Distortions
    noise_sigma: float = 0.1
    noise_seed: int = 11
    compress_quality: int = 50
    distortion_manifest: Optional[str] = None

    # Reports
    cka_samples: int = 10
    ssim_image_index: int = 0
    workers: int = 4
    output_dir: str = "./output"
    log_level: str = "INFO"
    log_file: Optional[str] = None

    @property
    def model_config(self) -> ModelConfig:
        return ModelConfig(
            image_size=self.image_size,
            channels=self.channels,
            patch_size=self.patch_size,
            hidden_dim=self.hidden_dim,
            num_heads=self.num_heads,
            num_layers=self.num_layers,
            mlp_dim=self.mlp_dim,
            num_classes=self.num_classes,
        )

    @property
    def wavelet(self) -> WaveletName:
        return WaveletName(self.basis)

    @property
    def constraint_modes(self) -> list[ConstraintMode]:
        return [ConstraintMode(m) for m in self.modes]

    @property
    def resolved_layer(self) -> int:
        return self.layer if self.layer is not None else self.num_layers

    @property
    def training(self) -> TrainingConfig:
        return TrainingConfig(
            lr=self.lr, epochs=self.epochs, seed=self.train_seed, soft_targets=self.soft_targets
        )

    def validate(self) -> "ExperimentConfig":
        if self.basis not in {w.value for w in WaveletName}:
            raise UsageError(f"config key 'basis': unknown wavelet '{self.basis}' (use haar or db4)")
        if not 1 <= self.levels <= MAX_LEVELS:
            raise UsageError(f"config key 'levels': must be in [1, {MAX_LEVELS}], got {self.levels}")
        if not self.modes:
            raise UsageError("config key 'modes': at least one constraint mode is required")
        for mode in self.modes:
            if mode not in {m.value for m in ConstraintMode}:
                raise UsageError(f"config key 'modes': unknown mode '{mode}'")
        if not 1 <= self.resolved_layer <= self.num_layers:
            raise UsageError(f"config key 'layer': must be in [1, {self.num_layers}], got {self.layer}")
        if self.lr <= 0 or self.epochs < 1:
            raise UsageError("config keys 'lr' and 'epochs' must be positive")
        if self.noise_sigma < 0:
            raise UsageError(f"config key 'noise_sigma': must be >= 0, got {self.noise_sigma}")
        if not 1 <= self.compress_quality <= 100:
            raise UsageError(f"config key 'compress_quality': must be in [1, 100], got {self.compress_quality}")
        if self.workers < 1 or self.cka_samples < 1 or self.synthetic_per_class < 1:
            raise UsageError("config keys 'workers', 'cka_samples' and 'synthetic_per_class' must be >= 1")
        return self


_FIELD_TYPES = {f.name: f for f in fields(ExperimentConfig)}


def _coerce(key: str, value: Any) -> Any:
    """Coerce a raw YAML/env value to the declared field type."""
    default = _FIELD_TYPES[key].default
    if value is None:
        return None
    try:
        if key == "modes":
            if isinstance(value, str):
                value = [v.strip() for v in value.split(",") if v.strip()]
            return tuple(str(v) for v in value)
        if isinstance(default, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes", "on")
            return bool(value)
        if isinstance(default, int) or key == "layer":
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as e:
        raise UsageError(f"config key '{key}': cannot parse {value!r} ({e})") from e


def config_from_mapping(raw: dict) -> ExperimentConfig:
    unknown = sorted(set(raw) - set(_FIELD_TYPES))
    if unknown:
        raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
    values = {key: _coerce(key, value) for key, value in raw.items()}
    return ExperimentConfig(**values).validate()


def load_config(path: Optional[Union[str, Path]] = None, use_env: bool = True) -> ExperimentConfig:
    """Load a YAML config file (or defaults) and apply environment overrides."""
    raw: dict = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        with open(path) as f:
            loaded = yaml.safe_load(f)
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {path} must hold a flat key-value mapping")
        raw.update(loaded)
    config = config_from_mapping(raw)
    if use_env:
        config = apply_env_overrides(config)
    return config


def apply_env_overrides(config: ExperimentConfig) -> ExperimentConfig:
    """Override config keys from WAVEPROBE_<KEY> environment variables (and a .env file)."""
    load_dotenv()
    overrides = {}
    for key in _FIELD_TYPES:
        env_value = os.environ.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            overrides[key] = _coerce(key, env_value)
    if not overrides:
        return config
    return replace(config, **overrides).validate()


def config_to_dict(config: ExperimentConfig) -> dict:
    """Resolved configuration, as recorded in every run manifest."""
    out = {}
    for key in _FIELD_TYPES:
        value = getattr(config, key)
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


def configure_logging(level: str = "INFO", file: Optional[str] = None) -> None:
    """Configure root logging with the project format."""
    handlers: list[logging.Handler] = [logging.StreamHandler()]
    if file:
        handlers.append(logging.FileHandler(file))
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
