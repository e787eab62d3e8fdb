"""
Shared fixtures: a toy architecture small enough to run in milliseconds but
with (N - 1) * D = W * H * C, so SSIM maps on encoder outputs are defined.
"""
import os

import numpy as np
import pytest

from core.config import ExperimentConfig
from core.models import ModelConfig
from vit.encoder import init_random
from workflows.datasets import generate_synthetic_dataset

TOY_ARCH = {
    "image_size": 16,
    "channels": 3,
    "patch_size": 4,
    "hidden_dim": 48,
    "num_heads": 4,
    "num_layers": 2,
    "mlp_dim": 64,
    "num_classes": 3,
}


@pytest.fixture
def toy_config() -> ModelConfig:
    return ModelConfig(**TOY_ARCH)


@pytest.fixture
def toy_model(toy_config):
    return init_random(toy_config, seed=42)


@pytest.fixture
def tiny_config() -> ModelConfig:
    """Hidden width 4, so composer tests can plant any head they like."""
    return ModelConfig(
        image_size=4, channels=1, patch_size=2, hidden_dim=4,
        num_heads=2, num_layers=1, mlp_dim=4, num_classes=3,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_dataset():
    return generate_synthetic_dataset(num_classes=3, per_class=5, size=16, seed=7)


@pytest.fixture
def experiment_config(tmp_path) -> ExperimentConfig:
    return ExperimentConfig(
        **TOY_ARCH,
        synthetic_per_class=10,
        epochs=3,
        cka_samples=2,
        workers=2,
        output_dir=str(tmp_path / "output"),
    ).validate()


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    """Keep WAVEPROBE_* variables from the calling shell out of every test."""
    for key in list(os.environ):
        if key.startswith("WAVEPROBE_"):
            monkeypatch.delenv(key)
