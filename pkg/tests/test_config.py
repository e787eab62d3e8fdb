"""Tests for YAML configuration, environment overrides and logging setup."""
import logging
from pathlib import Path

import pytest
import yaml

from core.config import (
    ExperimentConfig,
    config_from_mapping,
    config_to_dict,
    configure_logging,
    load_config,
)
from core.errors import UsageError
from core.models import ConstraintMode, WaveletName

EXAMPLE_CONFIG = Path(__file__).resolve().parents[1] / "config" / "config.example.yaml"


def write_yaml(path: Path, values) -> Path:
    path.write_text(yaml.safe_dump(values))
    return path


class TestLoadConfig:
    def test_defaults(self):
        config = load_config(use_env=False)
        assert config == ExperimentConfig()
        assert config.wavelet == WaveletName.HAAR
        assert config.resolved_layer == 4
        assert config.constraint_modes == list(ConstraintMode)
        assert config.training.lr == 0.001

    def test_example_file_is_valid(self):
        assert load_config(EXAMPLE_CONFIG, use_env=False) == ExperimentConfig()

    def test_yaml_overrides(self, tmp_path):
        path = write_yaml(tmp_path / "c.yaml", {"basis": "db4", "levels": 2, "layer": 2, "modes": ["convex"]})
        config = load_config(path, use_env=False)
        assert config.wavelet == WaveletName.DB4
        assert config.levels == 2
        assert config.resolved_layer == 2
        assert config.modes == ("convex",)

    def test_unknown_key(self):
        with pytest.raises(UsageError, match="unknown config key"):
            config_from_mapping({"learning_rate": 0.1})

    @pytest.mark.parametrize(
        "raw,key",
        [
            ({"levels": 3}, "levels"),
            ({"basis": "sym4"}, "basis"),
            ({"layer": 5}, "layer"),
            ({"modes": ["ridge"]}, "modes"),
            ({"compress_quality": 0}, "compress_quality"),
            ({"epochs": "many"}, "epochs"),
        ],
    )
    def test_invalid_values_name_the_key(self, raw, key):
        with pytest.raises(UsageError, match=f"'{key}'"):
            config_from_mapping(raw)

    def test_missing_file(self, tmp_path):
        with pytest.raises(UsageError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_non_mapping_file(self, tmp_path):
        path = tmp_path / "list.yaml"
        path.write_text("- a\n- b\n")
        with pytest.raises(UsageError, match="flat key-value mapping"):
            load_config(path)


class TestEnvOverrides:
    def test_environment_wins(self, tmp_path, monkeypatch):
        monkeypatch.chdir(tmp_path)
        path = write_yaml(tmp_path / "c.yaml", {"epochs": 20})
        monkeypatch.setenv("WAVEPROBE_MODES", "conic, convex")
        monkeypatch.setenv("WAVEPROBE_EPOCHS", "5")
        monkeypatch.setenv("WAVEPROBE_SOFT_TARGETS", "true")
        config = load_config(path)
        assert config.modes == ("conic", "convex")
        assert config.epochs == 5
        assert config.soft_targets is True

    def test_invalid_override(self, monkeypatch):
        monkeypatch.setenv("WAVEPROBE_LEVELS", "4")
        with pytest.raises(UsageError, match="levels"):
            load_config()

    def test_env_ignored_when_disabled(self, monkeypatch):
        monkeypatch.setenv("WAVEPROBE_EPOCHS", "5")
        assert load_config(use_env=False).epochs == 100


def test_config_to_dict_is_yaml_safe():
    resolved = config_to_dict(ExperimentConfig())
    assert resolved["modes"] == ["unconstrained", "conic", "convex"]
    assert config_from_mapping(yaml.safe_load(yaml.safe_dump(resolved))) == ExperimentConfig()


def test_configure_logging(tmp_path):
    log_file = tmp_path / "run.log"
    configure_logging("debug", str(log_file))
    logging.getLogger("waveprobe.test").debug("hello from the test")
    for handler in logging.getLogger().handlers:
        handler.flush()
    assert "hello from the test" in log_file.read_text()
    configure_logging("INFO")
    assert logging.getLogger().level == logging.INFO
