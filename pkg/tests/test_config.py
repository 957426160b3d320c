"""Tests for run configuration loading and validation."""

import json
from pathlib import Path

import pytest

from harness.config import ConfigError, config_from_dict, load_config

CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


def _write(tmp_path, data):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(data), encoding='utf-8')
    return path


class TestLoadConfig:
    """Test cases for load_config."""

    @pytest.mark.parametrize('name, task, arch', [
        ('denoise_ushape.json', 'denoise', 'ushape'),
        ('sr2x_columnar.json', 'sr2x', 'columnar'),
    ])
    def test_bundled_configs(self, name, task, arch):
        """Test the shipped configs load and validate."""
        cfg = load_config(str(CONFIG_DIR / name))
        assert cfg.task == task and cfg.model.arch == arch
        assert cfg.model.geometry and isinstance(cfg.model.geometry[0], tuple)

    def test_tiny_config(self, tiny_config_file, tiny_run_config):
        """Test a JSON file and the equivalent dataclasses agree."""
        assert load_config(str(tiny_config_file)) == tiny_run_config

    def test_missing_file(self, tmp_path):
        """Test a missing path is a ConfigError."""
        with pytest.raises(ConfigError):
            load_config(str(tmp_path / 'missing.json'))

    def test_invalid_json(self, tmp_path):
        """Test malformed JSON is a ConfigError."""
        path = tmp_path / 'broken.json'
        path.write_text('{"task": ', encoding='utf-8')
        with pytest.raises(ConfigError):
            load_config(str(path))


class TestConfigFromDict:
    """Test cases for config_from_dict."""

    def test_defaults(self):
        """Test an empty object gives the default denoise run."""
        cfg = config_from_dict({})
        assert cfg.task == 'denoise' and cfg.model.task == 'denoise'

    @pytest.mark.parametrize('data', [
        {'epochs': 3},
        {'dataset': {'n_train': 4, 'size': 8}},
        {'model': {'arch': 'columnar', 'depth': 4}},
        {'schedule': {'warmup': 5}},
    ])
    def test_unknown_keys_rejected(self, data):
        """Test unknown keys fail at every nesting level."""
        with pytest.raises(ConfigError):
            config_from_dict(data)

    def test_warmup_longer_than_run(self):
        """Test warmup_iters > total_iters is rejected."""
        with pytest.raises(ConfigError):
            config_from_dict({'schedule': {'warmup_iters': 10, 'total_iters': 5}})

    def test_task_mismatch(self):
        """Test the model task must match the run task."""
        with pytest.raises(ConfigError):
            config_from_dict({'task': 'sr2x', 'model': {'task': 'denoise'}})

    def test_invalid_model(self):
        """Test model validation errors surface as ConfigError."""
        with pytest.raises(ConfigError):
            config_from_dict({'model': {'arch': 'ushape', 'stages': 3}})

    def test_half_at_needs_decay(self):
        """Test milestones without the half_at decay are rejected."""
        with pytest.raises(ConfigError):
            config_from_dict({'schedule': {'half_at': [100]}})
        cfg = config_from_dict({'schedule': {'decay': 'half_at', 'half_at': [100, 200]}})
        assert cfg.schedule.half_at == (100, 200)
