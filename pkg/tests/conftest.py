"""Pytest configuration file for test fixtures."""

import json
from dataclasses import replace

import engine  # noqa: F401  sets BLAS thread caps before numpy loads
import numpy as np
import pytest

from fractal.fifm import FifmConfig, layer_param_shapes
from fractal.init import initialize
from fractal.models import ModelConfig
from harness.config import DatasetSpec, OutputConfig, RunConfig, ScheduleConfig


@pytest.fixture
def rng():
    """Seeded generator for float64 oracle inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_layer_cfg():
    """B=1, H=W=4, C=4, p=2, s=2, h=2 layer configuration."""
    return FifmConfig(channels=4, window=2, group=2, heads=2).validate()


@pytest.fixture
def tiny_layer_params(tiny_layer_cfg):
    """Float64 Kaiming-initialized parameters for the tiny layer."""
    return initialize(layer_param_shapes(tiny_layer_cfg), 'kaiming_fan_in', 7, dtype=np.float64)


@pytest.fixture
def tiny_run_config(tmp_path):
    """A few-iteration columnar denoise run writing into a temporary directory."""
    model = ModelConfig(arch='columnar', channels=8, stages=1, layers_per_stage=1, geometry=((2, 2),))
    return RunConfig(
        task='denoise',
        noise_sigma=0.1,
        dataset=DatasetSpec(n_train=6, n_val=2, image_size=8, seed=3),
        model=model,
        schedule=ScheduleConfig(warmup_iters=2, total_iters=4),
        batch_size=2,
        eval_interval=2,
        output=OutputConfig(dir=str(tmp_path / 'run')),
        seed=5,
    )


@pytest.fixture
def tiny_config_file(tmp_path):
    """JSON config file matching ``tiny_run_config``."""
    data = {
        'task': 'denoise',
        'noise_sigma': 0.1,
        'dataset': {'n_train': 6, 'n_val': 2, 'image_size': 8, 'seed': 3},
        'model': {'arch': 'columnar', 'channels': 8, 'stages': 1, 'layers_per_stage': 1, 'geometry': [[2, 2]]},
        'schedule': {'warmup_iters': 2, 'total_iters': 4},
        'batch_size': 2,
        'eval_interval': 2,
        'output': {'dir': str(tmp_path / 'run')},
        'seed': 5,
    }
    path = tmp_path / 'tiny.json'
    path.write_text(json.dumps(data), encoding='utf-8')
    return path


@pytest.fixture
def redirect_output(tmp_path):
    """Point a RunConfig's outputs into ``tmp_path``."""
    def _redirect(cfg: RunConfig, name: str = 'run') -> RunConfig:
        return replace(cfg, output=replace(cfg.output, dir=str(tmp_path / name)))
    return _redirect
