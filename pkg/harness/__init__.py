"""Runnable surface: configs, synthetic data, training, metrics and checkpoints."""

import engine  # noqa: F401  sets BLAS thread caps before numpy loads
from harness.config import RunConfig, DatasetSpec, OptimizerConfig, ScheduleConfig, OutputConfig, load_config, config_from_dict, ConfigError
from harness.data import synth_dataset
from harness.schedule import warmup_lr
from harness.optim import AdamW
from harness.metrics import psnr, ssim
from harness.checkpoint import save_checkpoint, load_checkpoint, check_checkpoint_matches, CheckpointFormatError
from harness.padding import pad_reflect_to_geometry, crop
from harness.train import train, evaluate, MetricsRow, DivergenceError

__all__ = [
    'RunConfig',
    'DatasetSpec',
    'OptimizerConfig',
    'ScheduleConfig',
    'OutputConfig',
    'load_config',
    'config_from_dict',
    'synth_dataset',
    'warmup_lr',
    'AdamW',
    'psnr',
    'ssim',
    'save_checkpoint',
    'load_checkpoint',
    'check_checkpoint_matches',
    'pad_reflect_to_geometry',
    'crop',
    'train',
    'evaluate',
    'MetricsRow',
    'ConfigError',
    'CheckpointFormatError',
    'DivergenceError',
]
