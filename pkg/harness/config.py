"""Run configuration: frozen dataclasses loaded from UTF-8 JSON."""

import json
import logging
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from fractal.models import ModelConfig, ModelConfigError

# Configure logging
logger = logging.getLogger(__name__)

TASKS = ('denoise', 'sr2x')
LOSSES = ('l1',)
DECAYS = ('constant', 'half_at')


# Custom Exceptions
class ConfigError(Exception):
    """Raised when a run configuration is malformed or inconsistent."""
    pass


@dataclass(frozen=True)
class DatasetSpec:
    n_train: int = 64
    n_val: int = 16
    image_size: int = 16
    seed: int = 0


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.99
    eps: float = 1e-8
    weight_decay: float = 0.0


@dataclass(frozen=True)
class ScheduleConfig:
    warmup_iters: int = 50
    total_iters: int = 500
    decay: str = 'constant'
    half_at: tuple = ()


@dataclass(frozen=True)
class OutputConfig:
    dir: str = 'runs/default'
    metrics: str = 'metrics.csv'
    checkpoint: str = 'model.fir'

    @property
    def metrics_path(self) -> Path:
        return Path(self.dir) / self.metrics

    @property
    def checkpoint_path(self) -> Path:
        return Path(self.dir) / self.checkpoint


@dataclass(frozen=True)
class RunConfig:
    """One training/evaluation run. ``noise_sigma`` is in [0, 1] gray-level units."""

    task: str = 'denoise'
    noise_sigma: float = 25 / 255
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    batch_size: int = 8
    loss: str = 'l1'
    eval_interval: int = 50
    output: OutputConfig = field(default_factory=OutputConfig)
    seed: int = 0


def _check_keys(section: str, data: Any, cls: type) -> dict:
    if not isinstance(data, dict):
        logger.error(f"Config section '{section}' is not an object: {type(data)}")
        raise ConfigError(f"Section '{section}' must be a JSON object, got {type(data).__name__}")
    allowed = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - allowed)
    if unknown:
        logger.error(f"Unknown keys in '{section}': {unknown}")
        raise ConfigError(f"Unknown keys in '{section}': {', '.join(unknown)}")
    return data


def _section(section: str, data: Any, cls: type) -> Any:
    try:
        return cls(**_check_keys(section, data, cls))
    except TypeError as e:
        raise ConfigError(f"Section '{section}': {e}") from e


def _model_config(data: Any, task: str) -> ModelConfig:
    data = dict(_check_keys('model', data, ModelConfig))
    data.setdefault('task', task)
    if data['task'] != task:
        raise ConfigError(f"model.task '{data['task']}' does not match run task '{task}'")
    if 'geometry' in data:
        data['geometry'] = tuple(tuple(pair) for pair in data['geometry'])
    try:
        return ModelConfig(**data).validate()
    except ModelConfigError as e:
        logger.error(f"Invalid model section: {e}")
        raise ConfigError(f"Section 'model': {e}") from e


def validate_run_config(cfg: RunConfig) -> bool:
    """
    Check cross-field invariants.

    Returns:
        True if valid

    Raises:
        ConfigError: If any invariant is violated
    """
    problems = []
    if cfg.task not in TASKS:
        problems.append(f"task must be one of {TASKS}, got {cfg.task!r}")
    if cfg.loss not in LOSSES:
        problems.append(f"loss must be one of {LOSSES}, got {cfg.loss!r}")
    if cfg.noise_sigma < 0:
        problems.append(f"noise_sigma must be >= 0, got {cfg.noise_sigma}")
    if min(cfg.batch_size, cfg.eval_interval, cfg.dataset.n_train, cfg.dataset.n_val, cfg.dataset.image_size) < 1:
        problems.append("batch_size, eval_interval and dataset counts must be >= 1")
    if cfg.task == 'sr2x' and cfg.dataset.image_size % 2:
        problems.append(f"sr2x needs an even image_size, got {cfg.dataset.image_size}")
    schedule = cfg.schedule
    if schedule.total_iters < 0 or schedule.warmup_iters < 0:
        problems.append("warmup_iters and total_iters must be >= 0")
    if schedule.warmup_iters > schedule.total_iters:
        problems.append(f"warmup_iters={schedule.warmup_iters} exceeds total_iters={schedule.total_iters}")
    if schedule.decay not in DECAYS:
        problems.append(f"decay must be one of {DECAYS}, got {schedule.decay!r}")
    if schedule.decay == 'constant' and schedule.half_at:
        problems.append("half_at milestones require decay 'half_at'")
    if cfg.optimizer.lr <= 0 or cfg.optimizer.eps <= 0 or cfg.optimizer.weight_decay < 0:
        problems.append("lr and eps must be positive, weight_decay non-negative")
    if not (0 <= cfg.optimizer.beta1 < 1 and 0 <= cfg.optimizer.beta2 < 1):
        problems.append("beta1 and beta2 must lie in [0, 1)")
    if cfg.model.task != cfg.task:
        problems.append(f"model.task '{cfg.model.task}' does not match run task '{cfg.task}'")

    if problems:
        for problem in problems:
            logger.error(f"Config invalid: {problem}")
        raise ConfigError("; ".join(problems))
    return True


def config_from_dict(data: Any) -> RunConfig:
    """Build and validate a RunConfig from parsed JSON, rejecting unknown keys at every level."""
    data = dict(_check_keys('run', data, RunConfig))
    task = data.get('task', RunConfig.task)
    sections = {
        'dataset': DatasetSpec,
        'optimizer': OptimizerConfig,
        'output': OutputConfig,
    }
    for name, cls in sections.items():
        if name in data:
            data[name] = _section(name, data[name], cls)
    if 'schedule' in data:
        schedule = dict(_check_keys('schedule', data['schedule'], ScheduleConfig))
        schedule['half_at'] = tuple(schedule.get('half_at', ()))
        data['schedule'] = _section('schedule', schedule, ScheduleConfig)
    data['model'] = _model_config(data.get('model', {}), task)

    cfg = RunConfig(**data)
    validate_run_config(cfg)
    return cfg


def load_config(path: str) -> RunConfig:
    """
    Load a RunConfig from a UTF-8 JSON file.

    Raises:
        ConfigError: If the file is missing, is not valid JSON, or fails validation
    """
    file_path = Path(path)
    if not file_path.exists():
        logger.error(f"Config file not found: {path}")
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = json.loads(file_path.read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        logger.error(f"Config {path} is not valid JSON: {e}")
        raise ConfigError(f"Config {path} is not valid JSON: {e}") from e
    cfg = config_from_dict(data)
    logger.info(f"Loaded {cfg.task} config from {path}")
    return cfg
