"""Training loop, evaluation and the metrics CSV."""

import asyncio
import csv
import logging
import math
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Any, Optional

import numpy as np

from engine.ops import crop_spatial
from engine.tensor import Tensor, backward, no_grad
from fractal.models import ModelConfig, build, flatten_params, forward, patch_multiple
from harness.checkpoint import save_checkpoint
from harness.config import RunConfig
from harness.metrics import psnr, ssim
from harness.optim import AdamW, global_grad_norm
from harness.padding import crop, pad_reflect_to_geometry
from harness.schedule import warmup_lr
from utils.async_prefetch import synthesize_splits

# Configure logging
logger = logging.getLogger(__name__)

SR_SCALE = 2
EVAL_BATCH = 16


# Custom Exceptions
class DivergenceError(Exception):
    """Raised when the training loss stops being finite."""

    def __init__(self, iteration: int, loss: float) -> None:
        super().__init__(f"Non-finite loss {loss} at iteration {iteration}")
        self.iteration = iteration
        self.loss = loss


@dataclass(frozen=True)
class MetricsRow:
    iter: int
    train_loss: float
    val_psnr: float
    val_ssim: float
    grad_norm: float
    lr: float


METRICS_HEADER = tuple(f.name for f in fields(MetricsRow))


@dataclass
class TrainResult:
    params: dict
    final_row: Optional[MetricsRow]
    metrics_path: Path
    checkpoint_path: Path


@dataclass(frozen=True)
class EvalResult:
    val_psnr: float
    val_ssim: float
    input_psnr: float
    n_val: int


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    return (pred - target).abs().mean()


def _scale(cfg: ModelConfig) -> int:
    return SR_SCALE if cfg.task == 'sr2x' else 1


def predict(params: dict, cfg: ModelConfig, inputs: np.ndarray, batch_size: int = EVAL_BATCH) -> np.ndarray:
    """Run the model over ``inputs`` in batches, padding to the tiling multiple and cropping back."""
    multiple = patch_multiple(cfg)
    outputs = []
    with no_grad():
        for start in range(0, inputs.shape[0], batch_size):
            padded, original = pad_reflect_to_geometry(inputs[start:start + batch_size], multiple)
            restored = forward(params, Tensor(padded), cfg).data
            outputs.append(crop(restored, original, _scale(cfg)))
    return np.concatenate(outputs, axis=0)


def baseline_prediction(inputs: np.ndarray, task: str) -> np.ndarray:
    """The degraded input at target resolution: as-is for denoise, nearest x2 upsample for sr2x."""
    if task == 'sr2x':
        return inputs.repeat(SR_SCALE, axis=1).repeat(SR_SCALE, axis=2)
    return inputs


def evaluate(params: dict, cfg: ModelConfig, inputs: np.ndarray, targets: np.ndarray) -> EvalResult:
    """
    Mean per-image PSNR/SSIM of clipped predictions, plus the input baseline PSNR.
    """
    restored = np.clip(predict(params, cfg, inputs), 0.0, 1.0)
    baseline = baseline_prediction(inputs, cfg.task)
    n = inputs.shape[0]
    result = EvalResult(
        val_psnr=float(np.mean([psnr(restored[i], targets[i]) for i in range(n)])),
        val_ssim=float(np.mean([ssim(restored[i], targets[i]) for i in range(n)])),
        input_psnr=float(np.mean([psnr(baseline[i], targets[i]) for i in range(n)])),
        n_val=n,
    )
    logger.debug(f"Eval: {result}")
    return result


def load_splits(cfg: RunConfig) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Synthesize the train and val splits concurrently."""
    spec = cfg.dataset
    return asyncio.run(synthesize_splits(
        {'train': spec.n_train, 'val': spec.n_val},
        spec.image_size,
        cfg.task,
        cfg.noise_sigma,
        seed=spec.seed,
        channels=cfg.model.image_channels,
    ))


def _format_row(row: MetricsRow) -> list[str]:
    return [str(value) if isinstance(value, int) else repr(float(value)) for value in astuple(row)]


def train(cfg: RunConfig, splits: Optional[dict[str, Any]] = None) -> TrainResult:
    """
    Train ``cfg.model`` on synthetic data under L1 loss with AdamW and warmup.

    A metrics row is appended every ``eval_interval`` iterations and after the
    last one; the checkpoint is written at the end.

    Args:
        cfg: Run configuration
        splits: Precomputed ``{'train': (x, y), 'val': (x, y)}``; synthesized when omitted

    Returns:
        TrainResult with the trained parameters and the final metrics row

    Raises:
        DivergenceError: If the loss becomes NaN or infinite
    """
    splits = splits or load_splits(cfg)
    train_x, train_y = splits['train']
    val_x, val_y = splits['val']
    model_cfg = cfg.model
    multiple = patch_multiple(model_cfg)
    scale = _scale(model_cfg)

    params = build(model_cfg, seed=cfg.seed)
    opt = cfg.optimizer
    optimizer = AdamW(flatten_params(params), beta1=opt.beta1, beta2=opt.beta2, eps=opt.eps,
                      weight_decay=opt.weight_decay)
    schedule = cfg.schedule
    half_at = schedule.half_at if schedule.decay == 'half_at' else ()
    sampler = np.random.default_rng([cfg.seed, 2])

    metrics_path = cfg.output.metrics_path
    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    logger.info(f"Training {model_cfg.arch}/{cfg.task} for {schedule.total_iters} iterations")

    final_row = None
    with open(metrics_path, 'w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(METRICS_HEADER)
        for iteration in range(schedule.total_iters):
            batch = sampler.choice(train_x.shape[0], size=cfg.batch_size,
                                   replace=train_x.shape[0] < cfg.batch_size)
            inputs, original = pad_reflect_to_geometry(train_x[batch], multiple)
            target = Tensor(train_y[batch])
            pred = forward(params, Tensor(inputs), model_cfg)
            if pred.shape != target.shape:
                pred = crop_spatial(pred, original[0] * scale, original[1] * scale)
            loss = l1_loss(pred, target)
            loss_value = loss.item()
            if not math.isfinite(loss_value):
                logger.error(f"Loss diverged at iteration {iteration}: {loss_value}")
                raise DivergenceError(iteration, loss_value)

            grads = backward(loss)
            grad_norm = global_grad_norm(grads)
            lr = warmup_lr(iteration, opt.lr, schedule.warmup_iters, half_at)
            optimizer.step(grads, lr)

            if (iteration + 1) % cfg.eval_interval == 0 or iteration == schedule.total_iters - 1:
                result = evaluate(params, model_cfg, val_x, val_y)
                final_row = MetricsRow(iteration, loss_value, result.val_psnr, result.val_ssim, grad_norm, lr)
                writer.writerow(_format_row(final_row))
                handle.flush()
                logger.info(
                    f"iter {iteration}: loss {loss_value:.5f}, val PSNR {result.val_psnr:.2f} dB, "
                    f"SSIM {result.val_ssim:.4f}, lr {lr:.2e}"
                )

    checkpoint_path = save_checkpoint(params, str(cfg.output.checkpoint_path))
    return TrainResult(params=params, final_row=final_row, metrics_path=metrics_path,
                       checkpoint_path=checkpoint_path)

