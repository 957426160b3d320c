"""Tests for the training loop and evaluation."""

import csv
import importlib
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from engine.tensor import Tensor
from fractal.models import build
from harness.checkpoint import encode_checkpoint, load_checkpoint
from harness.config import ScheduleConfig, load_config
from harness.data import synth_dataset
from harness.train import METRICS_HEADER, DivergenceError, baseline_prediction, evaluate, train

# harness re-exports the train function under the submodule name
train_module = importlib.import_module('harness.train')
CONFIG_DIR = Path(__file__).resolve().parent.parent / 'configs'


def _read_rows(path):
    with open(path, newline='', encoding='utf-8') as handle:
        return list(csv.reader(handle))


class TestTrain:
    """Test cases for train."""

    def test_zero_iterations(self, tiny_run_config):
        """Test total_iters=0 writes the header only and checkpoints the initial weights."""
        cfg = replace(tiny_run_config, schedule=ScheduleConfig(warmup_iters=0, total_iters=0))
        result = train(cfg)
        assert _read_rows(result.metrics_path) == [list(METRICS_HEADER)]
        assert result.final_row is None
        initial = build(cfg.model, seed=cfg.seed)
        assert result.checkpoint_path.read_bytes() == encode_checkpoint(initial)

    def test_rows_and_columns(self, tiny_run_config):
        """Test one row per eval interval with the documented columns."""
        result = train(tiny_run_config)
        rows = _read_rows(result.metrics_path)
        assert rows[0] == ['iter', 'train_loss', 'val_psnr', 'val_ssim', 'grad_norm', 'lr']
        assert [row[0] for row in rows[1:]] == ['1', '3']
        assert result.final_row.iter == 3
        assert all(np.isfinite(float(value)) for row in rows[1:] for value in row)

    def test_same_seed_is_byte_identical(self, tiny_run_config, redirect_output):
        """Test two runs with one seed produce identical CSV and checkpoint bytes."""
        first = train(redirect_output(tiny_run_config, 'first'))
        second = train(redirect_output(tiny_run_config, 'second'))
        assert first.metrics_path.read_bytes() == second.metrics_path.read_bytes()
        assert first.checkpoint_path.read_bytes() == second.checkpoint_path.read_bytes()

    def test_checkpoint_reloads_for_eval(self, tiny_run_config):
        """Test the saved checkpoint evaluates like the in-memory parameters."""
        result = train(tiny_run_config)
        inputs, targets = synth_dataset(2, 8, 'denoise', 0.1, seed=3, split='val')
        in_memory = evaluate(result.params, tiny_run_config.model, inputs, targets)
        reloaded = evaluate(load_checkpoint(str(result.checkpoint_path)), tiny_run_config.model, inputs, targets)
        assert in_memory == reloaded

    def test_divergence_raises(self, tiny_run_config, monkeypatch):
        """Test a non-finite loss stops training with DivergenceError."""
        monkeypatch.setattr(train_module, 'l1_loss', lambda pred, target: Tensor(np.array(np.nan)))
        with pytest.raises(DivergenceError) as exc_info:
            train(tiny_run_config)
        assert exc_info.value.iteration == 0
        assert not tiny_run_config.output.checkpoint_path.exists()

    @pytest.mark.parametrize('task', ['denoise', 'sr2x'])
    def test_untrained_model_scores_input_baseline(self, tiny_run_config, task):
        """Test a freshly built model matches the noisy or upsampled input PSNR before training."""
        cfg = replace(tiny_run_config, task=task, model=replace(tiny_run_config.model, task=task))
        spec = cfg.dataset
        inputs, targets = synth_dataset(spec.n_val, spec.image_size, cfg.task, cfg.noise_sigma,
                                        seed=spec.seed, split='val')
        result = evaluate(build(cfg.model, seed=cfg.seed), cfg.model, inputs, targets)
        assert result.val_psnr == pytest.approx(result.input_psnr, abs=1e-9)

    def test_padded_inputs_are_cropped(self, tiny_run_config):
        """Test images off the tiling multiple train through pad and crop."""
        cfg = replace(tiny_run_config, dataset=replace(tiny_run_config.dataset, image_size=6))
        result = train(cfg)
        assert result.final_row is not None


class TestBaseline:
    """Test cases for baseline_prediction."""

    def test_sr2x_nearest_repeat(self):
        """Test sr2x baseline repeats every pixel 2x2."""
        x = np.arange(4, dtype=np.float32).reshape(1, 2, 2, 1)
        out = baseline_prediction(x, 'sr2x')
        np.testing.assert_array_equal(out[0, :, :, 0], [[0, 0, 1, 1], [0, 0, 1, 1], [2, 2, 3, 3], [2, 2, 3, 3]])

    def test_denoise_identity(self):
        """Test denoise baseline is the noisy input."""
        x = np.ones((1, 2, 2, 1), dtype=np.float32)
        assert baseline_prediction(x, 'denoise') is x


@pytest.mark.slow
class TestToyConvergence:
    """End-to-end toy runs on the bundled configs."""

    def test_denoise_ushape_beats_noisy_input(self, redirect_output):
        """Test 500 iterations lift val PSNR 2 dB above the noisy input."""
        cfg = redirect_output(load_config(str(CONFIG_DIR / 'denoise_ushape.json')))
        result = train(cfg)
        spec = cfg.dataset
        inputs, targets = synth_dataset(spec.n_val, spec.image_size, cfg.task, cfg.noise_sigma,
                                        seed=spec.seed, split='val')
        scores = evaluate(result.params, cfg.model, inputs, targets)
        assert scores.val_psnr >= scores.input_psnr + 2.0

    def test_sr2x_columnar_beats_upsampled_input(self, redirect_output):
        """Test 300 iterations beat the nearest-upsampled input by 0.5 dB."""
        cfg = redirect_output(load_config(str(CONFIG_DIR / 'sr2x_columnar.json')))
        result = train(cfg)
        spec = cfg.dataset
        inputs, targets = synth_dataset(spec.n_val, spec.image_size, cfg.task, cfg.noise_sigma,
                                        seed=spec.seed, split='val')
        scores = evaluate(result.params, cfg.model, inputs, targets)
        assert scores.val_psnr >= scores.input_psnr + 0.5
