"""Tests for the tensor value type and reverse-mode tape."""

import os
import subprocess
import sys
import textwrap
from pathlib import Path

import numpy as np
import pytest

from engine import BLAS_THREAD_VARS, cap_blas_threads
from engine.tensor import DimensionError, Tensor, UsageError, backward, is_grad_enabled, no_grad

REPO_ROOT = Path(__file__).resolve().parent.parent


class TestTensor:
    """Test cases for Tensor construction and shape maps."""

    def test_float64_arrays_keep_dtype(self):
        """Test float64 input is stored without conversion."""
        t = Tensor(np.zeros((2, 3)))
        assert t.dtype == np.float64
        assert t.shape == (2, 3)
        assert t.size == 6

    def test_lists_default_to_float32(self):
        """Test non-array input is stored in training precision."""
        assert Tensor([1, 2, 3]).dtype == np.float32

    def test_reshape_permute_round_trip_exact(self, rng):
        """Test reshape and permute are exact bijections."""
        x = Tensor(rng.standard_normal((2, 3, 4)))
        back = x.permute(2, 0, 1).reshape(4, 6).reshape(4, 2, 3).permute(1, 2, 0)
        np.testing.assert_array_equal(back.data, x.data)

    def test_reshape_mismatch_raises(self):
        """Test reshape to an incompatible size raises DimensionError."""
        with pytest.raises(DimensionError):
            Tensor(np.zeros((2, 3))).reshape(4, 2)

    def test_invalid_permutation_raises(self):
        """Test a non-permutation of axes raises DimensionError."""
        with pytest.raises(DimensionError):
            Tensor(np.zeros((2, 3))).permute(0, 0)


class TestBackward:
    """Test cases for backward()."""

    def test_sum_gives_ones(self, rng):
        """Test d sum(x) / dx = 1."""
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        grads = backward(x.sum())
        np.testing.assert_array_equal(grads[x], np.ones((3, 4)))

    def test_square_gives_two_x(self, rng):
        """Test d sum(x*x) / dx = 2x."""
        x = Tensor(rng.standard_normal(5), requires_grad=True)
        grads = backward((x * x).sum())
        np.testing.assert_allclose(grads[x], 2 * x.data, rtol=1e-15)

    def test_multiple_consumers_are_summed(self, rng):
        """Test a tensor used three times receives all three contributions."""
        x = Tensor(rng.standard_normal(4), requires_grad=True)
        grads = backward((x * x + x).sum())
        np.testing.assert_allclose(grads[x], 2 * x.data + 1, rtol=1e-15)

    def test_broadcast_gradient_is_reduced(self, rng):
        """Test a broadcast bias gets the sum over broadcast rows."""
        x = Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = Tensor(rng.standard_normal(4), requires_grad=True)
        grads = backward((x + b).sum())
        np.testing.assert_array_equal(grads[b], np.full(4, 3.0))

    def test_leaf_grad_attribute_is_set(self, rng):
        """Test backward also stores gradients on the leaves."""
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        backward((x * 3.0).sum())
        np.testing.assert_allclose(x.grad, np.full(3, 3.0))

    def test_non_scalar_loss_raises(self, rng):
        """Test a non-scalar loss is a usage error."""
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        with pytest.raises(UsageError):
            backward(x * 2.0)

    def test_loss_without_graph_raises(self):
        """Test a loss that depends on no grad tensor is a usage error."""
        with pytest.raises(UsageError):
            backward(Tensor(np.ones(3)).sum())

    def test_no_grad_disables_recording(self, rng):
        """Test operations inside no_grad do not join the graph."""
        x = Tensor(rng.standard_normal(3), requires_grad=True)
        with no_grad():
            assert not is_grad_enabled()
            y = (x * x).sum()
        assert is_grad_enabled()
        assert not y.requires_grad

    def test_exp_and_division(self, rng):
        """Test gradients of exp and division against closed forms."""
        a = Tensor(rng.standard_normal(4), requires_grad=True)
        b = Tensor(rng.uniform(1, 2, 4), requires_grad=True)
        grads = backward((a.exp() / b).sum())
        np.testing.assert_allclose(grads[a], np.exp(a.data) / b.data, rtol=1e-14)
        np.testing.assert_allclose(grads[b], -np.exp(a.data) / b.data ** 2, rtol=1e-14)


class TestBlasThreadCap:
    """Test cases for cap_blas_threads."""

    def test_project_variable_overrides_inherited(self):
        """Test FRACTAL_IR_THREADS wins over an inherited OMP_NUM_THREADS."""
        environ = {'FRACTAL_IR_THREADS': '3', 'OMP_NUM_THREADS': '8'}
        cap_blas_threads(environ)
        assert all(environ[var] == '3' for var in BLAS_THREAD_VARS)

    def test_defaults_to_one_thread(self):
        """Test unset pools default to one thread and set ones are kept."""
        environ = {'MKL_NUM_THREADS': '4'}
        cap_blas_threads(environ)
        assert environ == {'OMP_NUM_THREADS': '1', 'OPENBLAS_NUM_THREADS': '1', 'MKL_NUM_THREADS': '4'}

    def test_cap_applied_before_numpy_loads(self):
        """Test importing the CLI sets the cap before the first numpy import."""
        code = textwrap.dedent('''
            import importlib.abc, os, sys
            seen = []

            class Watch(importlib.abc.MetaPathFinder):
                def find_spec(self, name, path, target=None):
                    if name == 'numpy' and not seen:
                        seen.append(os.environ.get('OMP_NUM_THREADS'))
                    return None

            sys.meta_path.insert(0, Watch())
            import cli
            print(seen[0])
        ''')
        env = {**os.environ, 'FRACTAL_IR_THREADS': '3', 'OMP_NUM_THREADS': '8'}
        result = subprocess.run([sys.executable, '-c', code], cwd=REPO_ROOT, env=env,
                                capture_output=True, text=True, check=True)
        assert result.stdout.strip() == '3'
