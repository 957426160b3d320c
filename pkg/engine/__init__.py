"""Dense tensor engine with reverse-mode differentiation."""

import os
from typing import MutableMapping

BLAS_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def cap_blas_threads(environ: MutableMapping[str, str] = os.environ) -> None:
    """Pin BLAS pools to ``FRACTAL_IR_THREADS``; without it, default unset pools to one thread."""
    threads = environ.get("FRACTAL_IR_THREADS")
    for var in BLAS_THREAD_VARS:
        if threads is not None:
            environ[var] = threads
        else:
            environ.setdefault(var, "1")


# BLAS thread caps must be in place before numpy loads
cap_blas_threads()

from engine.tensor import Tensor, backward, no_grad, is_grad_enabled, DimensionError, UsageError
from engine.ops import (
    matmul,
    linear,
    softmax_last,
    layer_norm,
    conv2d,
    pixel_shuffle,
    pixel_unshuffle,
    gelu,
    concat,
    crop_spatial,
    ConvConfigError,
)
from engine.gradcheck import finite_diff_check
from engine.profiler import FlopCounter, count_flops

__all__ = [
    'BLAS_THREAD_VARS',
    'cap_blas_threads',
    'Tensor',
    'backward',
    'no_grad',
    'is_grad_enabled',
    'matmul',
    'linear',
    'softmax_last',
    'layer_norm',
    'conv2d',
    'pixel_shuffle',
    'pixel_unshuffle',
    'gelu',
    'concat',
    'crop_spatial',
    'finite_diff_check',
    'FlopCounter',
    'count_flops',
    'DimensionError',
    'UsageError',
    'ConvConfigError',
]
