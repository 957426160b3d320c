"""Finite-difference suite over every differentiable op and the Fractal-IR layer."""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from engine import ops
from engine.gradcheck import finite_diff_check
from engine.tensor import Tensor
from fractal.attention import AttentionConfig, attention_param_shapes, mhsa
from fractal.fifm import FifmConfig, fifm_att, fifm_conv, fractal_ir_layer, layer_param_shapes
from fractal.init import initialize
from fractal.models import flatten_params, unflatten_params

# Configure logging
logger = logging.getLogger(__name__)

OP_TOLERANCE = 1e-5
LAYER_TOLERANCE = 1e-4


@dataclass(frozen=True)
class GradcheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.error <= self.tolerance


def _tree_check(name: str, fn: Callable[[Tensor, dict], Tensor], x: Tensor, params: dict) -> GradcheckResult:
    flat = flatten_params(params)
    names = list(flat)

    def _call(x_: Tensor, *leaves: Tensor) -> Tensor:
        return fn(x_, unflatten_params(dict(zip(names, leaves))))

    error = finite_diff_check(_call, [x, *flat.values()])
    return GradcheckResult(name, error, LAYER_TOLERANCE)


def tiny_layer_config(**overrides: object) -> FifmConfig:
    """The B=1, H=W=4, C=4, p=2, s=2, h=2 layer the suite differentiates."""
    settings = dict(channels=4, window=2, group=2, heads=2)
    settings.update(overrides)
    return FifmConfig(**settings).validate()


def run_gradient_suite(seed: int = 0) -> list[GradcheckResult]:
    """
    Check every differentiable op and the full layer against central differences in float64.

    Returns:
        One GradcheckResult per case
    """
    rng = np.random.default_rng(seed)

    def t(*shape: int) -> Tensor:
        return Tensor(rng.standard_normal(shape))

    op_cases = [
        ('matmul', ops.matmul, [t(2, 3, 4), t(2, 4, 5)]),
        ('linear', ops.linear, [t(2, 3, 4), t(4, 5), t(5)]),
        ('softmax_last', ops.softmax_last, [t(2, 6)]),
        ('layer_norm', ops.layer_norm, [t(3, 5), t(5), t(5)]),
        ('gelu', ops.gelu, [t(2, 7)]),
        ('l2_normalize', ops.l2_normalize, [t(3, 4)]),
        ('conv2d_3x3', ops.conv2d, [t(1, 5, 5, 2), t(3, 3, 2, 3), t(3)]),
        ('conv2d_3x3_stride2', lambda x, w: ops.conv2d(x, w, stride=2), [t(1, 6, 6, 2), t(3, 3, 2, 2)]),
        ('conv2d_1x1', ops.conv2d, [t(2, 3, 3, 3), t(1, 1, 3, 2), t(2)]),
        ('pixel_shuffle', lambda x: ops.pixel_shuffle(x, 2), [t(1, 2, 2, 8)]),
        ('exp_div', lambda a, b: a.exp() / (b * b + 1.0), [t(4), t(4)]),
    ]
    results = [GradcheckResult(name, finite_diff_check(fn, inputs), OP_TOLERANCE) for name, fn, inputs in op_cases]

    for kind in ('dot', 'cosine'):
        cfg = AttentionConfig(heads=2, model_dim=4, qk_dim=4, kind=kind).validate()
        params = initialize(attention_param_shapes(cfg), 'kaiming_fan_in', [seed, 1], dtype=np.float64)
        results.append(_tree_check(f'mhsa_{kind}', lambda x, p, c=cfg: mhsa(x, c, p), t(3, 4, 4), params))

    layer_cfg = tiny_layer_config()
    layer_params = initialize(layer_param_shapes(layer_cfg), 'kaiming_fan_in', [seed, 2], dtype=np.float64)
    x = t(1, 4, 4, 4)
    results.append(_tree_check('fifm_att', lambda x_, p: fifm_att(x_, layer_cfg, p), x, layer_params))
    results.append(_tree_check('fifm_conv', lambda x_, p: fifm_conv(x_, layer_cfg, p), x, layer_params))
    results.append(_tree_check('fractal_ir_layer', lambda x_, p: fractal_ir_layer(x_, layer_cfg, p), x, layer_params))

    for result in results:
        level = logging.INFO if result.passed else logging.ERROR
        logger.log(level, f"gradcheck {result.name}: {result.error:.3e} (tol {result.tolerance:.0e})")
    return results
