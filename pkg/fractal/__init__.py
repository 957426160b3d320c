"""Fractal-IR layers: partition geometry, attention, FIFM layer and models."""

import engine  # noqa: F401  sets BLAS thread caps before numpy loads
from fractal.partition import (
    FractalGeometry,
    IndexMap,
    window_partition,
    window_reverse,
    fractal_regroup,
    fractal_regroup_reverse,
    index_map_oracle,
    GeometryError,
)
from fractal.attention import (
    AttentionConfig,
    mhsa,
    attention_weights,
    grad_dot_closed_form,
    grad_cos_closed_form,
    gradient_magnitude_experiment,
    AttentionConfigError,
    DomainError,
)
from fractal.fifm import FifmConfig, fifm_att, fifm_conv, fractal_ir_layer, conv_block_param_count, FifmConfigError
from fractal.init import init_stats, InitSchemeError
from fractal.models import (
    ModelConfig,
    build,
    forward,
    substitute_conv_kind,
    parameter_count,
    flatten_params,
    unflatten_params,
    patch_multiple,
    is_zero_init,
    ModelConfigError,
)

__all__ = [
    'FractalGeometry',
    'IndexMap',
    'window_partition',
    'window_reverse',
    'fractal_regroup',
    'fractal_regroup_reverse',
    'index_map_oracle',
    'AttentionConfig',
    'mhsa',
    'attention_weights',
    'grad_dot_closed_form',
    'grad_cos_closed_form',
    'gradient_magnitude_experiment',
    'FifmConfig',
    'fifm_att',
    'fifm_conv',
    'fractal_ir_layer',
    'conv_block_param_count',
    'init_stats',
    'is_zero_init',
    'ModelConfig',
    'build',
    'forward',
    'substitute_conv_kind',
    'parameter_count',
    'flatten_params',
    'unflatten_params',
    'patch_multiple',
    'GeometryError',
    'AttentionConfigError',
    'DomainError',
    'FifmConfigError',
    'InitSchemeError',
    'ModelConfigError',
]
