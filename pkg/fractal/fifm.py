"""The Fractal-IR layer: level-1/level-2 attention and the convolutional FFN."""

import logging
from dataclasses import dataclass
from typing import Callable

from engine.ops import conv2d, gelu, layer_norm, linear
from engine.tensor import Tensor
from fractal.attention import AttentionConfig, attention_param_shapes, mhsa
from fractal.partition import (
    FractalGeometry,
    fractal_regroup,
    fractal_regroup_reverse,
    window_partition,
    window_reverse,
)

# Configure logging
logger = logging.getLogger(__name__)

VARIANTS = ('v1', 'v3')
CONV_KINDS = ('conv1', 'linear', 'conv3')
ACTIVATIONS = ('gelu', 'identity')
BOTTLENECK_DIVISOR = 4


# Custom Exceptions
class FifmConfigError(ValueError):
    """Raised when a layer configuration is inconsistent."""
    pass


@dataclass(frozen=True)
class FifmConfig:
    """
    Configuration of one Fractal-IR layer.

    ``window`` is p and ``group`` is s; the level-2 region side is s * p. In the
    v3 variant both attention levels share a layer and Q/K use C/2 channels; in
    v1 even layers run level-1 and odd layers level-2 attention at full width.
    """

    channels: int
    window: int = 2
    group: int = 2
    heads: int = 2
    ffn_ratio: float = 2.0
    attention_kind: str = 'dot'
    conv_kind: str = 'conv1'
    variant: str = 'v3'
    l2_enabled: bool = True
    residual_scale: float = 1.0
    activation: str = 'gelu'

    @property
    def region(self) -> int:
        return self.window * self.group

    @property
    def qk_dim(self) -> int:
        return self.channels // 2 if self.variant == 'v3' else self.channels

    @property
    def ffn_width(self) -> int:
        return int(round(self.ffn_ratio * self.channels))

    def geometry(self, height: int, width: int) -> FractalGeometry:
        return FractalGeometry(height, width, self.window, self.group).validate()

    def attention(self, level: int) -> AttentionConfig:
        """Attention config of level 1 or 2; v3 level 1 has no output projection when level 2 follows."""
        project = level == 2 or self.variant == 'v1' or not self.l2_enabled
        return AttentionConfig(
            heads=self.heads,
            model_dim=self.channels,
            qk_dim=self.qk_dim,
            kind=self.attention_kind,
            output_projection=project,
        )

    def levels(self, layer_index: int) -> tuple:
        """Attention levels executed by the layer at ``layer_index``."""
        if self.variant == 'v1':
            return (2,) if layer_index % 2 and self.l2_enabled else (1,)
        return (1, 2) if self.l2_enabled else (1,)

    def validate(self) -> "FifmConfig":
        if self.variant not in VARIANTS:
            raise FifmConfigError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.conv_kind not in CONV_KINDS:
            raise FifmConfigError(f"conv_kind must be one of {CONV_KINDS}, got {self.conv_kind!r}")
        if self.activation not in ACTIVATIONS:
            raise FifmConfigError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")
        if self.ffn_ratio < 1:
            raise FifmConfigError(f"ffn_ratio must be >= 1, got {self.ffn_ratio}")
        if self.residual_scale <= 0:
            raise FifmConfigError(f"residual_scale must be positive, got {self.residual_scale}")
        if min(self.window, self.group) < 1:
            raise FifmConfigError(f"window and group must be positive, got p={self.window}, s={self.group}")
        if self.variant == 'v3' and self.channels % 2:
            raise FifmConfigError(f"v3 halves Q/K width; channels={self.channels} must be even")
        if self.conv_kind == 'conv3' and self.ffn_width % BOTTLENECK_DIVISOR:
            raise FifmConfigError(f"conv3 bottleneck needs FFN width divisible by 4, got {self.ffn_width}")
        for level in (1, 2):
            self.attention(level).validate()
        return self


def conv_block_shapes(kind: str, channels: int) -> dict[str, tuple]:
    """Declared shapes of a channels->channels block of the given kind."""
    if kind == 'conv1':
        return {'w': (3, 3, channels, channels), 'b': (channels,)}
    if kind == 'linear':
        return {'w': (channels, channels), 'b': (channels,)}
    if kind == 'conv3':
        narrow = channels // BOTTLENECK_DIVISOR
        return {
            'w1': (1, 1, channels, narrow), 'b1': (narrow,),
            'w2': (3, 3, narrow, narrow), 'b2': (narrow,),
            'w3': (1, 1, narrow, channels), 'b3': (channels,),
        }
    raise FifmConfigError(f"conv_kind must be one of {CONV_KINDS}, got {kind!r}")


def conv_block_param_count(kind: str, channels: int) -> int:
    total = 0
    for shape in conv_block_shapes(kind, channels).values():
        count = 1
        for extent in shape:
            count *= extent
        total += count
    return total


def layer_param_shapes(cfg: FifmConfig, layer_index: int = 0) -> dict:
    """Nested parameter shapes of the layer at ``layer_index``."""
    c, f = cfg.channels, cfg.ffn_width
    shapes: dict = {
        'ln1_gain': (c,), 'ln1_bias': (c,),
        'ln2_gain': (c,), 'ln2_bias': (c,),
    }
    for level in cfg.levels(layer_index):
        shapes[f'l{level}_attn'] = attention_param_shapes(cfg.attention(level))
    shapes['ffn'] = {
        'expand_w': (c, f), 'expand_b': (f,),
        'block': conv_block_shapes(cfg.conv_kind, f),
        'project_w': (f, c), 'project_b': (c,),
    }
    return shapes


def _activation(cfg: FifmConfig) -> Callable[[Tensor], Tensor]:
    return gelu if cfg.activation == 'gelu' else (lambda t: t)


def apply_conv_block(x: Tensor, kind: str, params: dict, act: Callable[[Tensor], Tensor] = gelu) -> Tensor:
    """Run a conv1 / linear / conv3 block over ``x[B, H, W, C]``."""
    if kind == 'conv1':
        return conv2d(x, params['w'], params['b'])
    if kind == 'linear':
        return linear(x, params['w'], params['b'])
    hidden = act(conv2d(x, params['w1'], params['b1']))
    hidden = act(conv2d(hidden, params['w2'], params['b2']))
    return conv2d(hidden, params['w3'], params['b3'])


def fifm_att(x: Tensor, cfg: FifmConfig, params: dict, layer_index: int = 0) -> Tensor:
    """
    Level-1 window attention followed by level-2 regrouped attention.

    v3 runs both levels inside one call with no projection in between; v1 runs
    one level chosen by the parity of ``layer_index``.

    Args:
        x: Feature map ``[B, H, W, C]``
        cfg: Layer configuration
        params: Layer parameters (``l1_attn`` and/or ``l2_attn`` are read)
        layer_index: Position of the layer in its stage

    Returns:
        Tensor ``[B, H, W, C]``

    Raises:
        GeometryError: If H, W do not tile into P x P regions
    """
    _, height, width, _ = x.shape
    geometry = cfg.geometry(height, width)
    tokens = window_partition(x, cfg.window)
    for level in cfg.levels(layer_index):
        if level == 1:
            tokens = mhsa(tokens, cfg.attention(1), params['l1_attn'])
        else:
            grouped = fractal_regroup(tokens, geometry)
            tokens = fractal_regroup_reverse(mhsa(grouped, cfg.attention(2), params['l2_attn']), geometry)
    return window_reverse(tokens, cfg.window, height, width)


def fifm_conv(x: Tensor, cfg: FifmConfig, params: dict) -> Tensor:
    """
    Convolutional FFN: expand C->gamma*C, activation, spatial block, activation, project back.

    Args:
        x: Feature map ``[B, H, W, C]``
        cfg: Layer configuration
        params: Layer parameters (``ffn`` is read)

    Returns:
        Tensor ``[B, H, W, C]``
    """
    ffn = params['ffn']
    act = _activation(cfg)
    hidden = act(linear(x, ffn['expand_w'], ffn['expand_b']))
    hidden = act(apply_conv_block(hidden, cfg.conv_kind, ffn['block'], act))
    return linear(hidden, ffn['project_w'], ffn['project_b'])


def fractal_ir_layer(x: Tensor, cfg: FifmConfig, params: dict, layer_index: int = 0) -> Tensor:
    """
    One pre-norm layer: X' = Att(LN(X)) + X, then X_out = Conv(LN(X')) + X'.

    Both branches are multiplied by ``cfg.residual_scale`` when it differs from 1.
    """
    branch = fifm_att(layer_norm(x, params['ln1_gain'], params['ln1_bias']), cfg, params, layer_index)
    if cfg.residual_scale != 1.0:
        branch = branch * cfg.residual_scale
    mid = x + branch

    branch = fifm_conv(layer_norm(mid, params['ln2_gain'], params['ln2_bias']), cfg, params)
    if cfg.residual_scale != 1.0:
        branch = branch * cfg.residual_scale
    return mid + branch
