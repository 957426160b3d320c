"""Columnar and U-shaped Fractal-IR networks, parameter trees and conv substitution."""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Optional

import numpy as np

from engine.ops import concat, conv2d, pixel_shuffle
from engine.tensor import Tensor
from fractal.fifm import CONV_KINDS, FifmConfig, FifmConfigError, conv_block_shapes, fractal_ir_layer, layer_param_shapes
from fractal.init import INIT_SCHEMES, RESIDUAL_RESCALE, initialize

# Configure logging
logger = logging.getLogger(__name__)

ARCHS = ('columnar', 'ushape')
TASKS = ('denoise', 'sr2x')
USHAPE_LEVELS = (0, 1, 2, 3, 2, 1, 0)
SR_SCALE = 2


# Custom Exceptions
class ModelConfigError(ValueError):
    """Raised when a model configuration cannot be built."""
    pass


def _default_geometry(arch: str) -> tuple:
    if arch == 'ushape':
        return ((2, 2), (2, 2), (2, 2), (1, 2), (2, 2), (2, 2), (2, 2))
    return ((2, 2),)


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture of a desk-scale Fractal-IR model.

    ``geometry`` lists one (p, s) pair per stage; a single pair is reused for
    every stage. The U-shape always has seven stages: three encoder levels, a
    latent at H/8 x W/8 and three decoder levels, with channels doubling per level.
    """

    arch: str = 'columnar'
    task: str = 'denoise'
    channels: int = 16
    image_channels: int = 1
    stages: Optional[int] = None
    layers_per_stage: Optional[int] = None
    geometry: tuple = field(default_factory=tuple)
    heads: int = 2
    ffn_ratio: float = 2.0
    attention_kind: str = 'dot'
    conv_kind: str = 'conv1'
    variant: str = 'v3'
    l2_enabled: bool = True
    activation: str = 'gelu'
    init_scheme: str = 'kaiming_fan_in'

    @property
    def stage_count(self) -> int:
        if self.stages is not None:
            return self.stages
        return len(USHAPE_LEVELS) if self.arch == 'ushape' else 2

    @property
    def depth(self) -> int:
        if self.layers_per_stage is not None:
            return self.layers_per_stage
        return 1 if self.arch == 'ushape' else 2

    @property
    def levels(self) -> tuple:
        return USHAPE_LEVELS if self.arch == 'ushape' else (0,) * self.stage_count

    def stage_geometry(self, stage: int) -> tuple:
        pairs = self.geometry or _default_geometry(self.arch)
        return tuple(pairs[stage] if len(pairs) > 1 else pairs[0])

    def stage_channels(self, stage: int) -> int:
        return self.channels * 2 ** self.levels[stage]

    def layer_config(self, stage: int) -> FifmConfig:
        window, group = self.stage_geometry(stage)
        return FifmConfig(
            channels=self.stage_channels(stage),
            window=window,
            group=group,
            heads=self.heads,
            ffn_ratio=self.ffn_ratio,
            attention_kind=self.attention_kind,
            conv_kind=self.conv_kind,
            variant=self.variant,
            l2_enabled=self.l2_enabled,
            residual_scale=RESIDUAL_RESCALE if self.init_scheme == 'residual_rescale' else 1.0,
            activation=self.activation,
        )

    def validate(self) -> "ModelConfig":
        """
        Check the configuration.

        Raises:
            ModelConfigError: For unknown choices, bad counts or an invalid stage layout
        """
        if self.arch not in ARCHS:
            raise ModelConfigError(f"arch must be one of {ARCHS}, got {self.arch!r}")
        if self.task not in TASKS:
            raise ModelConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if self.init_scheme not in INIT_SCHEMES:
            raise ModelConfigError(f"init_scheme must be one of {INIT_SCHEMES}, got {self.init_scheme!r}")
        if min(self.channels, self.image_channels, self.stage_count, self.depth) < 1:
            raise ModelConfigError("channels, image_channels, stages and layers_per_stage must be >= 1")
        if self.arch == 'ushape' and self.stage_count != len(USHAPE_LEVELS):
            raise ModelConfigError(f"ushape has exactly {len(USHAPE_LEVELS)} stages, got {self.stage_count}")
        pairs = self.geometry or _default_geometry(self.arch)
        if len(pairs) not in (1, self.stage_count) or any(len(pair) != 2 for pair in pairs):
            raise ModelConfigError(
                f"geometry needs one (p, s) pair or one per stage ({self.stage_count}), got {pairs}"
            )
        for stage in range(self.stage_count):
            try:
                self.layer_config(stage).validate()
            except (FifmConfigError, ValueError) as e:
                logger.error(f"Stage {stage} layer config invalid: {e}")
                raise ModelConfigError(f"Stage {stage}: {e}") from e
        return self


def patch_multiple(cfg: ModelConfig) -> int:
    """Smallest side that every stage tiles exactly: lcm over stages of P * 2^level."""
    multiple = 1
    for stage, level in enumerate(cfg.levels):
        window, group = cfg.stage_geometry(stage)
        multiple = math.lcm(multiple, window * group * 2 ** level)
    return multiple


def _conv_shapes(k: int, c_in: int, c_out: int) -> dict:
    return {'w': (k, k, c_in, c_out), 'b': (c_out,)}


def param_shapes(cfg: ModelConfig) -> dict:
    """Nested shape tree of the whole model."""
    c, ch = cfg.channels, cfg.image_channels
    shapes: dict = {'shallow': _conv_shapes(3, ch, c)}
    shapes['stages'] = [
        [layer_param_shapes(cfg.layer_config(stage), index) for index in range(cfg.depth)]
        for stage in range(cfg.stage_count)
    ]
    if cfg.arch == 'ushape':
        encoder = [cfg.channels * 2 ** level for level in range(3)]
        shapes['down'] = [_conv_shapes(3, ci, 2 * ci) for ci in encoder]
        # decoder order: deepest level first
        shapes['up'] = [_conv_shapes(1, 2 * ci, 4 * ci) for ci in reversed(encoder)]
        shapes['fuse'] = [_conv_shapes(1, 2 * ci, ci) for ci in reversed(encoder)]
    if cfg.task == 'sr2x':
        shapes['head'] = _conv_shapes(3, c, ch * SR_SCALE * SR_SCALE)
    else:
        shapes['head'] = _conv_shapes(1, c, ch)
    return shapes


def _is_residual(name: str) -> bool:
    return name.startswith('stages.')


def is_zero_init(name: str) -> bool:
    """The reconstruction head starts at zero so an untrained model returns its global skip."""
    return name.startswith('head.')


def build(cfg: ModelConfig, seed: int = 0, dtype: Any = np.float32) -> dict:
    """
    Create and initialize a parameter tree.

    The reconstruction head starts at zero under every scheme.

    Args:
        cfg: Model configuration
        seed: Initialization seed
        dtype: Parameter dtype (float64 for gradient probes)

    Returns:
        Nested dict/list tree of leaf Tensors

    Raises:
        ModelConfigError: If the configuration is invalid
    """
    cfg.validate()
    params = initialize(param_shapes(cfg), cfg.init_scheme, seed, dtype=dtype,
                        is_residual=_is_residual, is_zero=is_zero_init)
    logger.info(
        f"Built {cfg.arch}/{cfg.task} model: {parameter_count(params)} parameters, "
        f"init {cfg.init_scheme}, seed {seed}"
    )
    return params


def _run_stage(x: Tensor, cfg: ModelConfig, stage: int, layers: list) -> Tensor:
    layer_cfg = cfg.layer_config(stage)
    for index, layer_params in enumerate(layers):
        x = fractal_ir_layer(x, layer_cfg, layer_params, index)
    return x


def _nearest_upsample(x: Tensor, r: int) -> Tensor:
    batch, height, width, channels = x.shape
    column = x.reshape(batch, height, width, channels, 1)
    tiled = concat([column] * (r * r), axis=-1).reshape(batch, height, width, channels * r * r)
    return pixel_shuffle(tiled, r)


def forward(params: dict, x: Tensor, cfg: ModelConfig, use_skips: bool = True) -> Tensor:
    """
    Restore a batch of images.

    Args:
        params: Tree from :func:`build`
        x: Degraded images ``[B, H, W, image_channels]``; H, W multiples of :func:`patch_multiple`
        cfg: Model configuration used to build ``params``
        use_skips: U-shape only; False replaces encoder skips with zeros

    Returns:
        ``[B, H, W, ch]`` for denoise (input added back), ``[B, 2H, 2W, ch]`` for sr2x
        (nearest-upsampled input added back)

    Raises:
        ModelConfigError: If the input does not match the configuration
    """
    if x.ndim != 4 or x.shape[3] != cfg.image_channels:
        logger.error(f"Input {x.shape} does not match image_channels={cfg.image_channels}")
        raise ModelConfigError(f"Input {x.shape} does not match image_channels={cfg.image_channels}")
    multiple = patch_multiple(cfg)
    if x.shape[1] % multiple or x.shape[2] % multiple:
        logger.error(f"Input {x.shape[1]}x{x.shape[2]} is not a multiple of {multiple}")
        raise ModelConfigError(f"H, W must be multiples of {multiple}; pad the input first")

    features = conv2d(x, params['shallow']['w'], params['shallow']['b'])
    if cfg.arch == 'columnar':
        for stage, layers in enumerate(params['stages']):
            features = _run_stage(features, cfg, stage, layers)
    else:
        skips = []
        for stage in range(3):
            features = _run_stage(features, cfg, stage, params['stages'][stage])
            skips.append(features)
            down = params['down'][stage]
            features = conv2d(features, down['w'], down['b'], stride=2)
        features = _run_stage(features, cfg, 3, params['stages'][3])
        for step in range(3):
            up, fuse = params['up'][step], params['fuse'][step]
            features = pixel_shuffle(conv2d(features, up['w'], up['b']), 2)
            skip = skips[2 - step]
            if not use_skips:
                skip = Tensor(np.zeros(skip.shape, dtype=skip.dtype))
            features = conv2d(concat([features, skip], axis=-1), fuse['w'], fuse['b'])
            features = _run_stage(features, cfg, 4 + step, params['stages'][4 + step])

    head = params['head']
    out = conv2d(features, head['w'], head['b'])
    if cfg.task == 'sr2x':
        return pixel_shuffle(out, SR_SCALE) + _nearest_upsample(x, SR_SCALE)
    return out + x


def substitute_conv_kind(params: dict, cfg: ModelConfig, new_kind: str, seed: int = 0) -> tuple:
    """
    Swap the FFN spatial block of every layer for ``new_kind``.

    Only the ``ffn.block`` subtrees are rebuilt (re-initialized with the model's
    scheme); every other tensor is carried over unchanged.

    Returns:
        ``(new_params, new_cfg)``

    Raises:
        ModelConfigError: If ``new_kind`` is unknown
    """
    if new_kind not in CONV_KINDS:
        raise ModelConfigError(f"conv_kind must be one of {CONV_KINDS}, got {new_kind!r}")
    if new_kind == cfg.conv_kind:
        return params, cfg
    new_cfg = replace(cfg, conv_kind=new_kind).validate()

    stages = []
    for stage, layers in enumerate(params['stages']):
        width = new_cfg.layer_config(stage).ffn_width
        rebuilt = []
        for index, layer in enumerate(layers):
            ffn = dict(layer['ffn'])
            ffn['block'] = initialize(
                conv_block_shapes(new_kind, width),
                cfg.init_scheme,
                seed=[seed, stage, index],
                dtype=ffn['expand_w'].dtype,
                is_residual=_is_residual,
                prefix=f'stages.{stage}.{index}.ffn.block',
            )
            rebuilt.append({**layer, 'ffn': ffn})
        stages.append(rebuilt)
    logger.info(f"Substituted conv kind {cfg.conv_kind} -> {new_kind}")
    return {**params, 'stages': stages}, new_cfg


def parameter_count(params: Any) -> int:
    return sum(tensor.size for tensor in flatten_params(params).values())


def flatten_params(params: Any, prefix: str = '') -> dict[str, Tensor]:
    """Map every leaf to its dotted name; list positions become integer segments."""
    flat: dict[str, Tensor] = {}
    if isinstance(params, Tensor):
        flat[prefix] = params
        return flat
    items = params.items() if isinstance(params, dict) else enumerate(params)
    for key, child in items:
        name = f"{prefix}.{key}" if prefix else str(key)
        flat.update(flatten_params(child, name))
    return flat


def unflatten_params(flat: dict[str, Tensor]) -> dict:
    """Inverse of :func:`flatten_params`; levels whose keys are all integers become lists."""
    root: dict = {}
    for name, tensor in flat.items():
        node = root
        *parents, leaf = name.split('.')
        for part in parents:
            node = node.setdefault(part, {})
        node[leaf] = tensor

    def _listify(node: Any) -> Any:
        if not isinstance(node, dict):
            return node
        children = {key: _listify(child) for key, child in node.items()}
        if children and all(key.isdigit() for key in children):
            return [children[str(i)] for i in range(len(children))]
        return children

    return _listify(root)
