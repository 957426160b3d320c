"""Gradient-support probes of the receptive field."""

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from engine.tensor import Tensor, backward
from fractal.fifm import FifmConfig, fifm_att, fractal_ir_layer, layer_param_shapes
from fractal.init import initialize

# Configure logging
logger = logging.getLogger(__name__)

SUPPORT_THRESHOLD = 1e-12
PROBE_MODES = ('layer', 'att')


@dataclass(frozen=True)
class ProbeResult:
    """Input pixels whose gradient reaches the probed output pixel."""

    mask: np.ndarray
    top: int
    left: int
    bottom: int
    right: int

    @property
    def height(self) -> int:
        return self.bottom - self.top + 1

    @property
    def width(self) -> int:
        return self.right - self.left + 1

    @property
    def side(self) -> int:
        return max(self.height, self.width)

    @property
    def support_size(self) -> int:
        return int(self.mask.sum())

    def is_rectangle(self) -> bool:
        """True when the support fills its bounding box exactly."""
        return self.support_size == self.height * self.width


def receptive_field_probe(
    fn: Callable[[Tensor], Tensor],
    input_shape: tuple,
    pixel: tuple,
    seed: int = 0,
    threshold: float = SUPPORT_THRESHOLD,
) -> ProbeResult:
    """
    Differentiate one output pixel of ``fn`` with respect to its input.

    The output pixel's channels are reduced with random weights, so no channel
    cancels by accident; the input is random float64.

    Args:
        fn: Map ``[B, H, W, C] -> [B, H, W, C']``
        input_shape: ``(B, H, W, C)``
        pixel: ``(row, col)`` of the probed output pixel in batch item 0
        seed: RNG seed for input and channel weights
        threshold: Minimum |grad| counted as support

    Returns:
        ProbeResult with the HxW support mask and its bounding box
    """
    rng = np.random.default_rng(seed)
    x = Tensor(rng.standard_normal(input_shape), requires_grad=True)
    out = fn(x)

    selector = np.zeros(out.shape)
    selector[0, pixel[0], pixel[1], :] = rng.uniform(0.5, 1.5, size=out.shape[3])
    grads = backward((out * Tensor(selector)).sum())
    grad = grads.get(x, np.zeros(x.shape))

    mask = np.abs(grad).max(axis=(0, 3)) > threshold
    rows, cols = np.nonzero(mask)
    if rows.size == 0:
        logger.warning(f"Empty gradient support for pixel {pixel}")
        return ProbeResult(mask=mask, top=0, left=0, bottom=-1, right=-1)
    result = ProbeResult(mask=mask, top=int(rows.min()), left=int(cols.min()),
                         bottom=int(rows.max()), right=int(cols.max()))
    logger.debug(f"Pixel {pixel}: support {result.support_size} px, box {result.height}x{result.width}")
    return result


def probe_layer_stack(
    cfg: FifmConfig,
    n_layers: int,
    size: int,
    pixel: tuple,
    mode: str = 'layer',
    seed: int = 0,
    params: Optional[list] = None,
) -> ProbeResult:
    """
    Probe a stack of ``n_layers`` Fractal-IR layers (``mode='layer'``) or bare
    fifm_att blocks (``mode='att'``) on a ``size`` x ``size`` single-image input.
    """
    if mode not in PROBE_MODES:
        raise ValueError(f"mode must be one of {PROBE_MODES}, got {mode!r}")
    if params is None:
        params = [
            initialize(layer_param_shapes(cfg, index), 'kaiming_fan_in', [seed, index], dtype=np.float64)
            for index in range(n_layers)
        ]
    block = fractal_ir_layer if mode == 'layer' else fifm_att

    def _stack(x: Tensor) -> Tensor:
        for index, layer_params in enumerate(params):
            x = block(x, cfg, layer_params, index)
        return x

    return receptive_field_probe(_stack, (1, size, size, cfg.channels), pixel, seed=seed)


def measured_receptive_field(cfg: FifmConfig, size: int, seed: int = 0) -> int:
    """Bounding-box side of two consecutive layers probed at the image centre."""
    centre = (size // 2, size // 2)
    return probe_layer_stack(cfg, 2, size, centre, mode='layer', seed=seed).side
